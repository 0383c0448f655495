//! Ranking metrics over scored option sets.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::example::Example;
use crate::model::SfModel;
use crate::text::ImageFeatureStore;
use crate::Task;

/// Rank of the ground truth, counting ties against it:
/// `1 + |{ j != gt : scores[j] >= scores[gt] }|`.
pub fn rank_of_gt(scores: &[f64], gt_index: usize) -> Result<usize> {
    let s = *scores.get(gt_index).ok_or_else(|| {
        Error::Index(format!("ground truth {gt_index} outside {} scores", scores.len()))
    })?;
    if scores.iter().any(|x| x.is_nan()) {
        return Err(Error::Argument("NaN score".into()));
    }
    Ok(1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &x)| j != gt_index && x >= s)
        .count())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mrr: f64,
    /// Percentages.
    pub r_at_1: f64,
    pub r_at_5: f64,
    pub r_at_10: f64,
    pub mean_rank: f64,
    pub n: usize,
}

pub fn compute_metrics(ranks: &[usize], k: usize) -> Result<MetricsReport> {
    if ranks.is_empty() {
        return Err(Error::Argument("no ranks to aggregate".into()));
    }
    if let Some(&r) = ranks.iter().find(|&&r| r == 0 || r > k) {
        return Err(Error::Argument(format!("rank {r} outside [1, {k}]")));
    }
    let n = ranks.len() as f64;
    let recall = |cut: usize| 100.0 * ranks.iter().filter(|&&r| r <= cut).count() as f64 / n;
    Ok(MetricsReport {
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        r_at_1: recall(1),
        r_at_5: recall(5),
        r_at_10: recall(10),
        mean_rank: ranks.iter().sum::<usize>() as f64 / n,
        n: ranks.len(),
    })
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n={} mrr={:.4} r@1={:.2} r@5={:.2} r@10={:.2} mean_rank={:.2} ties=pessimistic",
            self.n, self.mrr, self.r_at_1, self.r_at_5, self.r_at_10, self.mean_rank
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankEntry {
    pub image_id: u64,
    pub round: usize,
    pub rank: usize,
    pub gt_index: usize,
    pub n_options: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub ranks: Vec<RankEntry>,
}

impl Evaluation {
    /// One `image_id round rank gt_index` line per round.
    pub fn write_rank_log(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# image_id round rank gt_index")?;
        for e in &self.ranks {
            writeln!(out, "{} {} {} {}", e.image_id, e.round, e.rank, e.gt_index)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Reads a rank log back as `(image_id, round, rank, gt_index)` rows.
pub fn read_rank_log(path: impl AsRef<Path>) -> Result<Vec<(u64, usize, usize, usize)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::load(path, format!("line {}: expected 4 integers", i + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        rows.push((
            f[0].parse().map_err(|_| bad())?,
            f[1].parse().map_err(|_| bad())?,
            f[2].parse().map_err(|_| bad())?,
            f[3].parse().map_err(|_| bad())?,
        ));
    }
    Ok(rows)
}

/// Eval-mode scoring of every example. `K` for the metric bounds is the
/// largest option count seen.
pub fn evaluate(model: &SfModel, examples: &[Example], features: Option<&ImageFeatureStore>) -> Result<Evaluation> {
    let ranks = examples
        .par_iter()
        .map(|ex| {
            let scored = model.score_example(ex, features)?;
            Ok(RankEntry {
                image_id: ex.image_id,
                round: ex.round,
                rank: rank_of_gt(&scored.scores, ex.gt_index)?,
                gt_index: ex.gt_index,
                n_options: ex.options.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k = ranks.iter().map(|r| r.n_options).max().unwrap_or(0);
    let flat: Vec<usize> = ranks.iter().map(|r| r.rank).collect();
    Ok(Evaluation {
        report: compute_metrics(&flat, k)?,
        ranks,
    })
}

/// [`evaluate`] after checking the model was trained for `task`.
pub fn evaluate_model(
    model: &SfModel,
    task: Task,
    examples: &[Example],
    features: Option<&ImageFeatureStore>,
) -> Result<Evaluation> {
    let have = model.config().task;
    if have != task {
        return Err(Error::Mismatch(format!("checkpoint was trained for {have}, asked to evaluate {task}")));
    }
    evaluate(model, examples, features)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_max_ranks_first() {
        assert_eq!(rank_of_gt(&[0.1, 3.0, -1.0], 1).unwrap(), 1);
    }

    #[test]
    fn ties_count_against() {
        assert_eq!(rank_of_gt(&[2.0; 7], 3).unwrap(), 7);
        assert_eq!(rank_of_gt(&[1.0, 2.0, 2.0], 1).unwrap(), 2);
    }

    #[test]
    fn out_of_range_gt() {
        assert!(matches!(rank_of_gt(&[1.0], 1), Err(Error::Index(_))));
    }

    #[test]
    fn perfect_ranks() {
        let m = compute_metrics(&[1, 1, 1], 100).unwrap();
        assert_eq!((m.mrr, m.r_at_1, m.r_at_5, m.r_at_10, m.mean_rank), (1.0, 100.0, 100.0, 100.0, 1.0));
    }

    #[test]
    fn mixed_ranks() {
        let m = compute_metrics(&[1, 2, 10], 100).unwrap();
        assert!((m.mrr - 1.6 / 3.0).abs() < 1e-15);
        assert!((m.r_at_1 - 100.0 / 3.0).abs() < 1e-12);
        assert!((m.r_at_5 - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.r_at_10, 100.0);
        assert!((m.mean_rank - 13.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_ranks() {
        assert!(compute_metrics(&[], 10).is_err());
        assert!(compute_metrics(&[0], 10).is_err());
        assert!(compute_metrics(&[11], 10).is_err());
    }

    #[test]
    fn rank_log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ev = Evaluation {
            report: compute_metrics(&[3], 5).unwrap(),
            ranks: vec![RankEntry { image_id: 7, round: 2, rank: 3, gt_index: 4, n_options: 5 }],
        };
        let p = dir.path().join("ranks.txt");
        ev.write_rank_log(&p).unwrap();
        assert_eq!(read_rank_log(&p).unwrap(), vec![(7, 2, 3, 4)]);
    }
}

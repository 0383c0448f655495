//! Bot-vs-bot dialogs: a follow-up-question model picks the next question
//! from options gathered on nearest-neighbour images, an answer model picks
//! its answer, and the pair joins the history.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::encoders::EMPTY_PAIR_SIDE;
use crate::error::{Error, Result};
use crate::example::{Example, Query};
use crate::fusion::predict;
use crate::rng::rng_for;
use crate::text::{detokenize, encode_text, tokenize, ImageFeatureStore, RawDataset, Tokens};
use crate::Task;

const POOL_STREAM: u64 = 0x9001;
const PICK_STREAM: u64 = 0x9002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub n_neighbor_images: usize,
    pub pool_size: usize,
    pub top_m: usize,
    pub seed: u64,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self {
            n_neighbor_images: 10,
            pool_size: 100,
            top_m: 10,
            seed: 0,
        }
    }
}

impl PoolSpec {
    pub fn validate(&self) -> Result<()> {
        if self.top_m == 0 || self.pool_size < self.top_m || self.n_neighbor_images == 0 {
            return Err(Error::Argument(format!(
                "need pool_size >= top_m >= 1 and at least one neighbour image, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogState {
    pub image_id: u64,
    pub caption: String,
    /// Question-answer rounds so far, oldest first.
    pub history: Vec<(String, String)>,
}

impl DialogState {
    /// A dialog of `dataset` truncated to its first `rounds` rounds.
    pub fn from_dataset(dataset: &RawDataset, image_id: u64, rounds: usize) -> Result<Self> {
        let d = dataset
            .dialog(image_id)
            .ok_or_else(|| Error::Index(format!("no dialog for image {image_id}")))?;
        if rounds > d.dialog.len() {
            return Err(Error::Argument(format!("dialog {image_id} has only {} rounds", d.dialog.len())));
        }
        Ok(Self {
            image_id,
            caption: d.caption.clone(),
            history: d.dialog[..rounds]
                .iter()
                .map(|r| (dataset.data.questions[r.question].clone(), dataset.data.answers[r.answer].clone()))
                .collect(),
        })
    }

    pub fn round(&self) -> usize {
        self.history.len()
    }
}

fn normalise(s: &str) -> String {
    detokenize(&tokenize(s))
}

/// The `n` images closest to `image_id` (ℓ2 between unit-normalised
/// features), nearest first, ties by id. The query image is excluded.
pub fn nearest_images(features: &ImageFeatureStore, image_id: u64, n: usize) -> Result<Vec<u64>> {
    let q = features
        .get(image_id)
        .ok_or_else(|| Error::Index(format!("no features for image {image_id}")))?;
    let unit = |v: &[f64]| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / norm).collect::<Vec<f64>>()
    };
    let q = unit(q);
    let mut d: Vec<(f64, u64)> = features
        .iter()
        .filter(|&(id, _)| id != image_id)
        .map(|(id, v)| (unit(v).iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(), id))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(n);
    Ok(d.into_iter().map(|(_, id)| id).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Question,
    Answer,
}

/// Option strings for one step. Strings from the neighbours' dialogs are
/// deduplicated (questions already asked are dropped); an oversized pool is
/// subsampled and a short one is topped up from the whole dataset, both with
/// the seeded PRNG.
pub fn build_pool(
    kind: PoolKind,
    state: &DialogState,
    dataset: &RawDataset,
    neighbours: &[u64],
    spec: &PoolSpec,
) -> Vec<String> {
    let texts = match kind {
        PoolKind::Question => &dataset.data.questions,
        PoolKind::Answer => &dataset.data.answers,
    };
    let pick = |r: &crate::text::RawRound| match kind {
        PoolKind::Question => r.question,
        PoolKind::Answer => r.answer,
    };
    let mut seen: HashSet<String> = match kind {
        PoolKind::Question => state.history.iter().map(|(q, _)| normalise(q)).collect(),
        PoolKind::Answer => HashSet::new(),
    };
    let mut pool = Vec::new();
    for d in neighbours.iter().filter_map(|&id| dataset.dialog(id)) {
        for r in &d.dialog {
            let s = normalise(&texts[pick(r)]);
            if seen.insert(s.clone()) {
                pool.push(s);
            }
        }
    }
    let kind_id = match kind {
        PoolKind::Question => 0,
        PoolKind::Answer => 1,
    };
    let mut rng = rng_for(spec.seed, &[POOL_STREAM, kind_id, state.image_id, state.round() as u64]);
    if pool.len() > spec.pool_size {
        let mut keep = sample(&mut rng, pool.len(), spec.pool_size).into_vec();
        keep.sort_unstable();
        return keep.into_iter().map(|i| pool[i].clone()).collect();
    }
    let mut rest: Vec<String> = Vec::new();
    let mut rest_seen = seen.clone();
    for t in texts {
        let s = normalise(t);
        if rest_seen.insert(s.clone()) {
            rest.push(s);
        }
    }
    while pool.len() < spec.pool_size && !rest.is_empty() {
        let i = rng.random_range(0..rest.len());
        pool.push(rest.swap_remove(i));
    }
    pool
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredText {
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round of the generated pair.
    pub round: usize,
    pub question: String,
    pub answer: String,
    pub question_pool: Vec<ScoredText>,
    /// Pool indices of the best `top_m` questions, best first.
    pub top_questions: Vec<usize>,
    /// Pool index of the chosen question.
    pub chosen_question: usize,
    pub answer_pool: Vec<ScoredText>,
    pub chosen_answer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub image_id: u64,
    pub caption: String,
    pub spec: PoolSpec,
    pub initial: Vec<(String, String)>,
    pub rounds: Vec<RoundRecord>,
}

impl Transcript {
    pub fn final_state(&self) -> DialogState {
        let mut history = self.initial.clone();
        history.extend(self.rounds.iter().map(|r| (r.question.clone(), r.answer.clone())));
        DialogState {
            image_id: self.image_id,
            caption: self.caption.clone(),
            history,
        }
    }
}

/// The two models of a self-play session, with their vocabularies.
pub struct Players<'a> {
    pub questioner: &'a Checkpoint,
    pub answerer: &'a Checkpoint,
}

impl Players<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.questioner.model.config().task != Task::VisDialQ {
            return Err(Error::Mismatch("question model must be trained for visdial-q".into()));
        }
        if self.answerer.model.config().task != Task::VisDial {
            return Err(Error::Mismatch("answer model must be trained for visdial".into()));
        }
        Ok(())
    }
}

fn encode_for(ckpt: &Checkpoint, texts: &[String], max_len: usize) -> Result<Vec<Tokens>> {
    texts.iter().map(|t| encode_text(t, &ckpt.vocab, max_len)).collect()
}

fn score_pool(
    ckpt: &Checkpoint,
    state: &DialogState,
    history: &[(String, String)],
    query: Query,
    pool: &[String],
    kind: PoolKind,
    features: &ImageFeatureStore,
) -> Result<Vec<f64>> {
    let d = ckpt.model.config().dims;
    let enc = |s: &str, n| encode_text(s, &ckpt.vocab, n);
    let ex = Example {
        image_id: state.image_id,
        round: state.round() + 1,
        query,
        caption: enc(&state.caption, d.n_c)?,
        history: history
            .iter()
            .map(|(q, a)| Ok((enc(q, d.n_q)?, enc(a, d.n_a)?)))
            .collect::<Result<Vec<_>>>()?,
        options: encode_for(
            ckpt,
            pool,
            match kind {
                PoolKind::Question => d.n_q,
                PoolKind::Answer => d.n_a,
            },
        )?,
        gt_index: 0,
    };
    Ok(ckpt.model.score_example(&ex, Some(features))?.scores)
}

/// Indices of the `m` best scores, best first, lower index on ties.
fn top_indices(scores: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

/// The question model's query for the next round: the last pair, or the
/// padding pair before any round exists.
fn question_query(ckpt: &Checkpoint, state: &DialogState) -> Result<(Query, Vec<(String, String)>)> {
    let d = ckpt.model.config().dims;
    match state.history.split_last() {
        Some(((q, a), earlier)) => Ok((
            Query::Pair(encode_text(q, &ckpt.vocab, d.n_q)?, encode_text(a, &ckpt.vocab, d.n_a)?),
            earlier.to_vec(),
        )),
        None => {
            let pad: Tokens = EMPTY_PAIR_SIDE.to_vec().into();
            Ok((Query::Pair(pad.clone(), pad), Vec::new()))
        }
    }
}

/// One self-play round. Returns the new state and the audit record.
pub fn step(
    state: &DialogState,
    players: &Players,
    dataset: &RawDataset,
    features: &ImageFeatureStore,
    spec: &PoolSpec,
) -> Result<(DialogState, RoundRecord)> {
    players.validate()?;
    spec.validate()?;
    let neighbours = nearest_images(features, state.image_id, spec.n_neighbor_images)?;

    let q_pool = build_pool(PoolKind::Question, state, dataset, &neighbours, spec);
    if q_pool.is_empty() {
        return Err(Error::Construction(format!(
            "image {} round {}: no unasked question left",
            state.image_id,
            state.round() + 1
        )));
    }
    let (query, q_history) = question_query(players.questioner, state)?;
    let q_scores = score_pool(players.questioner, state, &q_history, query, &q_pool, PoolKind::Question, features)?;
    let top = top_indices(&q_scores, spec.top_m);
    let mut rng = rng_for(spec.seed, &[PICK_STREAM, state.image_id, state.round() as u64]);
    let chosen_question = top[rng.random_range(0..top.len())];
    let question = q_pool[chosen_question].clone();

    let a_pool = build_pool(PoolKind::Answer, state, dataset, &neighbours, spec);
    if a_pool.is_empty() {
        return Err(Error::Construction("empty answer pool".into()));
    }
    let a_dims = players.answerer.model.config().dims;
    let a_query = Query::Question(encode_text(&question, &players.answerer.vocab, a_dims.n_q)?);
    let a_scores = score_pool(players.answerer, state, &state.history, a_query, &a_pool, PoolKind::Answer, features)?;
    let chosen_answer = predict(&a_scores);
    let answer = a_pool[chosen_answer].clone();

    let mut next = state.clone();
    next.history.push((question.clone(), answer.clone()));
    let zip = |pool: Vec<String>, scores: Vec<f64>| {
        pool.into_iter()
            .zip(scores)
            .map(|(text, score)| ScoredText { text, score })
            .collect()
    };
    let record = RoundRecord {
        round: next.round(),
        question,
        answer,
        question_pool: zip(q_pool, q_scores),
        top_questions: top,
        chosen_question,
        answer_pool: zip(a_pool, a_scores),
        chosen_answer,
    };
    Ok((next, record))
}

pub fn unroll(
    initial: &DialogState,
    rounds: usize,
    players: &Players,
    dataset: &RawDataset,
    features: &ImageFeatureStore,
    spec: &PoolSpec,
) -> Result<Transcript> {
    let mut state = initial.clone();
    let mut records = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let (next, rec) = step(&state, players, dataset, features, spec)?;
        records.push(rec);
        state = next;
    }
    Ok(Transcript {
        image_id: initial.image_id,
        caption: initial.caption.clone(),
        spec: *spec,
        initial: initial.history.clone(),
        rounds: records,
    })
}

/// Independent transcripts, generated in parallel, returned in input order.
pub fn unroll_many(
    initial: &[DialogState],
    rounds: usize,
    players: &Players,
    dataset: &RawDataset,
    features: &ImageFeatureStore,
    spec: &PoolSpec,
) -> Result<Vec<Transcript>> {
    initial
        .par_iter()
        .map(|s| unroll(s, rounds, players, dataset, features, spec))
        .collect()
}

/// Checks a transcript's structural guarantees from its audit data alone.
pub fn audit(t: &Transcript) -> std::result::Result<(), String> {
    let mut asked: HashSet<String> = t.initial.iter().map(|(q, _)| normalise(q)).collect();
    for r in &t.rounds {
        let at = |m: &str| format!("image {} round {}: {m}", t.image_id, r.round);
        if !asked.insert(normalise(&r.question)) {
            return Err(at("question repeated"));
        }
        let qs: Vec<f64> = r.question_pool.iter().map(|s| s.score).collect();
        if r.question_pool.get(r.chosen_question).map(|s| &s.text) != Some(&r.question) {
            return Err(at("chosen question does not match its pool entry"));
        }
        if r.top_questions != top_indices(&qs, t.spec.top_m) || !r.top_questions.contains(&r.chosen_question) {
            return Err(at("chosen question outside the top candidates"));
        }
        let s = qs[r.chosen_question];
        let better = qs.iter().filter(|&&x| x > s).count();
        if better >= t.spec.top_m {
            return Err(at("chosen question outranked by top_m others"));
        }
        let a: Vec<f64> = r.answer_pool.iter().map(|s| s.score).collect();
        if r.answer_pool.get(r.chosen_answer).map(|s| &s.text) != Some(&r.answer)
            || a.iter().any(|&x| x > a[r.chosen_answer])
        {
            return Err(at("chosen answer is not the pool maximum"));
        }
    }
    Ok(())
}

/// Rescores every logged pool with the given models and compares the scores
/// bit for bit with the log.
pub fn replay_matches(t: &Transcript, players: &Players, features: &ImageFeatureStore) -> Result<bool> {
    let mut state = DialogState {
        image_id: t.image_id,
        caption: t.caption.clone(),
        history: t.initial.clone(),
    };
    for r in &t.rounds {
        let q_pool: Vec<String> = r.question_pool.iter().map(|s| s.text.clone()).collect();
        let (query, q_history) = question_query(players.questioner, &state)?;
        let qs = score_pool(players.questioner, &state, &q_history, query, &q_pool, PoolKind::Question, features)?;
        let a_pool: Vec<String> = r.answer_pool.iter().map(|s| s.text.clone()).collect();
        let d = players.answerer.model.config().dims;
        let a_query = Query::Question(encode_text(&r.question, &players.answerer.vocab, d.n_q)?);
        let as_ = score_pool(players.answerer, &state, &state.history, a_query, &a_pool, PoolKind::Answer, features)?;
        let same = |logged: &[ScoredText], fresh: &[f64]| {
            logged.len() == fresh.len() && logged.iter().zip(fresh).all(|(l, f)| l.score.to_bits() == f.to_bits())
        };
        if !same(&r.question_pool, &qs) || !same(&r.answer_pool, &as_) {
            return Ok(false);
        }
        state.history.push((r.question.clone(), r.answer.clone()));
    }
    Ok(true)
}

pub fn save_transcripts(transcripts: &[Transcript], path: impl AsRef<Path>) -> Result<()> {
    let mut s = serde_json::to_string_pretty(transcripts)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn load_transcripts(path: impl AsRef<Path>) -> Result<Vec<Transcript>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::load(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{DatasetData, RawDialog, RawRound};

    fn store(rows: &[(u64, [f64; 2])]) -> ImageFeatureStore {
        let mut s = ImageFeatureStore::new(2);
        for (id, v) in rows {
            s.insert(*id, v.to_vec()).unwrap();
        }
        s
    }

    #[test]
    fn nearest_ties_and_exclusion() {
        let s = store(&[(1, [1.0, 0.0]), (2, [0.0, 1.0]), (3, [2.0, 0.0]), (4, [1.0, 0.1]), (5, [0.0, 3.0])]);
        assert_eq!(nearest_images(&s, 1, 2).unwrap(), vec![3, 4]);
        assert_eq!(nearest_images(&s, 1, 10).unwrap(), vec![3, 4, 2, 5]);
        assert!(nearest_images(&s, 9, 1).is_err());
    }

    fn dataset() -> RawDataset {
        let round = |q, a| RawRound { question: q, answer: a, answer_options: vec![a], gt_index: 0 };
        let mut ds = RawDataset::new(
            "t",
            DatasetData {
                questions: (0..6).map(|i| format!("question {i} ?")).collect(),
                answers: (0..6).map(|i| format!("answer {i}")).collect(),
                dialogs: (1..=3)
                    .map(|id| RawDialog {
                        image_id: id,
                        caption: "c".into(),
                        dialog: (0..10).map(|t| round((t + id as usize) % 4, t % 6)).collect(),
                    })
                    .collect(),
            },
        );
        ds.validate().unwrap();
        ds
    }

    #[test]
    fn pool_dedup_exclusion_and_fill() {
        let ds = dataset();
        let state = DialogState {
            image_id: 1,
            caption: "c".into(),
            history: vec![("question 2 ?".into(), "answer 0".into())],
        };
        let spec = PoolSpec { n_neighbor_images: 2, pool_size: 5, top_m: 2, seed: 1 };
        let pool = build_pool(PoolKind::Question, &state, &ds, &[2, 3], &spec);
        assert_eq!(&pool[..3], ["question 3 ?", "question 0 ?", "question 1 ?"]);
        assert_eq!(pool.len(), 5);
        assert!(!pool.contains(&"question 2 ?".to_string()));
        let unique: HashSet<&String> = pool.iter().collect();
        assert_eq!(unique.len(), 5);
        let small = PoolSpec { pool_size: 2, ..spec };
        let sub = build_pool(PoolKind::Question, &state, &ds, &[2, 3], &small);
        assert_eq!(sub.len(), 2);
        assert!(sub.iter().all(|q| pool[..3].contains(q)));
        let answers = build_pool(PoolKind::Answer, &state, &ds, &[2], &PoolSpec { pool_size: 100, ..spec });
        assert_eq!(answers.len(), 6);
    }

    #[test]
    fn top_indices_order() {
        assert_eq!(top_indices(&[0.5, 2.0, 2.0, -1.0], 3), vec![1, 2, 0]);
    }

    #[test]
    fn spec_validation() {
        assert!(PoolSpec { top_m: 0, ..PoolSpec::default() }.validate().is_err());
        assert!(PoolSpec { pool_size: 5, ..PoolSpec::default() }.validate().is_err());
        assert!(PoolSpec::default().validate().is_ok());
    }
}

//! Follow-up question ranking data: for every question-answer pair of rounds
//! 1..9, a set of 100 unique candidate next questions drawn from four
//! sources (correct, plausible, popular, random).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ModelDims, ROUNDS_PER_DIALOG};
use crate::error::{Error, Result};
use crate::example::{Example, Query};
use crate::rng::rng_for;
use crate::text::{detokenize, encode_text, is_punctuation, tokenize, GloveTable, RawDataset, RawDialog, Tokens, Vocabulary};

pub const CANDIDATES: usize = 100;
pub const PLAUSIBLE_NEIGHBOURS: usize = 50;
pub const POPULAR_QUESTIONS: usize = 30;
pub const QDATASET_VERSION: u32 = 1;
pub const QDATASET_KIND: &str = "visdial-q";
const RANDOM_STREAM: u64 = 0x7a4d;

/// Words used for GloVe composition: tokenized, punctuation dropped.
pub fn glove_words(text: &str) -> Vec<String> {
    tokenize(text).into_iter().filter(|w| !is_punctuation(w)).collect()
}

/// First three word vectors (zero for absent or unknown words) followed by
/// the average of the remaining words, unknown words counting as zero.
pub fn embed_question_glove<S: AsRef<str>>(words: &[S], glove: &GloveTable) -> Result<Vec<f64>> {
    if words.is_empty() {
        return Err(Error::Argument("cannot embed an empty question".into()));
    }
    let d = glove.dim();
    let mut out = vec![0.0; 4 * d];
    for (slot, w) in words.iter().take(3).enumerate() {
        if let Some(v) = glove.get(w.as_ref()) {
            out[slot * d..(slot + 1) * d].copy_from_slice(v);
        }
    }
    if words.len() > 3 {
        let rest = &words[3..];
        let avg = &mut out[3 * d..];
        for w in rest {
            if let Some(v) = glove.get(w.as_ref()) {
                avg.iter_mut().zip(v).for_each(|(a, x)| *a += x);
            }
        }
        let n = rest.len() as f64;
        avg.iter_mut().for_each(|a| *a /= n);
    }
    Ok(out)
}

/// Mean vector of the known words; zero when none is known.
pub fn embed_answer_glove<S: AsRef<str>>(words: &[S], glove: &GloveTable) -> Result<Vec<f64>> {
    if words.is_empty() {
        return Err(Error::Argument("cannot embed an empty answer".into()));
    }
    let mut out = vec![0.0; glove.dim()];
    let mut known = 0usize;
    for w in words {
        if let Some(v) = glove.get(w.as_ref()) {
            out.iter_mut().zip(v).for_each(|(a, x)| *a += x);
            known += 1;
        }
    }
    if known > 0 {
        out.iter_mut().for_each(|a| *a /= known as f64);
    }
    Ok(out)
}

/// Question block ⊕ answer block, `5 · d_g` wide.
pub fn qa_key(question: &str, answer: &str, glove: &GloveTable) -> Result<Vec<f64>> {
    let mut k = embed_question_glove(&glove_words(question), glove)
        .map_err(|e| Error::Argument(format!("question {question:?}: {e}")))?;
    k.extend(
        embed_answer_glove(&glove_words(answer), glove)
            .map_err(|e| Error::Argument(format!("answer {answer:?}: {e}")))?,
    );
    Ok(k)
}

/// A question-answer pair of the corpus; `round` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QaRef {
    pub image_id: u64,
    pub round: usize,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` corpus pairs nearest to `query_key`, skipping pairs from
/// `query_image` and last-round pairs. Ties go to the smaller
/// `(image_id, round)`.
pub fn find_plausible(query_key: &[f64], query_image: u64, corpus_keys: &[(QaRef, Vec<f64>)], k: usize) -> Vec<QaRef> {
    let mut scored: Vec<(f64, QaRef)> = corpus_keys
        .iter()
        .filter(|(r, _)| r.image_id != query_image && r.round < ROUNDS_PER_DIALOG)
        .map(|(r, key)| (squared_distance(query_key, key), *r))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.truncate(k);
    scored.into_iter().map(|(_, r)| r).collect()
}

/// The `m` most frequent strings, ties in lexicographic order.
pub fn compute_popular<'a>(questions: impl IntoIterator<Item = &'a str>, m: usize) -> Vec<String> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for q in questions {
        *counts.entry(q).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().take(m).map(|(q, _)| q.to_owned()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Correct,
    Plausible,
    Popular,
    Random,
}

/// 100 distinct candidate next questions, as indices into the dataset's
/// question pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub question_options: Vec<usize>,
    pub gt_index: usize,
    pub provenance: Vec<Provenance>,
    pub seed: u64,
}

/// Precomputed, read-only view of a dataset used as candidate source.
pub struct QuestionCorpus<'a> {
    dataset: &'a RawDataset,
    /// Normalised (tokenized) string of every pool entry.
    canonical: Vec<String>,
    /// Lowest pool index of every distinct normalised string.
    representative: HashMap<String, usize>,
    /// Distinct questions in pool order, the random-fill population.
    distinct: Vec<usize>,
    /// Keys of every pair that has a follow-up, in (image_id, round) order.
    keys: Vec<(QaRef, Vec<f64>)>,
    key_index: HashMap<QaRef, usize>,
    popular: Vec<usize>,
}

impl<'a> QuestionCorpus<'a> {
    pub fn new(dataset: &'a RawDataset, glove: &GloveTable) -> Result<Self> {
        let canonical: Vec<String> = dataset.data.questions.iter().map(|q| detokenize(&tokenize(q))).collect();
        let mut representative = HashMap::new();
        let mut distinct = Vec::new();
        for (i, c) in canonical.iter().enumerate() {
            if !representative.contains_key(c) {
                representative.insert(c.clone(), i);
                distinct.push(i);
            }
        }
        let pairs: Vec<(QaRef, &str, &str)> = dataset
            .data
            .dialogs
            .iter()
            .flat_map(|d| {
                d.dialog.iter().enumerate().take(ROUNDS_PER_DIALOG - 1).map(move |(t, r)| {
                    (
                        QaRef { image_id: d.image_id, round: t + 1 },
                        dataset.data.questions[r.question].as_str(),
                        dataset.data.answers[r.answer].as_str(),
                    )
                })
            })
            .collect();
        let mut keys = pairs
            .par_iter()
            .map(|(r, q, a)| Ok((*r, qa_key(q, a, glove)?)))
            .collect::<Result<Vec<_>>>()?;
        keys.sort_by_key(|k| k.0);
        let key_index = keys.iter().enumerate().map(|(i, (r, _))| (*r, i)).collect();
        let asked = dataset
            .data
            .dialogs
            .iter()
            .flat_map(|d| d.dialog.iter().map(|r| canonical[r.question].as_str()));
        let popular = compute_popular(asked, POPULAR_QUESTIONS)
            .into_iter()
            .map(|q| representative[&q])
            .collect();
        Ok(Self {
            dataset,
            canonical,
            representative,
            distinct,
            keys,
            key_index,
            popular,
        })
    }

    pub fn keys(&self) -> &[(QaRef, Vec<f64>)] {
        &self.keys
    }

    pub fn popular(&self) -> &[usize] {
        &self.popular
    }

    pub fn distinct_questions(&self) -> &[usize] {
        &self.distinct
    }

    /// Pool index standing for the question asked at `r`.
    pub fn question_at(&self, r: QaRef) -> Option<usize> {
        let d = self.dataset.dialog(r.image_id)?;
        let q = d.dialog.get(r.round.checked_sub(1)?)?.question;
        Some(self.representative[&self.canonical[q]])
    }

    /// Candidates for the follow-up of round `round_t` (1..=9) of `dialog`.
    pub fn build_candidate_set(&self, dialog: &RawDialog, round_t: usize, seed: u64) -> Result<CandidateSet> {
        if !(1..ROUNDS_PER_DIALOG).contains(&round_t) {
            return Err(Error::Argument(format!(
                "round {round_t} has no follow-up question (valid rounds 1..={})",
                ROUNDS_PER_DIALOG - 1
            )));
        }
        if self.distinct.len() < CANDIDATES {
            return Err(Error::Construction(format!(
                "corpus has {} distinct questions, {CANDIDATES} are needed",
                self.distinct.len()
            )));
        }
        let here = QaRef { image_id: dialog.image_id, round: round_t };
        let query_key = match self.key_index.get(&here) {
            Some(&i) => self.keys[i].1.clone(),
            None => {
                let r = &dialog.dialog[round_t - 1];
                return Err(Error::Argument(format!(
                    "dialog {} is not part of the corpus (question {:?})",
                    dialog.image_id, self.dataset.data.questions.get(r.question)
                )));
            }
        };
        let target = self.question_at(QaRef { image_id: dialog.image_id, round: round_t + 1 })
            .ok_or_else(|| Error::Index(format!("dialog {} lacks round {}", dialog.image_id, round_t + 1)))?;

        let mut chosen: Vec<(usize, Provenance)> = vec![(target, Provenance::Correct)];
        let mut seen: HashSet<usize> = HashSet::from([target]);
        let mut add = |q: usize, p: Provenance, chosen: &mut Vec<(usize, Provenance)>| {
            if chosen.len() < CANDIDATES && seen.insert(q) {
                chosen.push((q, p));
            }
        };
        for r in find_plausible(&query_key, dialog.image_id, &self.keys, PLAUSIBLE_NEIGHBOURS) {
            let next = self
                .question_at(QaRef { image_id: r.image_id, round: r.round + 1 })
                .expect("non-final rounds have a follow-up");
            add(next, Provenance::Plausible, &mut chosen);
        }
        for &q in &self.popular {
            add(q, Provenance::Popular, &mut chosen);
        }
        let mut rng = rng_for(seed, &[RANDOM_STREAM, dialog.image_id, round_t as u64]);
        while chosen.len() < CANDIDATES {
            let q = self.distinct[rng.random_range(0..self.distinct.len())];
            add(q, Provenance::Random, &mut chosen);
        }
        chosen.shuffle(&mut rng);
        let gt_index = chosen.iter().position(|&(_, p)| p == Provenance::Correct).expect("correct kept");
        Ok(CandidateSet {
            question_options: chosen.iter().map(|&(q, _)| q).collect(),
            gt_index,
            provenance: chosen.into_iter().map(|(_, p)| p).collect(),
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QRound {
    /// 1-based round of the query pair.
    pub round: usize,
    pub question: usize,
    pub answer: usize,
    pub question_options: Vec<usize>,
    pub gt_index: usize,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QDialog {
    pub image_id: u64,
    pub caption: String,
    /// Query rows for rounds 1..=9; history for row `t` is rows `1..t`.
    pub rounds: Vec<QRound>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QData {
    pub questions: Vec<String>,
    pub answers: Vec<String>,
    pub dialogs: Vec<QDialog>,
}

/// A follow-up question ranking dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QDataset {
    pub version: u32,
    pub kind: String,
    pub split: String,
    pub seed: u64,
    pub glove_dim: usize,
    pub data: QData,
}

/// Converts every dialog of `dataset` using the dataset itself as corpus.
pub fn build_qdataset(dataset: &RawDataset, glove: &GloveTable, seed: u64) -> Result<QDataset> {
    let corpus = QuestionCorpus::new(dataset, glove)?;
    let dialogs = dataset
        .data
        .dialogs
        .par_iter()
        .map(|d| {
            let rounds = (1..ROUNDS_PER_DIALOG)
                .map(|t| {
                    let set = corpus.build_candidate_set(d, t, seed)?;
                    let r = &d.dialog[t - 1];
                    Ok(QRound {
                        round: t,
                        question: r.question,
                        answer: r.answer,
                        question_options: set.question_options,
                        gt_index: set.gt_index,
                        provenance: set.provenance,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(QDialog {
                image_id: d.image_id,
                caption: d.caption.clone(),
                rounds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QDataset {
        version: QDATASET_VERSION,
        kind: QDATASET_KIND.to_owned(),
        split: dataset.split.clone(),
        seed,
        glove_dim: glove.dim(),
        data: QData {
            questions: dataset.data.questions.clone(),
            answers: dataset.data.answers.clone(),
            dialogs,
        },
    })
}

impl QDataset {
    pub fn rows(&self) -> usize {
        self.data.dialogs.iter().map(|d| d.rounds.len()).sum()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.version != QDATASET_VERSION {
            return Err(format!("unsupported version {}", self.version));
        }
        if self.kind != QDATASET_KIND {
            return Err(format!("expected kind {QDATASET_KIND:?}, found {:?}", self.kind));
        }
        let nq = self.data.questions.len();
        let na = self.data.answers.len();
        let mut ids = HashSet::new();
        for (i, d) in self.data.dialogs.iter().enumerate() {
            let at = |msg: String| format!("dialog {i} (image_id {}): {msg}", d.image_id);
            if !ids.insert(d.image_id) {
                return Err(at("duplicate image_id".into()));
            }
            if d.rounds.len() != ROUNDS_PER_DIALOG - 1 {
                return Err(at(format!("expected {} rounds, found {}", ROUNDS_PER_DIALOG - 1, d.rounds.len())));
            }
            for (t, r) in d.rounds.iter().enumerate() {
                let at = |msg: String| at(format!("round {}: {msg}", t + 1));
                if r.round != t + 1 {
                    return Err(at(format!("round field is {}", r.round)));
                }
                if r.question >= nq || r.answer >= na || r.question_options.iter().any(|&q| q >= nq) {
                    return Err(at("index out of range".into()));
                }
                if r.question_options.is_empty() || r.gt_index >= r.question_options.len() {
                    return Err(at("gt_index out of range".into()));
                }
                if r.provenance.len() != r.question_options.len() {
                    return Err(at("provenance length differs from options".into()));
                }
                let correct: Vec<usize> = (0..r.provenance.len())
                    .filter(|&k| r.provenance[k] == Provenance::Correct)
                    .collect();
                if correct != [r.gt_index] {
                    return Err(at("exactly one correct candidate, at gt_index, is required".into()));
                }
                let unique: HashSet<&str> = r.question_options.iter().map(|&q| self.data.questions[q].as_str()).collect();
                if unique.len() != r.question_options.len() {
                    return Err(at("duplicate candidates".into()));
                }
            }
            for w in d.rounds.windows(2) {
                let gt = w[0].question_options[w[0].gt_index];
                if self.data.questions[gt] != self.data.questions[w[1].question] {
                    return Err(at(format!("round {} target is not the next question", w[0].round)));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let ds: Self = serde_json::from_str(text).map_err(|e| Error::load(path, e.to_string()))?;
        ds.validate().map_err(|e| Error::load(path, e))?;
        Ok(ds)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
        Self::from_json(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Every text string of the file, for vocabulary building.
    pub fn corpus(&self) -> impl Iterator<Item = &str> {
        self.data
            .dialogs
            .iter()
            .map(|d| d.caption.as_str())
            .chain(self.data.questions.iter().map(String::as_str))
            .chain(self.data.answers.iter().map(String::as_str))
    }

    /// Provenance counts over all rounds.
    pub fn provenance_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for p in self.data.dialogs.iter().flat_map(|d| d.rounds.iter().flat_map(|r| &r.provenance)) {
            *out.entry(format!("{p:?}").to_lowercase()).or_default() += 1;
        }
        out
    }
}

/// One follow-up ranking example per row: the query is the current pair and
/// the history holds the earlier pairs.
pub fn visdialq_examples(ds: &QDataset, vocab: &Vocabulary, dims: &ModelDims) -> Result<Vec<Example>> {
    let questions = ds
        .data
        .questions
        .iter()
        .map(|q| encode_text(q, vocab, dims.n_q))
        .collect::<Result<Vec<Tokens>>>()?;
    let answers = ds
        .data
        .answers
        .iter()
        .map(|a| encode_text(a, vocab, dims.n_a))
        .collect::<Result<Vec<Tokens>>>()?;
    let mut out = Vec::with_capacity(ds.rows());
    for d in &ds.data.dialogs {
        let caption = encode_text(&d.caption, vocab, dims.n_c)?;
        for (t, r) in d.rounds.iter().enumerate() {
            out.push(Example {
                image_id: d.image_id,
                round: r.round,
                query: Query::Pair(questions[r.question].clone(), answers[r.answer].clone()),
                caption: caption.clone(),
                history: d.rounds[..t]
                    .iter()
                    .map(|h| (questions[h.question].clone(), answers[h.answer].clone()))
                    .collect(),
                options: r.question_options.iter().map(|&q| questions[q].clone()).collect(),
                gt_index: r.gt_index,
            });
        }
    }
    Ok(out)
}

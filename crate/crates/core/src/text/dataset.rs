//! Dialog dataset file: a JSON document with shared `questions` / `answers`
//! string pools and `dialogs` that reference pool indices, laid out like the
//! VisDial v0.9 release so real data converts with a thin script.
//!
//! ```json
//! {"version": 1, "split": "train",
//!  "data": {"questions": ["is it sunny ?", ...],
//!           "answers": ["yes", ...],
//!           "dialogs": [{"image_id": 7, "caption": "...",
//!                        "dialog": [{"question": 0, "answer": 0,
//!                                    "answer_options": [0, 5, ...],
//!                                    "gt_index": 0}, ...]}]}}
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ModelDims, ROUNDS_PER_DIALOG};
use crate::error::{Error, Result};
use crate::text::{encode_truncate, tokenize, Tokens, Vocabulary};

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRound {
    pub question: usize,
    pub answer: usize,
    pub answer_options: Vec<usize>,
    pub gt_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDialog {
    pub image_id: u64,
    pub caption: String,
    pub dialog: Vec<RawRound>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetData {
    pub questions: Vec<String>,
    pub answers: Vec<String>,
    pub dialogs: Vec<RawDialog>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDataset {
    pub version: u32,
    pub split: String,
    pub data: DatasetData,
}

impl RawDataset {
    pub fn new(split: impl Into<String>, data: DatasetData) -> Self {
        Self {
            version: DATASET_VERSION,
            split: split.into(),
            data,
        }
    }

    /// Checks every structural rule and sorts dialogs by image id, so the
    /// in-memory store does not depend on record order in the file.
    pub fn validate(&mut self) -> std::result::Result<(), String> {
        if self.version != DATASET_VERSION {
            return Err(format!("unsupported dataset version {}", self.version));
        }
        let d = &self.data;
        let mut seen = HashSet::new();
        for (i, dialog) in d.dialogs.iter().enumerate() {
            let at = format!("dialog {i} (image_id {})", dialog.image_id);
            if !seen.insert(dialog.image_id) {
                return Err(format!("{at}: duplicate image_id"));
            }
            if dialog.dialog.len() != ROUNDS_PER_DIALOG {
                return Err(format!(
                    "{at}: expected {ROUNDS_PER_DIALOG} rounds, found {}",
                    dialog.dialog.len()
                ));
            }
            for (r, round) in dialog.dialog.iter().enumerate() {
                let at = format!("{at} round {}", r + 1);
                if round.question >= d.questions.len() {
                    return Err(format!("{at}: question index {} out of range", round.question));
                }
                if round.answer >= d.answers.len() {
                    return Err(format!("{at}: answer index {} out of range", round.answer));
                }
                if round.answer_options.is_empty() {
                    return Err(format!("{at}: no answer options"));
                }
                if let Some(&o) = round.answer_options.iter().find(|&&o| o >= d.answers.len()) {
                    return Err(format!("{at}: answer option {o} out of range"));
                }
                let texts: HashSet<&str> = round
                    .answer_options
                    .iter()
                    .map(|&o| d.answers[o].as_str())
                    .collect();
                if texts.len() != round.answer_options.len() {
                    return Err(format!("{at}: answer options are not unique"));
                }
                if round.gt_index >= round.answer_options.len() {
                    return Err(format!("{at}: gt_index {} out of range", round.gt_index));
                }
                if d.answers[round.answer_options[round.gt_index]] != d.answers[round.answer] {
                    return Err(format!("{at}: ground-truth option differs from the answer"));
                }
            }
        }
        self.data.dialogs.sort_by_key(|d| d.image_id);
        Ok(())
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let mut ds: RawDataset =
            serde_json::from_str(text).map_err(|e| Error::load(path, e.to_string()))?;
        ds.validate().map_err(|m| Error::load(path, m))?;
        Ok(ds)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path)?, path)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Every caption, question and answer string, for vocabulary building.
    pub fn corpus(&self) -> impl Iterator<Item = &str> {
        self.data
            .dialogs
            .iter()
            .map(|d| d.caption.as_str())
            .chain(self.data.questions.iter().map(String::as_str))
            .chain(self.data.answers.iter().map(String::as_str))
    }

    pub fn dialog(&self, image_id: u64) -> Option<&RawDialog> {
        self.data
            .dialogs
            .binary_search_by_key(&image_id, |d| d.image_id)
            .ok()
            .map(|i| &self.data.dialogs[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogRound {
    pub question: Tokens,
    pub answer: Tokens,
    /// Indices into [`EncodedDataset::answer_pool`].
    pub answer_options: Vec<usize>,
    pub gt_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogRecord {
    pub image_id: u64,
    pub caption: Tokens,
    pub rounds: Vec<DialogRound>,
}

/// A dataset with every string tokenized, truncated and mapped to ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub records: Vec<DialogRecord>,
    pub question_pool: Vec<Tokens>,
    pub answer_pool: Vec<Tokens>,
}

pub(crate) fn encode_text(text: &str, vocab: &Vocabulary, max_len: usize) -> Result<Tokens> {
    Ok(encode_truncate(&tokenize(text), vocab, max_len)?.into())
}

pub fn encode_dataset(raw: &RawDataset, vocab: &Vocabulary, dims: &ModelDims) -> Result<EncodedDataset> {
    let question_pool = raw
        .data
        .questions
        .iter()
        .map(|q| encode_text(q, vocab, dims.n_q))
        .collect::<Result<Vec<_>>>()?;
    let answer_pool = raw
        .data
        .answers
        .iter()
        .map(|a| encode_text(a, vocab, dims.n_a))
        .collect::<Result<Vec<_>>>()?;
    let records = raw
        .data
        .dialogs
        .iter()
        .map(|d| {
            Ok(DialogRecord {
                image_id: d.image_id,
                caption: encode_text(&d.caption, vocab, dims.n_c)?,
                rounds: d
                    .dialog
                    .iter()
                    .map(|r| DialogRound {
                        question: question_pool[r.question].clone(),
                        answer: answer_pool[r.answer].clone(),
                        answer_options: r.answer_options.clone(),
                        gt_index: r.gt_index,
                    })
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EncodedDataset {
        records,
        question_pool,
        answer_pool,
    })
}

pub fn load_dataset(path: impl AsRef<Path>, vocab: &Vocabulary, dims: &ModelDims) -> Result<EncodedDataset> {
    encode_dataset(&RawDataset::load(path)?, vocab, dims)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RawDataset {
        let rounds = (0..10)
            .map(|i| RawRound {
                question: i % 2,
                answer: i % 3,
                answer_options: vec![0, 1, 2],
                gt_index: i % 3,
            })
            .collect();
        RawDataset::new(
            "train",
            DatasetData {
                questions: vec!["is it sunny?".into(), "what color is it?".into()],
                answers: vec!["yes".into(), "no".into(), "red".into()],
                dialogs: vec![RawDialog {
                    image_id: 5,
                    caption: "a red bus".into(),
                    dialog: rounds,
                }],
            },
        )
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.json");
        let ds = tiny();
        ds.save(&p).unwrap();
        assert_eq!(RawDataset::load(&p).unwrap(), ds);
    }

    #[test]
    fn nine_rounds_rejected_with_record_index() {
        let mut ds = tiny();
        ds.data.dialogs[0].dialog.pop();
        let err = ds.validate().unwrap_err();
        assert!(err.contains("dialog 0"), "{err}");
        assert!(err.contains("10 rounds"), "{err}");
    }

    #[test]
    fn structural_errors() {
        let mut ds = tiny();
        ds.data.dialogs.push(ds.data.dialogs[0].clone());
        assert!(ds.validate().unwrap_err().contains("duplicate"));

        let mut ds = tiny();
        ds.data.dialogs[0].dialog[3].gt_index = (ds.data.dialogs[0].dialog[3].gt_index + 1) % 3;
        assert!(ds.validate().unwrap_err().contains("ground-truth"));

        let mut ds = tiny();
        ds.data.dialogs[0].dialog[0].answer_options = vec![0, 0, 1];
        assert!(ds.validate().is_err());
    }

    #[test]
    fn record_order_does_not_matter() {
        let mut a = tiny();
        let mut second = a.data.dialogs[0].clone();
        second.image_id = 2;
        a.data.dialogs.push(second);
        let mut b = a.clone();
        b.data.dialogs.reverse();
        a.validate().unwrap();
        b.validate().unwrap();
        assert_eq!(a, b);
    }
}

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Token-id sequence shared cheaply between examples.
pub type Tokens = Arc<[usize]>;

pub const STOP: usize = 0;
pub const EMPTY: usize = 1;
pub const UNK: usize = 2;
const RESERVED: [&str; 3] = ["<stop>", "<empty>", "<unk>"];

const SPLIT_CHARS: [char; 5] = ['?', ',', '.', '!', '\''];

/// Lowercases, splits `? , . ! '` into standalone tokens, splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(text.len() + 8);
    for ch in text.chars().flat_map(char::to_lowercase) {
        if SPLIT_CHARS.contains(&ch) {
            spaced.push(' ');
            spaced.push(ch);
            spaced.push(' ');
        } else {
            spaced.push(ch);
        }
    }
    spaced.split_whitespace().map(str::to_owned).collect()
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn is_punctuation(token: &str) -> bool {
    let mut chars = token.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if SPLIT_CHARS.contains(&c))
}

/// Dense word ↔ id table. Ids 0, 1, 2 are Stop, Empty and Unk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a table from words in id order; the reserved tokens must lead.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < RESERVED.len() || words[..3] != RESERVED {
            return Err(Error::Argument(
                "vocabulary must start with <stop>, <empty>, <unk>".into(),
            ));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Argument(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Self { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    /// Id of a word; unknown and reserved strings map to Unk.
    pub fn id(&self, word: &str) -> usize {
        match self.index.get(word) {
            Some(&i) if i >= RESERVED.len() => i,
            _ => UNK,
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.words.join("\n");
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let words = text.lines().map(str::to_owned).collect();
        Self::from_words(words).map_err(|e| Error::load(path, e.to_string()))
    }
}

/// Keeps the first `max_len` words, maps them to ids and appends Stop.
pub fn encode_truncate<S: AsRef<str>>(words: &[S], vocab: &Vocabulary, max_len: usize) -> Result<Vec<usize>> {
    if max_len == 0 {
        return Err(Error::Argument("max_len must be at least 1".into()));
    }
    let mut ids: Vec<usize> = words
        .iter()
        .take(max_len)
        .map(|w| vocab.id(w.as_ref()))
        .collect();
    ids.push(STOP);
    Ok(ids)
}

/// Vocabulary of every word occurring at least `min_count` times, ordered by
/// descending frequency and then lexicographically, after the reserved ids.
pub fn build_vocab<I, S>(corpus: I, min_count: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut texts = 0usize;
    for text in corpus {
        texts += 1;
        for w in tokenize(text.as_ref()) {
            if !RESERVED.contains(&w.as_str()) {
                *counts.entry(w).or_default() += 1;
            }
        }
    }
    if texts == 0 {
        return Err(Error::Argument("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count.max(1))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let words = RESERVED
        .iter()
        .map(|s| s.to_string())
        .chain(kept.into_iter().map(|(w, _)| w))
        .collect();
    Vocabulary::from_words(words)
}

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Pretrained word vectors: one `word v1 v2 ... vd` line per word.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GloveTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl GloveTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn insert(&mut self, word: impl Into<String>, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Dimension(format!(
                "vector of length {} in a {}-d table",
                v.len(),
                self.dim
            )));
        }
        self.vectors.insert(word.into(), v);
        Ok(())
    }

    /// Parses the line format. The first line fixes the dimension; the first
    /// occurrence of a repeated word wins.
    pub fn from_reader<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let mut table: Option<GloveTable> = None;
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let v = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::load(path, format!("line {}: {e}", n + 1)))?;
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::load(path, format!("line {}: no finite vector", n + 1)));
            }
            let t = table.get_or_insert_with(|| GloveTable::new(v.len()));
            if v.len() != t.dim {
                return Err(Error::load(
                    path,
                    format!("line {}: dimension {} differs from {}", n + 1, v.len(), t.dim),
                ));
            }
            t.vectors.entry(word.to_owned()).or_insert(v);
        }
        table.ok_or_else(|| Error::load(path, "no word vectors"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_reader(BufReader::new(File::open(path)?), path)
    }

    /// Writes words in sorted order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut words: Vec<&String> = self.vectors.keys().collect();
        words.sort();
        let mut out = String::new();
        for w in words {
            out.push_str(w);
            for x in &self.vectors[w] {
                out.push(' ');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

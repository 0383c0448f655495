//! Binary model checkpoints.
//!
//! Layout: the 8-byte magic `SFCKPT1\n`, a little-endian `u64` manifest
//! length, a JSON manifest, then every tensor as little-endian `f64` in
//! manifest order. The manifest carries the model config, the vocabulary,
//! the seed, an optional training-config echo and one entry per tensor
//! (name, kind, shape, byte offset, Adam step count). Parameters store their
//! value and both Adam moments; batch-norm buffers store their value.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::SfModel;
use crate::tensor::Tensor;
use crate::text::Vocabulary;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SFCKPT1\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    Value,
    AdamM,
    AdamV,
    Buffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    kind: TensorKind,
    shape: Vec<usize>,
    offset: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    step_count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    seed: u64,
    #[serde(default)]
    train_config: Option<serde_json::Value>,
    vocabulary: Vec<String>,
    tensors: Vec<TensorEntry>,
}

/// A model together with what is needed to use it on raw text.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: SfModel,
    pub vocab: Vocabulary,
    pub seed: u64,
    pub train_config: Option<serde_json::Value>,
}

impl Checkpoint {
    pub fn new(model: SfModel, vocab: Vocabulary, seed: u64) -> Result<Self> {
        if vocab.len() != model.config().vocab_size {
            return Err(Error::Mismatch(format!(
                "vocabulary has {} words, model expects {}",
                vocab.len(),
                model.config().vocab_size
            )));
        }
        Ok(Self {
            model,
            vocab,
            seed,
            train_config: None,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut model = self.model.clone();
        let config = *model.config();
        let mut entries = Vec::new();
        let mut payload = Vec::new();
        let mut push = |name: String, kind: TensorKind, t: &Tensor, step_count: Option<u64>| {
            entries.push(TensorEntry {
                name,
                kind,
                shape: t.shape().to_vec(),
                offset: payload.len() as u64,
                step_count,
            });
            for x in t.data() {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        };
        for (name, p) in model.named_params() {
            push(name.clone(), TensorKind::Value, &p.value, Some(p.step_count));
            push(name.clone(), TensorKind::AdamM, &p.m, None);
            push(name, TensorKind::AdamV, &p.v, None);
        }
        for (name, b) in model.named_buffers() {
            push(name, TensorKind::Buffer, b, None);
        }
        let manifest = Manifest {
            config,
            seed: self.seed,
            train_config: self.train_config.clone(),
            vocabulary: self.vocab.words().to_vec(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(16 + json.len() + payload.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let manifest = read_manifest(bytes, path)?;
        let vocab = Vocabulary::from_words(manifest.0.vocabulary.clone())
            .map_err(|e| Error::load(path, format!("vocabulary: {e}")))?;
        let mut model = SfModel::new(manifest.0.config, 0).map_err(|e| Error::load(path, format!("config: {e}")))?;
        restore(&mut model, &manifest.0, manifest.1, path)?;
        let seed = manifest.0.seed;
        let ckpt = Self {
            model,
            vocab,
            seed,
            train_config: manifest.0.train_config,
        };
        if ckpt.vocab.len() != ckpt.model.config().vocab_size {
            return Err(Error::load(path, "vocabulary size disagrees with the model config"));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::load(path, e.to_string()))?;
        Self::from_bytes(&bytes, path)
    }
}

/// Overwrites `model`'s tensors with those stored in a checkpoint file.
/// Every tensor must exist with the same shape; the error names the first
/// offending one.
pub fn load_into(model: &mut SfModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::load(path, e.to_string()))?;
    let (manifest, payload) = read_manifest(&bytes, path)?;
    let mut staged = model.clone();
    restore(&mut staged, &manifest, payload, path)?;
    *model = staged;
    Ok(())
}

fn read_manifest<'a>(bytes: &'a [u8], path: &Path) -> Result<(Manifest, &'a [u8])> {
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::load(path, "not a checkpoint (bad magic or version)"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let end = usize::try_from(len)
        .ok()
        .and_then(|l| l.checked_add(16))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::load(path, "truncated manifest"))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[16..end]).map_err(|e| Error::load(path, format!("manifest: {e}")))?;
    Ok((manifest, &bytes[end..]))
}

fn restore(model: &mut SfModel, manifest: &Manifest, payload: &[u8], path: &Path) -> Result<()> {
    let read = |e: &TensorEntry, n: usize| -> Result<Vec<f64>> {
        let start = usize::try_from(e.offset).map_err(|_| Error::load(path, "offset overflow"))?;
        let end = start + 8 * n;
        if end > payload.len() {
            return Err(Error::load(path, format!("payload truncated in {}", e.name)));
        }
        Ok(payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    };
    let find = |name: &str, kind: TensorKind| {
        manifest
            .tensors
            .iter()
            .find(|e| e.name == name && e.kind == kind)
            .ok_or_else(|| Error::Mismatch(format!("parameter {name}: missing from checkpoint")))
    };
    let check = |e: &TensorEntry, want: &[usize]| {
        if e.shape != want {
            return Err(Error::Mismatch(format!(
                "parameter {}: checkpoint shape {:?}, model shape {:?}",
                e.name, e.shape, want
            )));
        }
        Ok(())
    };
    let mut expected = 0;
    for (name, p) in model.named_params() {
        for kind in [TensorKind::Value, TensorKind::AdamM, TensorKind::AdamV] {
            let e = find(&name, kind)?;
            check(e, p.shape())?;
            let data = read(e, p.len())?;
            let t = match kind {
                TensorKind::Value => {
                    p.step_count = e.step_count.unwrap_or(0);
                    &mut p.value
                }
                TensorKind::AdamM => &mut p.m,
                _ => &mut p.v,
            };
            t.data_mut().copy_from_slice(&data);
            expected += 1;
        }
        p.zero_grad();
    }
    for (name, b) in model.named_buffers() {
        let e = find(&name, TensorKind::Buffer)?;
        check(e, b.shape())?;
        let data = read(e, b.len())?;
        b.data_mut().copy_from_slice(&data);
        expected += 1;
    }
    if expected != manifest.tensors.len() {
        let known: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
        let extra = manifest
            .tensors
            .iter()
            .find(|e| e.kind != TensorKind::Buffer && !known.contains(&e.name))
            .map(|e| e.name.clone())
            .unwrap_or_else(|| "buffer".into());
        return Err(Error::Mismatch(format!("parameter {extra}: not part of this model")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ModelDims, Task, Variant};
    use crate::text::build_vocab;

    fn checkpoint(variant: Variant, shared: bool) -> Checkpoint {
        let vocab = build_vocab(["is it red ?", "yes it is", "a red dog"], 1).unwrap();
        let mut cfg = ModelConfig::new(Task::VisDial, variant, vocab.len());
        cfg.dims = ModelDims::compact(3, 3, 4, 3, 5);
        cfg.shared_embeddings = shared;
        Checkpoint::new(SfModel::new(cfg, 5).unwrap(), vocab, 5).unwrap()
    }

    #[test]
    fn round_trip_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = checkpoint(Variant::QIH, false);
        c.model.named_params()[0].1.step_count = 17;
        c.model.named_buffers()[0].1.data_mut()[0] = 0.25;
        c.train_config = Some(serde_json::json!({"learning_rate": 0.001}));
        let p = dir.path().join("a.ckpt");
        c.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back.to_bytes().unwrap(), std::fs::read(&p).unwrap());
        assert_eq!(back.model.clone().named_params()[0].1.step_count, 17);
    }

    #[test]
    fn embedding_table_count() {
        let count = |shared| {
            checkpoint(Variant::QIH, shared)
                .model
                .named_params()
                .iter()
                .filter(|(n, _)| n.starts_with("emb."))
                .count()
        };
        assert_eq!(count(true), 1);
        assert_eq!(count(false), 5);
    }

    #[test]
    fn bad_magic() {
        let e = Checkpoint::from_bytes(b"SFCKPT2\n\0\0\0\0\0\0\0\0", Path::new("x")).unwrap_err();
        assert!(matches!(e, Error::Load { .. }));
    }

    #[test]
    fn mismatched_dims_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ckpt");
        checkpoint(Variant::QIH, true).save(&p).unwrap();
        let mut other = checkpoint(Variant::QIH, true);
        let mut cfg = *other.model.config();
        cfg.dims.l_q = 6;
        other.model = SfModel::new(cfg, 1).unwrap();
        let e = load_into(&mut other.model, &p).unwrap_err().to_string();
        assert!(e.contains("query.lstm.w"), "{e}");
    }

    #[test]
    fn extra_tensor_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ckpt");
        checkpoint(Variant::QIH, true).save(&p).unwrap();
        let mut small = checkpoint(Variant::Q, true).model;
        let e = load_into(&mut small, &p).unwrap_err().to_string();
        assert!(e.contains("parameter"), "{e}");
    }
}

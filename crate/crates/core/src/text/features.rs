//! Binary image-feature file:
//! `"IMGF"`, `u32` row count, `u32` dim, then per row a `u64` image id and
//! `dim` `f32` values, all little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"IMGF";

/// Unit-ℓ2-normalized image feature vectors keyed by image id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageFeatureStore {
    dim: usize,
    rows: BTreeMap<u64, Vec<f64>>,
}

impl ImageFeatureStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, image_id: u64) -> Option<&[f64]> {
        self.rows.get(&image_id).map(Vec::as_slice)
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.rows.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[f64])> {
        self.rows.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    /// Stores `v / ‖v‖`; zero or non-finite vectors and duplicate ids are rejected.
    pub fn insert(&mut self, image_id: u64, mut v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Dimension(format!(
                "image {image_id}: feature length {} vs store dim {}",
                v.len(),
                self.dim
            )));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Argument(format!(
                "image {image_id}: feature vector has norm {norm}"
            )));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        if self.rows.insert(image_id, v).is_some() {
            return Err(Error::Argument(format!("duplicate image_id {image_id}")));
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |m: String| Error::load(path, m);
        if bytes.len() < 12 || &bytes[..4] != FEATURE_MAGIC {
            return Err(fail("missing IMGF header".into()));
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if dim == 0 {
            return Err(fail("feature dimension is zero".into()));
        }
        let row_bytes = 8 + 4 * dim;
        if bytes.len() != 12 + count * row_bytes {
            return Err(fail(format!(
                "expected {} bytes for {count} rows of dim {dim}, found {}",
                12 + count * row_bytes,
                bytes.len()
            )));
        }
        let mut store = Self::new(dim);
        for r in 0..count {
            let row = &bytes[12 + r * row_bytes..12 + (r + 1) * row_bytes];
            let id = u64::from_le_bytes(row[..8].try_into().unwrap());
            let v = row[8..]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            store
                .insert(id, v)
                .map_err(|e| fail(format!("row {r}: {e}")))?;
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path)?, path)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.rows.len() * (8 + 4 * self.dim));
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&(self.rows.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (id, v) in &self.rows {
            out.extend_from_slice(&id.to_le_bytes());
            for &x in v {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_on_insert_and_load() {
        let mut s = ImageFeatureStore::new(2);
        s.insert(3, vec![0.0, 2.0]).unwrap();
        assert_eq!(s.get(3), Some(&[0.0, 1.0][..]));

        let mut raw = Vec::new();
        raw.extend_from_slice(b"IMGF");
        raw.extend_from_slice(&1u32.to_le_bytes());
        raw.extend_from_slice(&2u32.to_le_bytes());
        raw.extend_from_slice(&9u64.to_le_bytes());
        raw.extend_from_slice(&1.2f32.to_le_bytes());
        raw.extend_from_slice(&1.6f32.to_le_bytes());
        let s = ImageFeatureStore::from_bytes(&raw, Path::new("mem")).unwrap();
        let norm: f64 = s.get(9).unwrap().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_zero_duplicate_and_truncated() {
        let mut s = ImageFeatureStore::new(2);
        assert!(s.insert(1, vec![0.0, 0.0]).is_err());
        s.insert(1, vec![1.0, 0.0]).unwrap();
        assert!(s.insert(1, vec![0.0, 1.0]).is_err());
        let bytes = s.to_bytes();
        assert!(ImageFeatureStore::from_bytes(&bytes[..bytes.len() - 1], Path::new("m")).is_err());
        assert!(ImageFeatureStore::from_bytes(b"NOPE", Path::new("m")).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ImageFeatureStore::new(3);
        s.insert(2, vec![1.0, 0.0, 0.0]).unwrap();
        s.insert(1, vec![0.0, 0.6, 0.8]).unwrap();
        let p = dir.path().join("f.bin");
        s.save(&p).unwrap();
        let t = ImageFeatureStore::load(&p).unwrap();
        assert_eq!(t.to_bytes(), s.to_bytes());
    }
}

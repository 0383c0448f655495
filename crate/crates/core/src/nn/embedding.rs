use crate::error::{Error, Result};
use crate::nn::Parameter;
use crate::tensor::Tensor;

/// Word embedding matrix of shape `[E × V]`; the embedding of word `id` is
/// column `id`.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub weight: Parameter,
}

impl Embedding {
    pub fn new(dim: usize, vocab_size: usize) -> Self {
        Self {
            weight: Parameter::zeros(&[dim, vocab_size]),
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.weight.value.cols()
    }

    fn check(&self, id: usize) -> Result<()> {
        if id >= self.vocab_size() {
            return Err(Error::Index(format!(
                "word id {id} outside vocabulary of {}",
                self.vocab_size()
            )));
        }
        Ok(())
    }

    pub fn lookup(&self, ids: &[usize]) -> Result<Vec<Vec<f64>>> {
        let (e, v) = (self.dim(), self.vocab_size());
        let w = self.weight.value.data();
        ids.iter()
            .map(|&id| {
                self.check(id)?;
                Ok((0..e).map(|r| w[r * v + id]).collect())
            })
            .collect()
    }

    /// Time-major batch lookup: step `t` is a `[B × E]` matrix whose row `b`
    /// holds word `t` of sequence `b`, or zeros once that sequence has ended.
    pub fn lookup_batch(&self, seqs: &[&[usize]]) -> Result<Vec<Tensor>> {
        let (e, v) = (self.dim(), self.vocab_size());
        let steps = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let w = self.weight.value.data();
        let mut out = vec![Tensor::zeros(&[seqs.len(), e]); steps];
        for (b, seq) in seqs.iter().enumerate() {
            for (t, &id) in seq.iter().enumerate() {
                self.check(id)?;
                let row = out[t].row_mut(b);
                for (r, x) in row.iter_mut().enumerate() {
                    *x = w[r * v + id];
                }
            }
        }
        Ok(out)
    }

    /// Scatter-adds per-token gradients into the touched columns.
    pub fn backward(&mut self, ids: &[usize], grads: &[Vec<f64>]) -> Result<()> {
        if ids.len() != grads.len() {
            return Err(Error::Dimension(format!(
                "{} ids but {} gradients",
                ids.len(),
                grads.len()
            )));
        }
        let (e, v) = (self.dim(), self.vocab_size());
        for (&id, g) in ids.iter().zip(grads) {
            self.check(id)?;
            if g.len() != e {
                return Err(Error::Dimension(format!("gradient length {} vs {e}", g.len())));
            }
            let dw = self.weight.grad.data_mut();
            for (r, gr) in g.iter().enumerate() {
                dw[r * v + id] += gr;
            }
        }
        Ok(())
    }

    /// Batch counterpart of [`backward`](Self::backward) for the layout of
    /// [`lookup_batch`](Self::lookup_batch).
    pub fn backward_batch(&mut self, seqs: &[&[usize]], dsteps: &[Tensor]) -> Result<()> {
        let (e, v) = (self.dim(), self.vocab_size());
        for (b, seq) in seqs.iter().enumerate() {
            for (t, &id) in seq.iter().enumerate() {
                self.check(id)?;
                let g = dsteps
                    .get(t)
                    .ok_or_else(|| Error::Dimension(format!("missing gradient for step {t}")))?
                    .row(b);
                debug_assert_eq!(g.len(), e);
                let dw = self.weight.grad.data_mut();
                for (r, gr) in g.iter().enumerate() {
                    dw[r * v + id] += gr;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_lookup() {
        let mut emb = Embedding::new(3, 3);
        emb.weight.value =
            Tensor::from_vec(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        assert_eq!(emb.lookup(&[2]).unwrap(), vec![vec![0.0, 0.0, 1.0]]);
    }

    #[test]
    fn repeated_ids_accumulate() {
        let mut emb = Embedding::new(2, 3);
        emb.backward(&[1, 1], &[vec![1.0, 2.0], vec![0.5, -1.0]])
            .unwrap();
        let g = emb.weight.grad.data();
        assert_eq!([g[1], g[3 + 1]], [1.5, 1.0]);
        assert_eq!([g[0], g[2], g[3], g[5]], [0.0; 4]);
    }

    #[test]
    fn out_of_range_id() {
        let emb = Embedding::new(2, 3);
        assert!(matches!(emb.lookup(&[3]), Err(Error::Index(_))));
        assert!(matches!(emb.lookup_batch(&[&[0, 5]]), Err(Error::Index(_))));
    }
}

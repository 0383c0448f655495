use crate::error::{Error, Result};
use crate::nn::{Mode, Parameter};
use crate::tensor::Tensor;

/// Per-feature batch normalization over the rows of a `[B × dim]` batch.
///
/// Train mode normalizes with the biased batch variance and folds the batch
/// statistics into the running estimates (unbiased variance, PyTorch-style
/// momentum). Eval mode uses only the running estimates, so each row is
/// transformed independently of the rest of the batch.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub epsilon: f64,
    pub mode: Mode,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
enum BnCache {
    Batch { x_hat: Tensor, inv_std: Vec<f64> },
    Running { x_hat: Tensor, inv_std: Vec<f64> },
}

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;

impl BatchNorm1d {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Parameter::from_value(Tensor::filled(&[dim], 1.0)),
            beta: Parameter::zeros(&[dim]),
            running_mean: Tensor::zeros(&[dim]),
            running_var: Tensor::filled(&[dim], 1.0),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
            mode: Mode::Train,
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.dim() {
            return Err(Error::Dimension(format!(
                "batch norm expects [B × {}], got {:?}",
                self.dim(),
                x.shape()
            )));
        }
        Ok(())
    }

    fn running_inv_std(&self) -> Vec<f64> {
        self.running_var
            .data()
            .iter()
            .map(|v| 1.0 / (v + self.epsilon).sqrt())
            .collect()
    }

    fn apply(&self, x: &Tensor, mean: &[f64], inv_std: &[f64]) -> (Tensor, Tensor) {
        let (g, b) = (self.gamma.value.data(), self.beta.value.data());
        let mut x_hat = x.clone();
        let mut y = x.clone();
        for r in 0..x.rows() {
            let (xh, yr) = (x_hat.row_mut(r), y.row_mut(r));
            for j in 0..xh.len() {
                xh[j] = (xh[j] - mean[j]) * inv_std[j];
                yr[j] = g[j] * xh[j] + b[j];
            }
        }
        (y, x_hat)
    }

    /// Eval-mode transform with running statistics; no state is touched.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let inv_std = self.running_inv_std();
        Ok(self.apply(x, self.running_mean.data(), &inv_std).0)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        if self.mode == Mode::Eval {
            let inv_std = self.running_inv_std();
            let (y, x_hat) = self.apply(x, self.running_mean.data(), &inv_std);
            self.cache = Some(BnCache::Running { x_hat, inv_std });
            return Ok(y);
        }
        let n = x.rows();
        if n < 2 {
            return Err(Error::Argument(format!(
                "train-mode batch norm needs at least 2 rows, got {n}"
            )));
        }
        let d = self.dim();
        let mut mean = vec![0.0; d];
        for r in 0..n {
            crate::tensor::axpy(1.0, x.row(r), &mut mean);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for r in 0..n {
            for (j, &v) in x.row(r).iter().enumerate() {
                var[j] += (v - mean[j]) * (v - mean[j]);
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let (y, x_hat) = self.apply(x, &mean, &inv_std);

        let unbias = n as f64 / (n as f64 - 1.0);
        let mom = self.momentum;
        for j in 0..d {
            let rm = &mut self.running_mean.data_mut()[j];
            *rm = (1.0 - mom) * *rm + mom * mean[j];
            let rv = &mut self.running_var.data_mut()[j];
            *rv = (1.0 - mom) * *rv + mom * var[j] * unbias;
        }
        self.cache = Some(BnCache::Batch { x_hat, inv_std });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("batch norm backward before forward".into()))?;
        self.check(dy)?;
        let (n, d) = (dy.rows(), self.dim());
        let gamma = self.gamma.value.data().to_vec();
        match cache {
            BnCache::Running { x_hat, inv_std } => {
                let mut dx = dy.clone();
                for r in 0..n {
                    let (g, xh) = (dy.row(r), x_hat.row(r));
                    for j in 0..d {
                        self.gamma.grad.data_mut()[j] += g[j] * xh[j];
                        self.beta.grad.data_mut()[j] += g[j];
                    }
                    let row = dx.row_mut(r);
                    for j in 0..d {
                        row[j] *= gamma[j] * inv_std[j];
                    }
                }
                Ok(dx)
            }
            BnCache::Batch { x_hat, inv_std } => {
                if x_hat.rows() != n {
                    return Err(Error::Dimension(format!(
                        "batch norm upstream has {n} rows, forward had {}",
                        x_hat.rows()
                    )));
                }
                let mut sum_dy = vec![0.0; d];
                let mut sum_dy_xhat = vec![0.0; d];
                for r in 0..n {
                    let (g, xh) = (dy.row(r), x_hat.row(r));
                    for j in 0..d {
                        sum_dy[j] += g[j];
                        sum_dy_xhat[j] += g[j] * xh[j];
                    }
                }
                for j in 0..d {
                    self.beta.grad.data_mut()[j] += sum_dy[j];
                    self.gamma.grad.data_mut()[j] += sum_dy_xhat[j];
                }
                let nf = n as f64;
                let mut dx = Tensor::zeros(&[n, d]);
                for r in 0..n {
                    let (g, xh) = (dy.row(r), x_hat.row(r));
                    let out = dx.row_mut(r);
                    for j in 0..d {
                        out[j] = gamma[j] * inv_std[j] / nf
                            * (nf * g[j] - sum_dy[j] - xh[j] * sum_dy_xhat[j]);
                    }
                }
                Ok(dx)
            }
        }
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.gamma, &mut self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_symmetry() {
        let mut bn = BatchNorm1d::new(1);
        let y = bn
            .forward(&Tensor::from_rows(&[vec![0.0], vec![2.0]]).unwrap())
            .unwrap();
        let s = 1.0 / (1.0 + BN_EPSILON).sqrt();
        assert!((y.data()[0] + s).abs() < 1e-15);
        assert!((y.data()[1] - s).abs() < 1e-15);
    }

    #[test]
    fn eval_with_unit_running_stats_is_identity() {
        let mut bn = BatchNorm1d::new(3);
        bn.mode = Mode::Eval;
        let x = Tensor::from_rows(&[vec![0.5, -2.0, 7.0]]).unwrap();
        let y = bn.forward(&x).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() <= b.abs() * 1e-5);
        }
        assert_eq!(bn.infer(&x).unwrap(), y);
    }

    #[test]
    fn train_mode_needs_two_rows() {
        let mut bn = BatchNorm1d::new(2);
        assert!(matches!(
            bn.forward(&Tensor::zeros(&[1, 2])),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn running_stats_move_toward_batch() {
        let mut bn = BatchNorm1d::new(1);
        bn.forward(&Tensor::from_rows(&[vec![1.0], vec![3.0]]).unwrap())
            .unwrap();
        assert!((bn.running_mean.data()[0] - 0.2).abs() < 1e-15);
        // unbiased var of {1,3} is 2
        assert!((bn.running_var.data()[0] - (0.9 + 0.2)).abs() < 1e-15);
    }
}

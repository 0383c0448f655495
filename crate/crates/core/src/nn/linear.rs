use crate::error::{Error, Result};
use crate::nn::Parameter;
use crate::tensor::{self, Tensor};

/// Fully connected layer `y = W x + b` applied to each row of a batch.
#[derive(Debug, Clone)]
pub struct Linear {
    /// `[out × in]`
    pub weight: Parameter,
    /// `[out]`
    pub bias: Parameter,
    saved_input: Option<Tensor>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Parameter::zeros(&[out_dim, in_dim]),
            bias: Parameter::zeros(&[out_dim]),
            saved_input: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.rows()
    }

    /// Evaluates without caching. `x` is `[B × in]`.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.cols() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "linear expects [B × {}], got {:?}",
                self.in_dim(),
                x.shape()
            )));
        }
        tensor::matmul_xwt(x, &self.weight.value, Some(self.bias.value.data()))
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = self.infer(x)?;
        self.saved_input = Some(x.clone());
        Ok(y)
    }

    /// Accumulates `dW += gᵀx`, `db += Σ g` and returns `g W`.
    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self
            .saved_input
            .take()
            .ok_or_else(|| Error::State("linear backward before forward".into()))?;
        if dy.shape() != [x.rows(), self.out_dim()] {
            return Err(Error::Dimension(format!(
                "linear upstream {:?}, expected [{}, {}]",
                dy.shape(),
                x.rows(),
                self.out_dim()
            )));
        }
        tensor::accumulate_dyt_x(dy, &x, &mut self.weight.grad)?;
        let db = self.bias.grad.data_mut();
        for r in 0..dy.rows() {
            tensor::axpy(1.0, dy.row(r), db);
        }
        tensor::matmul_dy_w(dy, &self.weight.value)
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity2() -> Linear {
        let mut l = Linear::new(2, 2);
        l.weight.value = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        l
    }

    #[test]
    fn identity_forward() {
        let l = identity2();
        let y = l.infer(&Tensor::from_rows(&[vec![3.0, -1.0]]).unwrap()).unwrap();
        assert_eq!(y.data(), &[3.0, -1.0]);
    }

    #[test]
    fn zero_weight_returns_bias() {
        let mut l = Linear::new(3, 2);
        l.bias.value = Tensor::from_vec(&[2], vec![5.0, 5.0]).unwrap();
        let y = l.infer(&Tensor::from_rows(&[vec![1.0, -7.0, 2.5]]).unwrap()).unwrap();
        assert_eq!(y.data(), &[5.0, 5.0]);
    }

    #[test]
    fn identity_backward_and_zero_upstream() {
        let mut l = identity2();
        l.forward(&Tensor::from_rows(&[vec![2.0, 3.0]]).unwrap()).unwrap();
        let dx = l.backward(&Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0]);

        let mut l = identity2();
        l.forward(&Tensor::from_rows(&[vec![2.0, 3.0]]).unwrap()).unwrap();
        let dx = l.backward(&Tensor::zeros(&[1, 2])).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(l.weight.grad.data().iter().all(|&v| v == 0.0));
        assert!(l.bias.grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn errors() {
        let mut l = Linear::new(3, 2);
        assert!(matches!(
            l.backward(&Tensor::zeros(&[1, 2])),
            Err(Error::State(_))
        ));
        assert!(matches!(
            l.forward(&Tensor::zeros(&[1, 4])),
            Err(Error::Dimension(_))
        ));
    }
}

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Elementwise `max(0, x)`.
pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

/// ReLU with a cached pass-through mask. The subgradient at exactly 0 is 0.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.mask = Some(x.data().iter().map(|&v| v > 0.0).collect());
        relu(x)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let mask = self
            .mask
            .take()
            .ok_or_else(|| Error::State("relu backward before forward".into()))?;
        if mask.len() != dy.len() {
            return Err(Error::Dimension(format!(
                "relu upstream has {} values, forward had {}",
                dy.len(),
                mask.len()
            )));
        }
        let data = dy
            .data()
            .iter()
            .zip(&mask)
            .map(|(&g, &m)| if m { g } else { 0.0 })
            .collect();
        Tensor::from_vec(dy.shape(), data)
    }
}

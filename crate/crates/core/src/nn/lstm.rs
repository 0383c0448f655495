//! Single-layer LSTM sentence encoder with backpropagation through time.
//!
//! Gate pre-activations are `z = W [x_t ⊕ h_{t-1}] + b` with `W: [4L × (E+L)]`,
//! rows laid out as input, forget, candidate, output. Batches may mix sequence
//! lengths: once a row's sequence has ended its state is carried unchanged, so
//! the returned hidden state is the one produced at that row's final token.

use crate::error::{Error, Result};
use crate::nn::Parameter;
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone)]
struct StepCache {
    /// `[B × (E+L)]` concatenated input and previous hidden state.
    xh: Tensor,
    /// `[B × 4L]` post-activation gates (i, f, g, o).
    gates: Tensor,
    c_prev: Tensor,
    tanh_c: Tensor,
    active: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct Lstm {
    input_dim: usize,
    hidden_dim: usize,
    pub weight: Parameter,
    pub bias: Parameter,
    cache: Option<Vec<StepCache>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Lstm {
    pub fn new(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            weight: Parameter::zeros(&[4 * hidden_dim, input_dim + hidden_dim]),
            bias: Parameter::zeros(&[4 * hidden_dim]),
            cache: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    fn run(&self, steps: &[Tensor], lengths: &[usize], keep: bool) -> Result<(Tensor, Vec<StepCache>)> {
        let (e, l) = (self.input_dim, self.hidden_dim);
        let b = lengths.len();
        if b == 0 {
            return Err(Error::Argument("lstm batch is empty".into()));
        }
        if let Some(i) = lengths.iter().position(|&n| n == 0) {
            return Err(Error::Argument(format!("sequence {i} is empty")));
        }
        let max_len = *lengths.iter().max().unwrap();
        if steps.len() != max_len {
            return Err(Error::Dimension(format!(
                "{} input steps for longest sequence of {max_len}",
                steps.len()
            )));
        }
        let mut h = Tensor::zeros(&[b, l]);
        let mut c = Tensor::zeros(&[b, l]);
        let mut caches = Vec::with_capacity(if keep { max_len } else { 0 });
        for (t, x) in steps.iter().enumerate() {
            if x.shape() != [b, e] {
                return Err(Error::Dimension(format!(
                    "step {t} input {:?}, expected [{b}, {e}]",
                    x.shape()
                )));
            }
            let mut xh = Tensor::zeros(&[b, e + l]);
            for r in 0..b {
                let row = xh.row_mut(r);
                row[..e].copy_from_slice(x.row(r));
                row[e..].copy_from_slice(h.row(r));
            }
            let mut gates = tensor::matmul_xwt(&xh, &self.weight.value, Some(self.bias.value.data()))?;
            let active: Vec<bool> = lengths.iter().map(|&n| t < n).collect();
            let c_prev = c.clone();
            let mut tanh_c = Tensor::zeros(&[b, l]);
            for r in 0..b {
                if !active[r] {
                    continue;
                }
                let z = gates.row_mut(r);
                for j in 0..l {
                    z[j] = sigmoid(z[j]);
                    z[l + j] = sigmoid(z[l + j]);
                    z[2 * l + j] = z[2 * l + j].tanh();
                    z[3 * l + j] = sigmoid(z[3 * l + j]);
                }
                let (cr, hr, tr) = (c.row_mut(r), h.row_mut(r), tanh_c.row_mut(r));
                for j in 0..l {
                    cr[j] = z[l + j] * cr[j] + z[j] * z[2 * l + j];
                    tr[j] = cr[j].tanh();
                    hr[j] = z[3 * l + j] * tr[j];
                }
            }
            if keep {
                caches.push(StepCache {
                    xh,
                    gates,
                    c_prev,
                    tanh_c,
                    active,
                });
            }
        }
        debug_assert!(h.all_finite());
        Ok((h, caches))
    }

    /// Encodes a time-major batch (`steps[t]` is `[B × E]`) and returns the
    /// final hidden states `[B × L]` without caching.
    pub fn infer(&self, steps: &[Tensor], lengths: &[usize]) -> Result<Tensor> {
        Ok(self.run(steps, lengths, false)?.0)
    }

    pub fn forward(&mut self, steps: &[Tensor], lengths: &[usize]) -> Result<Tensor> {
        let (h, caches) = self.run(steps, lengths, true)?;
        self.cache = Some(caches);
        Ok(h)
    }

    /// Encodes one sequence from zero state and returns its final hidden state.
    pub fn encode(&mut self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        if inputs.is_empty() {
            return Err(Error::Argument("cannot encode an empty sequence".into()));
        }
        let steps = inputs
            .iter()
            .map(|x| Tensor::from_vec(&[1, x.len()], x.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.forward(&steps, &[inputs.len()])?.into_data())
    }

    /// Backpropagates `dh` (gradient of the final hidden states) through time,
    /// accumulating weight gradients. Returns per-step input gradients in the
    /// same time-major layout as the forward inputs.
    pub fn backward(&mut self, dh_final: &Tensor) -> Result<Vec<Tensor>> {
        let caches = self
            .cache
            .take()
            .ok_or_else(|| Error::State("lstm backward before forward".into()))?;
        let (e, l) = (self.input_dim, self.hidden_dim);
        let b = caches[0].active.len();
        if dh_final.shape() != [b, l] {
            return Err(Error::Dimension(format!(
                "lstm upstream {:?}, expected [{b}, {l}]",
                dh_final.shape()
            )));
        }
        let mut dh = dh_final.clone();
        let mut dc = Tensor::zeros(&[b, l]);
        let mut dxs = vec![Tensor::zeros(&[b, e]); caches.len()];
        for (t, step) in caches.iter().enumerate().rev() {
            let mut dz = Tensor::zeros(&[b, 4 * l]);
            for r in 0..b {
                if !step.active[r] {
                    continue;
                }
                let z = step.gates.row(r);
                let (dhr, tc, cp) = (dh.row(r), step.tanh_c.row(r), step.c_prev.row(r));
                let dcr = dc.row_mut(r);
                let dzr = dz.row_mut(r);
                for j in 0..l {
                    let (i, f, g, o) = (z[j], z[l + j], z[2 * l + j], z[3 * l + j]);
                    let dct = dcr[j] + dhr[j] * o * (1.0 - tc[j] * tc[j]);
                    dzr[j] = dct * g * i * (1.0 - i);
                    dzr[l + j] = dct * cp[j] * f * (1.0 - f);
                    dzr[2 * l + j] = dct * i * (1.0 - g * g);
                    dzr[3 * l + j] = dhr[j] * tc[j] * o * (1.0 - o);
                    dcr[j] = dct * f;
                }
            }
            tensor::accumulate_dyt_x(&dz, &step.xh, &mut self.weight.grad)?;
            let db = self.bias.grad.data_mut();
            for r in 0..b {
                if step.active[r] {
                    tensor::axpy(1.0, dz.row(r), db);
                }
            }
            let dxh = tensor::matmul_dy_w(&dz, &self.weight.value)?;
            for r in 0..b {
                if step.active[r] {
                    let g = dxh.row(r);
                    dxs[t].row_mut(r).copy_from_slice(&g[..e]);
                    dh.row_mut(r).copy_from_slice(&g[e..]);
                }
            }
        }
        Ok(dxs)
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

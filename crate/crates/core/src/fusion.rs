//! Similarity scoring + fusion: an MLP that maps one concatenated
//! (context, option) row to a scalar fitness score.

use crate::config::{ModelConfig, Variant};
use crate::encoders::EncodedContext;
use crate::error::{Error, Result};
use crate::nn::{relu, softmax_cross_entropy, BatchNorm1d, Linear, Mode, Parameter, Relu};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct HiddenLayer {
    pub linear: Linear,
    pub norm: BatchNorm1d,
    relu: Relu,
}

/// `depth` blocks of Linear → BN → ReLU with widths `⌊L_S/2⌋` (and `⌊L_S/4⌋`),
/// then a bare Linear to one score.
#[derive(Debug, Clone)]
pub struct FusionMlp {
    pub variant: Variant,
    pub hidden: Vec<HiddenLayer>,
    pub output: Linear,
}

impl FusionMlp {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut width = cfg.fusion_input();
        let hidden = cfg
            .mlp_hidden()
            .into_iter()
            .map(|h| {
                let layer = HiddenLayer {
                    linear: Linear::new(width, h),
                    norm: BatchNorm1d::new(h),
                    relu: Relu::new(),
                };
                width = h;
                layer
            })
            .collect();
        Self {
            variant: cfg.variant,
            hidden,
            output: Linear::new(width, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden
            .first()
            .map_or(self.output.in_dim(), |l| l.linear.in_dim())
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.hidden.iter().map(|l| l.linear.out_dim()).collect()
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.hidden.iter_mut().for_each(|l| l.norm.mode = mode);
    }

    /// Eval-mode scores for `[N × L_S]` rows; each row is scored on its own.
    pub fn infer(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut h = x.clone();
        for l in &self.hidden {
            h = relu(&l.norm.infer(&l.linear.infer(&h)?)?);
        }
        Ok(self.output.infer(&h)?.into_data())
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Vec<f64>> {
        let mut h = x.clone();
        for l in &mut self.hidden {
            let z = l.linear.forward(&h)?;
            let z = l.norm.forward(&z)?;
            h = l.relu.forward(&z);
        }
        Ok(self.output.forward(&h)?.into_data())
    }

    /// Returns the gradient with respect to the `[N × L_S]` input rows.
    pub fn backward(&mut self, dscores: &[f64]) -> Result<Tensor> {
        let dy = Tensor::from_vec(&[dscores.len(), 1], dscores.to_vec())?;
        let mut g = self.output.backward(&dy)?;
        for l in self.hidden.iter_mut().rev() {
            g = l.relu.backward(&g)?;
            g = l.norm.backward(&g)?;
            g = l.linear.backward(&g)?;
        }
        Ok(g)
    }

    pub fn named_params(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut out = Vec::new();
        for (i, l) in self.hidden.iter_mut().enumerate() {
            let [w, b] = l.linear.params_mut();
            out.push((format!("mlp.{i}.fc.w"), w));
            out.push((format!("mlp.{i}.fc.b"), b));
            let [g, b] = l.norm.params_mut();
            out.push((format!("mlp.{i}.bn.gamma"), g));
            out.push((format!("mlp.{i}.bn.beta"), b));
        }
        let [w, b] = self.output.params_mut();
        out.push(("mlp.out.w".into(), w));
        out.push(("mlp.out.b".into(), b));
        out
    }

    pub fn named_buffers(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.hidden.iter_mut().enumerate() {
            out.push((format!("mlp.{i}.bn.running_mean"), &mut l.norm.running_mean));
            out.push((format!("mlp.{i}.bn.running_var"), &mut l.norm.running_var));
        }
        out
    }
}

/// `query ⊕ image ⊕ caption ⊕ history ⊕ option`, masked blocks omitted.
pub fn assemble(ctx: &EncodedContext, option: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(ctx.width() + option.len());
    row.extend_from_slice(&ctx.query);
    row.extend_from_slice(&ctx.image);
    row.extend_from_slice(&ctx.caption);
    row.extend_from_slice(&ctx.history);
    row.extend_from_slice(option);
    row
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredOptions {
    pub scores: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub predicted_index: usize,
}

impl ScoredOptions {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Argument("no options to score".into()));
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let probabilities = exps.into_iter().map(|e| e / z).collect();
        let predicted_index = predict(&scores);
        Ok(Self {
            scores,
            probabilities,
            predicted_index,
        })
    }

    /// Cross-entropy of the ground truth against these scores.
    pub fn loss(&self, gt_index: usize) -> Result<f64> {
        Ok(softmax_cross_entropy(&self.scores, gt_index)?.0)
    }
}

/// Index of the highest score; the lowest index wins ties.
pub fn predict(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

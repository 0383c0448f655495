//! The full similarity-scoring + fusion model: encoders feeding the MLP.

use crate::config::ModelConfig;
use crate::encoders::{EncodedContext, EncoderBank};
use crate::error::{Error, Result};
use crate::example::Example;
use crate::fusion::{assemble, FusionMlp, ScoredOptions};
use crate::nn::{he_normal_init, normal_init, softmax_cross_entropy, Differentiable, Mode, Parameter};
use crate::rng::derive_seed;
use crate::tensor::Tensor;
use crate::text::{ImageFeatureStore, Tokens};

#[derive(Debug, Clone)]
pub struct SfModel {
    config: ModelConfig,
    pub bank: EncoderBank,
    pub mlp: FusionMlp,
    pending: Option<BatchLayout>,
}

#[derive(Debug, Clone)]
struct BatchLayout {
    /// Number of options per example, in batch order.
    counts: Vec<usize>,
}

impl SfModel {
    /// Builds a model with He-normal weights, unit-normal word embeddings,
    /// zero biases (LSTM forget gates at 1) and identity batch norms.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut model = Self {
            config,
            bank: EncoderBank::new(&config),
            mlp: FusionMlp::new(&config),
            pending: None,
        };
        for (i, (name, p)) in model.named_params().into_iter().enumerate() {
            let s = derive_seed(seed, &[i as u64]);
            if name.starts_with("emb.") {
                normal_init(p, 1.0, s)?;
            } else if name.ends_with(".w") {
                let fan_in = p.value.cols();
                he_normal_init(p, fan_in, s)?;
            } else if name.ends_with("lstm.b") {
                let l = p.len() / 4;
                p.value.data_mut()[l..2 * l].iter_mut().for_each(|b| *b = 1.0);
            }
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.bank.set_mode(mode);
        self.mlp.set_mode(mode);
    }

    /// All trainable parameters in a fixed order with stable names.
    pub fn named_params(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut out = self.bank.named_params();
        out.extend(self.mlp.named_params());
        out
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.named_params().into_iter().map(|(_, p)| p)
    }

    /// Batch-norm running statistics.
    pub fn named_buffers(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = self.bank.named_buffers();
        out.extend(self.mlp.named_buffers());
        out
    }

    pub fn parameter_count(&mut self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().for_each(Parameter::zero_grad);
    }

    pub fn encode_context(&self, ex: &Example, features: Option<&ImageFeatureStore>) -> Result<EncodedContext> {
        self.bank.encode_context(ex, features)
    }

    /// Eval-mode scores of option embeddings `[K × L_O]` against one context.
    pub fn score_options(&self, ctx: &EncodedContext, options: &Tensor) -> Result<ScoredOptions> {
        if ctx.variant != self.config.variant {
            return Err(Error::Mismatch(format!(
                "context built for variant {}, model is {}",
                ctx.variant, self.config.variant
            )));
        }
        if options.rows() == 0 {
            return Err(Error::Argument("no options to score".into()));
        }
        let rows: Vec<Vec<f64>> = (0..options.rows())
            .map(|k| assemble(ctx, options.row(k)))
            .collect();
        let x = Tensor::from_rows(&rows)?;
        if x.cols() != self.mlp.input_dim() {
            return Err(Error::Dimension(format!(
                "fused row has {} values, network expects {}",
                x.cols(),
                self.mlp.input_dim()
            )));
        }
        ScoredOptions::new(self.mlp.infer(&x)?)
    }

    /// Eval-mode scoring of an example's own option list.
    pub fn score_example(&self, ex: &Example, features: Option<&ImageFeatureStore>) -> Result<ScoredOptions> {
        self.score_candidates(ex, &ex.options, features)
    }

    /// Eval-mode scoring of arbitrary candidates in an example's context.
    pub fn score_candidates(
        &self,
        ex: &Example,
        options: &[Tokens],
        features: Option<&ImageFeatureStore>,
    ) -> Result<ScoredOptions> {
        let ctx = self.encode_context(ex, features)?;
        let refs: Vec<&[usize]> = options.iter().map(|o| &o[..]).collect();
        let embs = self.bank.encode_options(&refs)?;
        self.score_options(&ctx, &embs)
    }

    /// Training forward over a minibatch, caching for [`backward`](Self::backward).
    /// Batch norm statistics span every (context, option) row of the batch.
    pub fn forward(&mut self, batch: &[&Example], features: Option<&ImageFeatureStore>) -> Result<Vec<Vec<f64>>> {
        if batch.is_empty() {
            return Err(Error::Argument("empty minibatch".into()));
        }
        let d = self.config.dims;
        let images = batch
            .iter()
            .map(|ex| self.bank.image_block(ex.image_id, features))
            .collect::<Result<Vec<_>>>()?;
        let (q, c, h) = self.bank.forward_context(batch)?;
        let counts: Vec<usize> = batch.iter().map(|ex| ex.options.len()).collect();
        if let Some(i) = counts.iter().position(|&k| k == 0) {
            return Err(Error::Argument(format!("example {i} has no options")));
        }
        let options: Vec<Tokens> = batch.iter().flat_map(|ex| ex.options.iter().cloned()).collect();
        let o = self.bank.forward_options(options)?;

        let width = self.config.fusion_input();
        let mut x = Tensor::zeros(&[o.rows(), width]);
        let mut row = 0;
        for (b, &k) in counts.iter().enumerate() {
            for _ in 0..k {
                let dst = x.row_mut(row);
                let mut at = 0;
                let mut put = |src: &[f64]| {
                    dst[at..at + src.len()].copy_from_slice(src);
                    at += src.len();
                };
                put(q.row(b));
                put(&images[b]);
                if let (Some(c), Some(h)) = (&c, &h) {
                    put(c.row(b));
                    put(h.row(b));
                }
                put(o.row(row));
                debug_assert_eq!(at, width);
                row += 1;
            }
        }
        debug_assert_eq!(width, d.fusion_input(self.config.variant));
        let flat = self.mlp.forward(&x)?;
        let mut scores = Vec::with_capacity(batch.len());
        let mut at = 0;
        for &k in &counts {
            scores.push(flat[at..at + k].to_vec());
            at += k;
        }
        self.pending = Some(BatchLayout { counts });
        Ok(scores)
    }

    /// Backpropagates per-example score gradients into every parameter.
    pub fn backward(&mut self, dscores: &[Vec<f64>]) -> Result<()> {
        let layout = self
            .pending
            .take()
            .ok_or_else(|| Error::State("model backward before forward".into()))?;
        if dscores.len() != layout.counts.len()
            || dscores.iter().zip(&layout.counts).any(|(g, &k)| g.len() != k)
        {
            return Err(Error::Dimension("score gradients do not match the batch".into()));
        }
        let flat: Vec<f64> = dscores.iter().flatten().copied().collect();
        let dx = self.mlp.backward(&flat)?;

        let d = self.config.dims;
        let v = self.config.variant;
        let b = layout.counts.len();
        let mut dq = Tensor::zeros(&[b, d.l_q]);
        let mut dc = v.uses_history().then(|| Tensor::zeros(&[b, d.l_c]));
        let mut dh = v.uses_history().then(|| Tensor::zeros(&[b, d.history_len()]));
        let mut do_ = Tensor::zeros(&[dx.rows(), d.l_o]);
        let mut row = 0;
        for (ex, &k) in layout.counts.iter().enumerate() {
            for _ in 0..k {
                let g = dx.row(row);
                let mut at = 0;
                let mut take = |dst: &mut [f64], skip: usize| {
                    at += skip;
                    crate::tensor::axpy(1.0, &g[at..at + dst.len()], dst);
                    at += dst.len();
                };
                take(dq.row_mut(ex), 0);
                let skip_image = if v.uses_image() { d.l_i } else { 0 };
                if let (Some(dc), Some(dh)) = (&mut dc, &mut dh) {
                    take(dc.row_mut(ex), skip_image);
                    take(dh.row_mut(ex), 0);
                    take(do_.row_mut(row), 0);
                } else {
                    take(do_.row_mut(row), skip_image);
                }
                row += 1;
            }
        }
        self.bank.backward(&dq, dc.as_ref(), dh.as_ref(), &do_)
    }

    /// Mean cross-entropy of a minibatch, with gradients accumulated.
    pub fn loss_and_grad(&mut self, batch: &[&Example], features: Option<&ImageFeatureStore>) -> Result<f64> {
        let scores = self.forward(batch, features)?;
        let n = batch.len() as f64;
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(batch.len());
        for (s, ex) in scores.iter().zip(batch) {
            let (l, mut g) = softmax_cross_entropy(s, ex.gt_index)?;
            total += l;
            g.iter_mut().for_each(|x| *x /= n);
            grads.push(g);
        }
        self.backward(&grads)?;
        Ok(total / n)
    }

    /// Mean cross-entropy of a minibatch in the current mode, no gradients.
    pub fn batch_loss(&mut self, batch: &[&Example], features: Option<&ImageFeatureStore>) -> Result<f64> {
        let scores = self.forward(batch, features)?;
        self.pending = None;
        let mut total = 0.0;
        for (s, ex) in scores.iter().zip(batch) {
            total += softmax_cross_entropy(s, ex.gt_index)?.0;
        }
        Ok(total / batch.len() as f64)
    }
}

/// A fixed minibatch viewed as a differentiable objective of the model.
pub struct BatchObjective<'a> {
    pub model: &'a mut SfModel,
    pub batch: &'a [Example],
    pub features: Option<&'a ImageFeatureStore>,
}

impl Differentiable for BatchObjective<'_> {
    fn named_params(&mut self) -> Vec<(String, &mut Parameter)> {
        self.model.named_params()
    }

    fn loss(&mut self) -> Result<f64> {
        let refs: Vec<&Example> = self.batch.iter().collect();
        self.model.batch_loss(&refs, self.features)
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        let refs: Vec<&Example> = self.batch.iter().collect();
        self.model.loss_and_grad(&refs, self.features)
    }
}

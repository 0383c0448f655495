//! Sentence, caption and history encoders producing the fixed-size context
//! blocks that the fusion network consumes.

use crate::config::{ModelConfig, Task, Variant};
use crate::error::{Error, Result};
use crate::example::{Example, Query};
use crate::nn::{BatchNorm1d, Embedding, Linear, Lstm, Mode, Parameter, Relu};
use crate::tensor::Tensor;
use crate::text::{ImageFeatureStore, Tokens, EMPTY, STOP};

/// Token sequence standing in for a missing history round.
pub const EMPTY_PAIR_SIDE: [usize; 2] = [EMPTY, STOP];

/// Embedding lookup followed by an LSTM whose final hidden state is the
/// sentence embedding.
#[derive(Debug, Clone)]
pub struct SentenceEncoder {
    pub lstm: Lstm,
    table: usize,
    saved: Option<Vec<Tokens>>,
}

impl SentenceEncoder {
    fn new(table: usize, input_dim: usize, hidden: usize) -> Self {
        Self {
            lstm: Lstm::new(input_dim, hidden),
            table,
            saved: None,
        }
    }

    pub fn table(&self) -> usize {
        self.table
    }

    pub fn infer(&self, tables: &[Embedding], seqs: &[&[usize]]) -> Result<Tensor> {
        if let Some(i) = seqs.iter().position(|s| s.is_empty()) {
            return Err(Error::Argument(format!("sequence {i} is empty")));
        }
        let steps = tables[self.table].lookup_batch(seqs)?;
        let lengths: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        self.lstm.infer(&steps, &lengths)
    }

    pub fn forward(&mut self, tables: &[Embedding], seqs: Vec<Tokens>) -> Result<Tensor> {
        let refs: Vec<&[usize]> = seqs.iter().map(|s| &s[..]).collect();
        if let Some(i) = refs.iter().position(|s| s.is_empty()) {
            return Err(Error::Argument(format!("sequence {i} is empty")));
        }
        let steps = tables[self.table].lookup_batch(&refs)?;
        let lengths: Vec<usize> = refs.iter().map(|s| s.len()).collect();
        let h = self.lstm.forward(&steps, &lengths)?;
        self.saved = Some(seqs);
        Ok(h)
    }

    pub fn backward(&mut self, tables: &mut [Embedding], dh: &Tensor) -> Result<()> {
        let seqs = self
            .saved
            .take()
            .ok_or_else(|| Error::State("encoder backward before forward".into()))?;
        let dsteps = self.lstm.backward(dh)?;
        let refs: Vec<&[usize]> = seqs.iter().map(|s| &s[..]).collect();
        tables[self.table].backward_batch(&refs, &dsteps)
    }
}

/// Encodes each history round with question/answer LSTMs, fuses the pair
/// with FC → BN → ReLU, and concatenates `T − 1` slots.
#[derive(Debug, Clone)]
pub struct HistoryEncoder {
    pub question: SentenceEncoder,
    pub answer: SentenceEncoder,
    pub combine: Linear,
    pub norm: BatchNorm1d,
    relu: Relu,
    slots: usize,
    saved_batch: Option<usize>,
}

impl HistoryEncoder {
    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn slot_dim(&self) -> usize {
        self.combine.out_dim()
    }

    fn slot_sequences(&self, histories: &[&[(Tokens, Tokens)]]) -> Result<(Vec<Tokens>, Vec<Tokens>)> {
        let empty: Tokens = EMPTY_PAIR_SIDE.to_vec().into();
        let mut qs = Vec::with_capacity(histories.len() * self.slots);
        let mut as_ = Vec::with_capacity(histories.len() * self.slots);
        for h in histories {
            // Longer histories keep their most recent rounds.
            let h = &h[h.len().saturating_sub(self.slots)..];
            for k in 0..self.slots {
                let (q, a) = h.get(k).cloned().unwrap_or_else(|| (empty.clone(), empty.clone()));
                qs.push(q);
                as_.push(a);
            }
        }
        Ok((qs, as_))
    }

    fn concat(q: &Tensor, a: &Tensor) -> Tensor {
        let (n, lq, la) = (q.rows(), q.cols(), a.cols());
        let mut x = Tensor::zeros(&[n, lq + la]);
        for r in 0..n {
            let row = x.row_mut(r);
            row[..lq].copy_from_slice(q.row(r));
            row[lq..].copy_from_slice(a.row(r));
        }
        x
    }

    /// `[B × (T−1)·L_H]` history blocks without caching.
    pub fn infer(&self, tables: &[Embedding], histories: &[&[(Tokens, Tokens)]]) -> Result<Tensor> {
        let (qs, as_) = self.slot_sequences(histories)?;
        let qr: Vec<&[usize]> = qs.iter().map(|s| &s[..]).collect();
        let ar: Vec<&[usize]> = as_.iter().map(|s| &s[..]).collect();
        let x = Self::concat(&self.question.infer(tables, &qr)?, &self.answer.infer(tables, &ar)?);
        let y = crate::nn::relu(&self.norm.infer(&self.combine.infer(&x)?)?);
        Tensor::from_vec(&[histories.len(), self.slots * self.slot_dim()], y.into_data())
    }

    pub fn forward(&mut self, tables: &[Embedding], histories: &[&[(Tokens, Tokens)]]) -> Result<Tensor> {
        let (qs, as_) = self.slot_sequences(histories)?;
        let hq = self.question.forward(tables, qs)?;
        let ha = self.answer.forward(tables, as_)?;
        let x = Self::concat(&hq, &ha);
        let z = self.combine.forward(&x)?;
        let z = self.norm.forward(&z)?;
        let y = self.relu.forward(&z);
        self.saved_batch = Some(histories.len());
        Tensor::from_vec(&[histories.len(), self.slots * self.slot_dim()], y.into_data())
    }

    pub fn backward(&mut self, tables: &mut [Embedding], dy: &Tensor) -> Result<()> {
        let b = self
            .saved_batch
            .take()
            .ok_or_else(|| Error::State("history backward before forward".into()))?;
        let dy = Tensor::from_vec(&[b * self.slots, self.slot_dim()], dy.data().to_vec())?;
        let dz = self.relu.backward(&dy)?;
        let dz = self.norm.backward(&dz)?;
        let dx = self.combine.backward(&dz)?;
        let lq = self.question.lstm.hidden_dim();
        let n = dx.rows();
        let mut dq = Tensor::zeros(&[n, lq]);
        let mut da = Tensor::zeros(&[n, dx.cols() - lq]);
        for r in 0..n {
            dq.row_mut(r).copy_from_slice(&dx.row(r)[..lq]);
            da.row_mut(r).copy_from_slice(&dx.row(r)[lq..]);
        }
        self.question.backward(tables, &dq)?;
        self.answer.backward(tables, &da)
    }
}

/// The context blocks for one query, awaiting an option embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedContext {
    pub variant: Variant,
    pub query: Vec<f64>,
    /// Empty unless the variant uses the image.
    pub image: Vec<f64>,
    /// Empty unless the variant uses caption and history.
    pub caption: Vec<f64>,
    pub history: Vec<f64>,
}

impl EncodedContext {
    pub fn width(&self) -> usize {
        self.query.len() + self.image.len() + self.caption.len() + self.history.len()
    }
}

/// Every text encoder of the model plus the word-embedding tables they read.
#[derive(Debug, Clone)]
pub struct EncoderBank {
    pub tables: Vec<Embedding>,
    table_names: Vec<&'static str>,
    pub query: SentenceEncoder,
    pub option: SentenceEncoder,
    pub caption: Option<SentenceEncoder>,
    pub history: Option<HistoryEncoder>,
    task: Task,
    variant: Variant,
    image_dim: usize,
}

impl EncoderBank {
    pub fn new(cfg: &ModelConfig) -> Self {
        let d = &cfg.dims;
        let v = cfg.vocab_size;
        let mut tables = Vec::new();
        let mut table_names = Vec::new();
        let mut table_for = |name: &'static str, dim: usize| -> usize {
            if cfg.shared_embeddings {
                if tables.is_empty() {
                    tables.push(Embedding::new(dim, v));
                    table_names.push("shared");
                }
                0
            } else {
                tables.push(Embedding::new(dim, v));
                table_names.push(name);
                tables.len() - 1
            }
        };
        let query = SentenceEncoder::new(table_for("query", d.e_q), d.e_q, d.l_q);
        let option = SentenceEncoder::new(table_for("option", d.e_o), d.e_o, d.l_o);
        let (caption, history) = if cfg.variant.uses_history() {
            let caption = SentenceEncoder::new(table_for("caption", d.e_c), d.e_c, d.l_c);
            let question = SentenceEncoder::new(table_for("qhist", d.e_qh), d.e_qh, d.l_qh);
            let answer = SentenceEncoder::new(table_for("ahist", d.e_ah), d.e_ah, d.l_ah);
            let history = HistoryEncoder {
                question,
                answer,
                combine: Linear::new(d.l_qh + d.l_ah, d.l_h),
                norm: BatchNorm1d::new(d.l_h),
                relu: Relu::new(),
                slots: d.t - 1,
                saved_batch: None,
            };
            (Some(caption), Some(history))
        } else {
            (None, None)
        };
        Self {
            tables,
            table_names,
            query,
            option,
            caption,
            history,
            task: cfg.task,
            variant: cfg.variant,
            image_dim: d.l_i,
        }
    }

    pub fn set_mode(&mut self, mode: Mode) {
        if let Some(h) = &mut self.history {
            h.norm.mode = mode;
        }
    }

    pub fn named_params(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut out: Vec<(String, &mut Parameter)> = self
            .tables
            .iter_mut()
            .zip(&self.table_names)
            .map(|(t, n)| (format!("emb.{n}"), &mut t.weight))
            .collect();
        let [w, b] = self.query.lstm.params_mut();
        out.push(("query.lstm.w".into(), w));
        out.push(("query.lstm.b".into(), b));
        let [w, b] = self.option.lstm.params_mut();
        out.push(("option.lstm.w".into(), w));
        out.push(("option.lstm.b".into(), b));
        if let Some(c) = &mut self.caption {
            let [w, b] = c.lstm.params_mut();
            out.push(("caption.lstm.w".into(), w));
            out.push(("caption.lstm.b".into(), b));
        }
        if let Some(h) = &mut self.history {
            let [w, b] = h.question.lstm.params_mut();
            out.push(("qhist.lstm.w".into(), w));
            out.push(("qhist.lstm.b".into(), b));
            let [w, b] = h.answer.lstm.params_mut();
            out.push(("ahist.lstm.w".into(), w));
            out.push(("ahist.lstm.b".into(), b));
            let [w, b] = h.combine.params_mut();
            out.push(("hist.fc.w".into(), w));
            out.push(("hist.fc.b".into(), b));
            let [g, b] = h.norm.params_mut();
            out.push(("hist.bn.gamma".into(), g));
            out.push(("hist.bn.beta".into(), b));
        }
        out
    }

    pub fn named_buffers(&mut self) -> Vec<(String, &mut Tensor)> {
        match &mut self.history {
            Some(h) => vec![
                ("hist.bn.running_mean".into(), &mut h.norm.running_mean),
                ("hist.bn.running_var".into(), &mut h.norm.running_var),
            ],
            None => Vec::new(),
        }
    }

    fn check_query(&self, question: &[usize], answer: Option<&[usize]>) -> Result<()> {
        if question.is_empty() {
            return Err(Error::Argument("empty question".into()));
        }
        match (self.task, answer) {
            (Task::VisDial, Some(_)) => Err(Error::Argument(
                "answer-ranking queries take the question alone".into(),
            )),
            (Task::VisDialQ, None) => Err(Error::Argument(
                "follow-up ranking queries need the question-answer pair".into(),
            )),
            (_, Some([])) => Err(Error::Argument("empty answer".into())),
            _ => Ok(()),
        }
    }

    /// Query embedding `[L_Q]`: the question, or question ⊕ answer tokens.
    pub fn encode_query(&self, question: &[usize], answer: Option<&[usize]>) -> Result<Vec<f64>> {
        self.check_query(question, answer)?;
        let seq: Vec<usize> = question.iter().chain(answer.unwrap_or(&[])).copied().collect();
        Ok(self.query.infer(&self.tables, &[&seq])?.into_data())
    }

    pub fn encode_options(&self, options: &[&[usize]]) -> Result<Tensor> {
        self.option.infer(&self.tables, options)
    }

    pub fn encode_option(&self, option: &[usize]) -> Result<Vec<f64>> {
        Ok(self.encode_options(&[option])?.into_data())
    }

    pub fn encode_caption(&self, caption: &[usize]) -> Result<Vec<f64>> {
        let enc = self
            .caption
            .as_ref()
            .ok_or_else(|| Error::State(format!("variant {} has no caption encoder", self.variant)))?;
        Ok(enc.infer(&self.tables, &[caption])?.into_data())
    }

    /// `(T−1)·L_H` history block; missing rounds are `[Empty, Stop]` pairs.
    pub fn encode_history(&self, rounds: &[(Tokens, Tokens)]) -> Result<Vec<f64>> {
        let enc = self
            .history
            .as_ref()
            .ok_or_else(|| Error::State(format!("variant {} has no history encoder", self.variant)))?;
        Ok(enc.infer(&self.tables, &[rounds])?.into_data())
    }

    fn query_parts(q: &Query) -> (&[usize], Option<&[usize]>) {
        match q {
            Query::Question(q) => (q, None),
            Query::Pair(q, a) => (q, Some(a)),
        }
    }

    pub fn image_block(&self, image_id: u64, features: Option<&ImageFeatureStore>) -> Result<Vec<f64>> {
        if !self.variant.uses_image() {
            return Ok(Vec::new());
        }
        let store = features
            .ok_or_else(|| Error::Argument(format!("variant {} needs image features", self.variant)))?;
        let v = store
            .get(image_id)
            .ok_or_else(|| Error::Index(format!("no features for image {image_id}")))?;
        if v.len() != self.image_dim {
            return Err(Error::Dimension(format!(
                "image features have {} dims, model expects {}",
                v.len(),
                self.image_dim
            )));
        }
        Ok(v.to_vec())
    }

    pub fn encode_context(&self, ex: &Example, features: Option<&ImageFeatureStore>) -> Result<EncodedContext> {
        let (q, a) = Self::query_parts(&ex.query);
        let query = self.encode_query(q, a)?;
        let image = self.image_block(ex.image_id, features)?;
        let (caption, history) = if self.variant.uses_history() {
            (self.encode_caption(&ex.caption)?, self.encode_history(&ex.history)?)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(EncodedContext {
            variant: self.variant,
            query,
            image,
            caption,
            history,
        })
    }

    /// Batched training forward of the context blocks. Returns
    /// `(query [B×L_Q], caption [B×L_C], history [B×(T−1)L_H])`; the latter
    /// two are `None` for variants without them.
    pub(crate) fn forward_context(&mut self, batch: &[&Example]) -> Result<(Tensor, Option<Tensor>, Option<Tensor>)> {
        let mut queries = Vec::with_capacity(batch.len());
        for ex in batch {
            let (q, a) = Self::query_parts(&ex.query);
            self.check_query(q, a)?;
            queries.push(Tokens::from(ex.query.sequence()));
        }
        let q = self.query.forward(&self.tables, queries)?;
        let (c, h) = match (&mut self.caption, &mut self.history) {
            (Some(cap), Some(hist)) => {
                let caps = batch.iter().map(|ex| ex.caption.clone()).collect();
                let c = cap.forward(&self.tables, caps)?;
                let hs: Vec<&[(Tokens, Tokens)]> = batch.iter().map(|ex| &ex.history[..]).collect();
                (Some(c), Some(hist.forward(&self.tables, &hs)?))
            }
            _ => (None, None),
        };
        Ok((q, c, h))
    }

    pub(crate) fn forward_options(&mut self, options: Vec<Tokens>) -> Result<Tensor> {
        self.option.forward(&self.tables, options)
    }

    pub(crate) fn backward(
        &mut self,
        dquery: &Tensor,
        dcaption: Option<&Tensor>,
        dhistory: Option<&Tensor>,
        doptions: &Tensor,
    ) -> Result<()> {
        self.query.backward(&mut self.tables, dquery)?;
        self.option.backward(&mut self.tables, doptions)?;
        if let (Some(cap), Some(dc)) = (&mut self.caption, dcaption) {
            cap.backward(&mut self.tables, dc)?;
        }
        if let (Some(hist), Some(dh)) = (&mut self.history, dhistory) {
            hist.backward(&mut self.tables, dh)?;
        }
        Ok(())
    }
}

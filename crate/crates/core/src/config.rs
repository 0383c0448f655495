//! Model dimensions, task wiring and context variants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rounds per dialog in the source data.
pub const ROUNDS_PER_DIALOG: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Rank candidate answers to a question.
    #[serde(rename = "visdial")]
    VisDial,
    /// Rank candidate follow-up questions to a question-answer pair.
    #[serde(rename = "visdial-q")]
    VisDialQ,
}

impl Task {
    /// Maximal time horizon `T`. No follow-up exists for the last round, so
    /// the question task has one fewer.
    pub fn horizon(self) -> usize {
        match self {
            Task::VisDial => ROUNDS_PER_DIALOG,
            Task::VisDialQ => ROUNDS_PER_DIALOG - 1,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::VisDial => "visdial",
            Task::VisDialQ => "visdial-q",
        })
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "visdial" => Ok(Task::VisDial),
            "visdial-q" | "visdialq" => Ok(Task::VisDialQ),
            _ => Err(Error::Argument(format!("unknown task {s:?}"))),
        }
    }
}

/// Which context blocks feed the fusion network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Query only.
    Q,
    /// Query and image.
    QI,
    /// Query, image, caption and history.
    QIH,
}

impl Variant {
    pub fn uses_image(self) -> bool {
        self != Variant::Q
    }

    pub fn uses_history(self) -> bool {
        self == Variant::QIH
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Q => "q",
            Variant::QI => "qi",
            Variant::QIH => "qih",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "q" => Ok(Variant::Q),
            "qi" => Ok(Variant::QI),
            "qih" => Ok(Variant::QIH),
            _ => Err(Error::Argument(format!("unknown variant {s:?}"))),
        }
    }
}

/// Sequence lengths, embedding widths and hidden sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Time horizon; the history holds `t - 1` slots.
    pub t: usize,
    pub n_q: usize,
    pub n_a: usize,
    pub n_c: usize,
    pub e_q: usize,
    pub e_o: usize,
    pub e_c: usize,
    pub e_qh: usize,
    pub e_ah: usize,
    pub l_q: usize,
    pub l_o: usize,
    pub l_c: usize,
    pub l_qh: usize,
    pub l_ah: usize,
    pub l_h: usize,
    pub l_i: usize,
}

impl ModelDims {
    /// Full-size dimensions for a task.
    pub fn for_task(task: Task) -> Self {
        Self {
            t: task.horizon(),
            n_q: 20,
            n_a: 20,
            n_c: 40,
            e_q: 128,
            e_o: 128,
            e_c: 128,
            e_qh: 128,
            e_ah: 128,
            l_q: 512,
            l_o: 512,
            l_c: 128,
            l_qh: 128,
            l_ah: 128,
            l_h: 128,
            l_i: 4096,
        }
    }

    /// Sets every word-embedding width to `e`.
    /// Reduced widths for experiments: one embedding width, one width for
    /// the query and option LSTMs, one for every context LSTM.
    pub fn compact(t: usize, embedding: usize, query_option: usize, context: usize, image: usize) -> Self {
        Self {
            t,
            n_q: 20,
            n_a: 20,
            n_c: 40,
            e_q: embedding,
            e_o: embedding,
            e_c: embedding,
            e_qh: embedding,
            e_ah: embedding,
            l_q: query_option,
            l_o: query_option,
            l_c: context,
            l_qh: context,
            l_ah: context,
            l_h: context,
            l_i: image,
        }
    }

    pub fn with_embedding_dim(mut self, e: usize) -> Self {
        self.e_q = e;
        self.e_o = e;
        self.e_c = e;
        self.e_qh = e;
        self.e_ah = e;
        self
    }

    pub fn history_len(&self) -> usize {
        (self.t - 1) * self.l_h
    }

    /// Width of one fused (context, option) row.
    pub fn fusion_input(&self, variant: Variant) -> usize {
        let mut n = self.l_q + self.l_o;
        if variant.uses_image() {
            n += self.l_i;
        }
        if variant.uses_history() {
            n += self.l_c + self.history_len();
        }
        n
    }

    fn embedding_dims(&self) -> [usize; 5] {
        [self.e_q, self.e_o, self.e_c, self.e_qh, self.e_ah]
    }

    pub fn validate(&self, shared_embeddings: bool) -> Result<()> {
        let all = [
            self.t, self.n_q, self.n_a, self.n_c, self.e_q, self.e_o, self.e_c, self.e_qh,
            self.e_ah, self.l_q, self.l_o, self.l_c, self.l_qh, self.l_ah, self.l_h, self.l_i,
        ];
        if all.contains(&0) {
            return Err(Error::Argument(format!("all dimensions must be positive: {self:?}")));
        }
        if self.t < 2 {
            return Err(Error::Argument("time horizon must be at least 2".into()));
        }
        let e = self.embedding_dims();
        if shared_embeddings && e.iter().any(|&x| x != e[0]) {
            return Err(Error::Argument(format!(
                "shared embeddings need equal widths, got {e:?}"
            )));
        }
        Ok(())
    }
}

/// Everything that determines the parameter layout of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub task: Task,
    pub variant: Variant,
    pub mlp_depth: usize,
    pub shared_embeddings: bool,
    pub vocab_size: usize,
    pub dims: ModelDims,
}

impl ModelConfig {
    pub fn new(task: Task, variant: Variant, vocab_size: usize) -> Self {
        Self {
            task,
            variant,
            mlp_depth: 2,
            shared_embeddings: true,
            vocab_size,
            dims: ModelDims::for_task(task),
        }
    }

    pub fn fusion_input(&self) -> usize {
        self.dims.fusion_input(self.variant)
    }

    /// Hidden widths of the fusion MLP: `⌊L_S/2⌋` then `⌊L_S/4⌋`.
    pub fn mlp_hidden(&self) -> Vec<usize> {
        let ls = self.fusion_input();
        [ls / 2, ls / 4][..self.mlp_depth.min(2)].to_vec()
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate(self.shared_embeddings)?;
        if !(1..=2).contains(&self.mlp_depth) {
            return Err(Error::Argument(format!(
                "mlp depth must be 1 or 2, got {}",
                self.mlp_depth
            )));
        }
        if self.dims.t > self.task.horizon() {
            return Err(Error::Argument(format!(
                "task {} allows T up to {}, got {}",
                self.task,
                self.task.horizon(),
                self.dims.t
            )));
        }
        if self.vocab_size < 4 {
            return Err(Error::Argument("vocabulary too small".into()));
        }
        if self.mlp_hidden().contains(&0) {
            return Err(Error::Argument("fusion input too narrow for the MLP".into()));
        }
        Ok(())
    }
}

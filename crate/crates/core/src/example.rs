//! Training/evaluation units: one query with its context and scored options.

use crate::text::{EncodedDataset, Tokens};

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    /// Answer ranking: the current question.
    Question(Tokens),
    /// Follow-up ranking: the current question-answer pair.
    Pair(Tokens, Tokens),
}

impl Query {
    /// Token stream fed to the query LSTM. A pair keeps both Stop tokens.
    pub fn sequence(&self) -> Vec<usize> {
        match self {
            Query::Question(q) => q.to_vec(),
            Query::Pair(q, a) => q.iter().chain(a.iter()).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub image_id: u64,
    /// 1-based round of the query within its dialog.
    pub round: usize,
    pub query: Query,
    pub caption: Tokens,
    /// Rounds before the query, oldest first.
    pub history: Vec<(Tokens, Tokens)>,
    pub options: Vec<Tokens>,
    pub gt_index: usize,
}

/// One answer-ranking example per dialog round.
pub fn visdial_examples(ds: &EncodedDataset) -> Vec<Example> {
    let mut out = Vec::with_capacity(ds.records.len() * 10);
    for rec in &ds.records {
        for (t, round) in rec.rounds.iter().enumerate() {
            out.push(Example {
                image_id: rec.image_id,
                round: t + 1,
                query: Query::Question(round.question.clone()),
                caption: rec.caption.clone(),
                history: rec.rounds[..t]
                    .iter()
                    .map(|r| (r.question.clone(), r.answer.clone()))
                    .collect(),
                options: round
                    .answer_options
                    .iter()
                    .map(|&o| ds.answer_pool[o].clone())
                    .collect(),
                gt_index: round.gt_index,
            });
        }
    }
    out
}

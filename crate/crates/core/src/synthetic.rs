//! Small generated datasets with known structure, used for smoke runs,
//! overfitting checks and context-ablation experiments.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::config::{ModelConfig, Task, ROUNDS_PER_DIALOG};
use crate::example::{Example, Query};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::text::{DatasetData, GloveTable, ImageFeatureStore, RawDataset, RawDialog, RawRound, Tokens, STOP};

const NOUNS: [&str; 12] = [
    "dog", "cat", "car", "tree", "man", "woman", "boat", "bird", "horse", "table", "chair", "kite",
];
const ADJECTIVES: [&str; 12] = [
    "red", "blue", "green", "white", "black", "small", "large", "old", "wet", "tall", "wooden", "shiny",
];
const COLORS: [&str; 8] = ["red", "blue", "green", "white", "black", "yellow", "brown", "pink"];
const POPULAR: [&str; 6] = [
    "is it sunny ?",
    "is it daytime ?",
    "is this outdoors ?",
    "are there people ?",
    "is the photo in color ?",
    "any animals ?",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Random questions and answers; only memorisation can solve it.
    Memorize,
    /// The answer repeats a color stated earlier in the dialog.
    HistoryCue,
    /// The answer names the object class encoded in the image features.
    ImageCue,
}

#[derive(Debug, Clone, Copy)]
pub struct SyntheticSpec {
    pub family: Family,
    pub n_dialogs: usize,
    /// Options per round; at most 8 for the cue families.
    pub n_options: usize,
    pub feature_dim: usize,
    pub first_image_id: u64,
    /// Varies the dialogs of a split.
    pub seed: u64,
    /// Shared by every split of one family (class prototypes).
    pub family_seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticSplit {
    pub dataset: RawDataset,
    pub features: ImageFeatureStore,
}

struct Builder {
    data: DatasetData,
    questions: std::collections::HashMap<String, usize>,
    answers: std::collections::HashMap<String, usize>,
}

impl Builder {
    fn new() -> Self {
        Self {
            data: DatasetData::default(),
            questions: Default::default(),
            answers: Default::default(),
        }
    }

    fn question(&mut self, s: &str) -> usize {
        let pool = &mut self.data.questions;
        *self.questions.entry(s.to_owned()).or_insert_with(|| {
            pool.push(s.to_owned());
            pool.len() - 1
        })
    }

    fn answer(&mut self, s: &str) -> usize {
        let pool = &mut self.data.answers;
        *self.answers.entry(s.to_owned()).or_insert_with(|| {
            pool.push(s.to_owned());
            pool.len() - 1
        })
    }
}

fn memorize_questions() -> Vec<String> {
    let mut out: Vec<String> = POPULAR.iter().map(|s| s.to_string()).collect();
    for n in NOUNS {
        for a in ADJECTIVES {
            out.push(format!("is the {n} {a} ?"));
        }
        out.push(format!("how many {n}s are there ?"));
        out.push(format!("what color is the {n} ?"));
    }
    out
}

fn memorize_answers() -> Vec<String> {
    let mut out: Vec<String> = [
        "yes", "no", "yes it is", "no it is not", "i think so", "maybe", "i can not tell", "one",
        "two", "three", "four", "five",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    out.extend(ADJECTIVES.iter().map(|a| format!("it is {a}")));
    out
}

/// Generates one split. Dialogs get consecutive image ids from
/// `first_image_id`, and every image gets a feature vector.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticSplit> {
    let max_options = match spec.family {
        Family::Memorize => memorize_answers().len(),
        Family::HistoryCue => COLORS.len(),
        Family::ImageCue => COLORS.len(),
    };
    if spec.n_options == 0 || spec.n_options > max_options {
        return Err(Error::Argument(format!(
            "family {:?} supports 1..={max_options} options, got {}",
            spec.family, spec.n_options
        )));
    }
    if spec.feature_dim == 0 {
        return Err(Error::Argument("feature dimension must be positive".into()));
    }
    let mut rng = rng_for(spec.seed, &[0x5157]);
    let prototypes: Vec<Vec<f64>> = {
        let mut prng = rng_for(spec.family_seed, &[0x9707]);
        (0..COLORS.len())
            .map(|_| (0..spec.feature_dim).map(|_| prng.sample(StandardNormal)).collect())
            .collect()
    };
    let m_questions = memorize_questions();
    let m_answers = memorize_answers();

    let mut b = Builder::new();
    let mut features = ImageFeatureStore::new(spec.feature_dim);
    for d in 0..spec.n_dialogs {
        let image_id = spec.first_image_id + d as u64;
        let noun = NOUNS[rng.random_range(0..NOUNS.len())];
        let mut feature: Vec<f64> = (0..spec.feature_dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut rounds = Vec::with_capacity(ROUNDS_PER_DIALOG);
        let caption;
        match spec.family {
            Family::Memorize => {
                caption = format!("a {noun} next to a {}", NOUNS[rng.random_range(0..NOUNS.len())]);
                for _ in 0..ROUNDS_PER_DIALOG {
                    let q = &m_questions[rng.random_range(0..m_questions.len())];
                    let gt = rng.random_range(0..m_answers.len());
                    let mut others: Vec<usize> = (0..m_answers.len()).filter(|&i| i != gt).collect();
                    others.shuffle(&mut rng);
                    let mut opts: Vec<usize> = others[..spec.n_options - 1].to_vec();
                    opts.push(gt);
                    opts.shuffle(&mut rng);
                    rounds.push(round(&mut b, q, &m_answers[gt], &opts.iter().map(|&i| m_answers[i].as_str()).collect::<Vec<_>>()));
                }
            }
            Family::HistoryCue => {
                caption = format!("a {noun} in a room");
                let c = rng.random_range(0..COLORS.len());
                let answers: Vec<String> = COLORS.iter().map(|k| format!("it is {k}")).collect();
                for t in 0..ROUNDS_PER_DIALOG {
                    let q = if t == 0 {
                        format!("what color is the {noun} ?")
                    } else {
                        "what color did you say ?".to_owned()
                    };
                    let opts = option_subset(&mut rng, c, spec.n_options, &answers);
                    rounds.push(round(&mut b, &q, &answers[c], &opts));
                }
            }
            Family::ImageCue => {
                caption = "a picture".to_owned();
                let c = rng.random_range(0..COLORS.len());
                for (f, p) in feature.iter_mut().zip(&prototypes[c]) {
                    *f = p + 0.3 * *f;
                }
                let answers: Vec<String> = COLORS.iter().map(|k| format!("mostly {k}")).collect();
                for _ in 0..ROUNDS_PER_DIALOG {
                    let opts = option_subset(&mut rng, c, spec.n_options, &answers);
                    rounds.push(round(&mut b, "what color dominates ?", &answers[c], &opts));
                }
            }
        }
        features.insert(image_id, feature)?;
        b.data.dialogs.push(RawDialog {
            image_id,
            caption,
            dialog: rounds,
        });
    }
    let mut dataset = RawDataset::new("synthetic", b.data);
    dataset.validate().map_err(Error::Construction)?;
    Ok(SyntheticSplit { dataset, features })
}

/// The correct option plus `k - 1` random distractors, shuffled.
fn option_subset<'a>(rng: &mut crate::rng::Rng, gt: usize, k: usize, answers: &'a [String]) -> Vec<&'a str> {
    let mut others: Vec<usize> = (0..answers.len()).filter(|&i| i != gt).collect();
    others.shuffle(rng);
    let mut opts: Vec<usize> = others[..k - 1].to_vec();
    opts.push(gt);
    opts.shuffle(rng);
    opts.into_iter().map(|i| answers[i].as_str()).collect()
}

fn round(b: &mut Builder, question: &str, answer: &str, options: &[&str]) -> RawRound {
    let question = b.question(question);
    let answer_id = b.answer(answer);
    let answer_options: Vec<usize> = options.iter().map(|o| b.answer(o)).collect();
    let gt_index = answer_options.iter().position(|&o| o == answer_id).expect("gt among options");
    RawRound {
        question,
        answer: answer_id,
        answer_options,
        gt_index,
    }
}

/// Unit-normal vectors for every word of `corpus` (tokenized, punctuation
/// dropped), assigned in sorted word order.
pub fn toy_glove<'a>(corpus: impl IntoIterator<Item = &'a str>, dim: usize, seed: u64) -> Result<GloveTable> {
    let words: BTreeSet<String> = corpus
        .into_iter()
        .flat_map(crate::text::tokenize)
        .filter(|w| !crate::text::is_punctuation(w))
        .collect();
    let mut rng = rng_for(seed, &[0x610e]);
    let mut table = GloveTable::new(dim);
    for w in words {
        let v = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        table.insert(w, v)?;
    }
    Ok(table)
}

/// Random token-level examples for gradient checks: `n` examples of `k`
/// options, token ids drawn from the non-reserved range of `vocab_size`,
/// histories of random length (up to one more than the model holds).
pub fn random_examples(
    config: &ModelConfig,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<(Vec<Example>, ImageFeatureStore)> {
    config.validate()?;
    if n == 0 || k == 0 {
        return Err(Error::Argument("need at least one example and one option".into()));
    }
    let d = config.dims;
    let mut rng = rng_for(seed, &[0x7e57]);
    let mut sentence = |max_len: usize| -> Tokens {
        let len = rng.random_range(1..=max_len.max(1));
        let mut t: Vec<usize> = (0..len - 1).map(|_| rng.random_range(3..config.vocab_size)).collect();
        t.push(STOP);
        t.into()
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let q = sentence(d.n_q.min(6));
        let query = match config.task {
            Task::VisDial => Query::Question(q),
            Task::VisDialQ => Query::Pair(q, sentence(d.n_a.min(6))),
        };
        let caption = sentence(d.n_c.min(8));
        let rounds = (i * 7 + 1) % (d.t + 1);
        let history = (0..rounds).map(|_| (sentence(d.n_q.min(6)), sentence(d.n_a.min(6)))).collect();
        let options = (0..k).map(|_| sentence(d.n_a.min(6))).collect();
        out.push(Example {
            image_id: i as u64 + 1,
            round: rounds + 1,
            query,
            caption,
            history,
            options,
            gt_index: (i * 3) % k,
        });
    }
    let mut features = ImageFeatureStore::new(d.l_i);
    let mut frng = rng_for(seed, &[0x7e58]);
    for ex in &out {
        features.insert(ex.image_id, (0..d.l_i).map(|_| frng.sample(StandardNormal)).collect())?;
    }
    Ok((out, features))
}

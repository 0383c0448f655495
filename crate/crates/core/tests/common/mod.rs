#![allow(dead_code)]

use sfdialog::example::visdial_examples;
use sfdialog::synthetic::{generate, Family, SyntheticSpec, SyntheticSplit};
use sfdialog::text::{build_vocab, encode_dataset, RawDataset, Vocabulary};
use sfdialog::{Example, ModelDims};

pub fn synth(family: Family, n_dialogs: usize, n_options: usize, seed: u64, first_image_id: u64) -> SyntheticSplit {
    generate(&SyntheticSpec {
        family,
        n_dialogs,
        n_options,
        feature_dim: 16,
        first_image_id,
        seed,
        family_seed: 0,
    })
    .expect("synthetic split")
}

pub fn vocab_of(datasets: &[&RawDataset]) -> Vocabulary {
    build_vocab(datasets.iter().flat_map(|d| d.corpus()), 1).expect("vocabulary")
}

pub fn answer_examples(ds: &RawDataset, vocab: &Vocabulary, dims: &ModelDims) -> Vec<Example> {
    visdial_examples(&encode_dataset(ds, vocab, dims).expect("encoded dataset"))
}

/// Sort-based reference rank with ties counted against the ground truth.
pub fn oracle_rank(scores: &[f64], gt: usize) -> usize {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then((a == gt).cmp(&(b == gt)))
    });
    order.iter().position(|&i| i == gt).unwrap() + 1
}

//! Tokenization, vocabularies and the on-disk data formats.

mod dataset;
mod features;
mod glove;
mod vocab;

pub use dataset::{
    encode_dataset, load_dataset, DatasetData, DialogRecord, DialogRound, EncodedDataset,
    RawDataset, RawDialog, RawRound, DATASET_VERSION,
};
pub(crate) use dataset::encode_text;
pub use features::{ImageFeatureStore, FEATURE_MAGIC};
pub use glove::GloveTable;
pub use vocab::{
    build_vocab, detokenize, encode_truncate, is_punctuation, tokenize, Tokens, Vocabulary,
    EMPTY, STOP, UNK,
};

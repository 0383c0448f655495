//! Discriminative visual dialog.
//!
//! A single "similarity scoring + fusion" network ranks candidate answers to a
//! question about an image, or candidate follow-up questions to a
//! question-answer pair, from LSTM sentence embeddings of the query, caption,
//! dialog history and each option, concatenated with image features and
//! scored by an MLP. Around it: the follow-up-question candidate builder,
//! ranking metrics, a deterministic trainer with binary checkpoints, and a
//! bot-vs-bot dialog unroller.

pub mod checkpoint;
pub mod config;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod example;
pub mod fusion;
pub mod model;
pub mod nn;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod text;
pub mod train;
pub mod unroll;
pub mod visdialq;

pub use config::{ModelConfig, ModelDims, Task, Variant};
pub use error::{Error, Result};
pub use example::{Example, Query};
pub use model::SfModel;

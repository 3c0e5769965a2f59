//! Attentional neural machine translation with alignment structural biases.
//!
//! The crate is organized bottom-up:
//!
//! * [`autodiff`]: define-by-run computation graph with reverse-mode gradients.
//! * [`corpus`]: parallel corpora, vocabularies and sentinel-wrapped ids.
//! * [`model`]: bidirectional LSTM encoder, attentional decoder, position,
//!   Markov and local fertility features, and the baseline encoder-decoder.
//! * [`objectives`]: cross-entropy, global fertility, coverage penalty and the
//!   symmetric trace-bonus objective.
//! * [`trainer`]: SGD with dev-set model selection and fertility pre-training.
//! * [`eval`]: perplexity, corpus BLEU and n-best re-ranking.
//! * [`diagnostics`]: the finite-difference gradient suite.
//! * [`toy`]: synthetic copy and reversal corpora.

pub mod autodiff;
pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod model;
pub mod objectives;
pub mod tensor;
pub mod toy;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;

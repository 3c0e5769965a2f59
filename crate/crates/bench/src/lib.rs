//! Shared fixtures for the benchmarks: a seeded toy corpus and model.

use biasattn::corpus::{build_vocabs, encode_corpus, SentencePair};
use biasattn::model::{Architecture, BiasFlags, Model, ModelConfig};
use biasattn::toy::{toy_corpus, ToyTask};

/// Encoded copy-task corpus of `count` pairs (vocabulary 20, lengths 3–8).
pub fn copy_corpus(count: usize, seed: u64) -> Vec<SentencePair> {
    let raw = toy_corpus(ToyTask::Copy, 20, 3, 8, count, seed).expect("valid toy spec");
    let (src, tgt) = build_vocabs(&raw, 1).expect("non-empty corpus");
    encode_corpus(&src, &tgt, &raw)
}

/// Attentional model sized `dim` in every hidden dimension.
pub fn model(dim: usize, flags: BiasFlags, vocab: usize) -> Model {
    let cfg = ModelConfig::new(Architecture::Attentional, vocab, vocab)
        .with_dims(dim, dim, dim)
        .with_flags(flags);
    Model::new(cfg, 0).expect("valid config")
}

//! Network structure: encoders, attentional and baseline decoders, and the
//! structural bias features that feed the attention scorer.

mod config;
mod features;
mod network;
mod params;
mod serialize;

pub use config::{Architecture, BiasFlags, FertilityWindow, ModelConfig};
pub use features::{cumulative_attention, fertility_features, markov_features, position_features};
pub use network::{
    AttentionMemory, AttentionStep, AttentionTrace, Bound, DecoderState, EncodedSource,
    ForwardPass, Model,
};
pub use params::{ParamId, ParameterStore, StoreGradient};
pub use serialize::format_g17;

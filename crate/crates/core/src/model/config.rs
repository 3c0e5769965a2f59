use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    /// Bidirectional encoder with an attentional decoder.
    Attentional,
    /// Unidirectional encoder whose final state seeds the decoder; no attention.
    Baseline,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Attentional => "attentional",
            Architecture::Baseline => "baseline",
        })
    }
}

impl FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attentional" => Ok(Architecture::Attentional),
            "baseline" => Ok(Architecture::Baseline),
            _ => Err(Error::InvalidConfig(format!("unknown architecture `{s}`"))),
        }
    }
}

/// Structural biases switched on for a model.
///
/// The first three feed the attention scorer; the last two are extra terms
/// in the training objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct BiasFlags {
    pub position: bool,
    pub markov: bool,
    pub local_fertility: bool,
    pub global_fertility: bool,
    pub xu_penalty: bool,
}

impl BiasFlags {
    const NAMES: [&'static str; 5] = [
        "position",
        "markov",
        "local-fertility",
        "global-fertility",
        "xu-penalty",
    ];

    pub fn none() -> Self {
        Self::default()
    }

    /// Position, Markov and local fertility together.
    pub fn align() -> Self {
        BiasFlags {
            position: true,
            markov: true,
            local_fertility: true,
            ..Self::default()
        }
    }

    pub fn all() -> Self {
        BiasFlags {
            position: true,
            markov: true,
            local_fertility: true,
            global_fertility: true,
            xu_penalty: true,
        }
    }

    /// The eight on/off combinations of the scorer-side biases.
    pub fn scorer_combinations() -> Vec<BiasFlags> {
        (0..8u8)
            .map(|m| BiasFlags {
                position: m & 1 != 0,
                markov: m & 2 != 0,
                local_fertility: m & 4 != 0,
                ..Self::default()
            })
            .collect()
    }

    fn values(&self) -> [bool; 5] {
        [
            self.position,
            self.markov,
            self.local_fertility,
            self.global_fertility,
            self.xu_penalty,
        ]
    }
}

impl fmt::Display for BiasFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let on: Vec<&str> = Self::NAMES
            .iter()
            .zip(self.values())
            .filter_map(|(n, v)| v.then_some(*n))
            .collect();
        if on.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&on.join(","))
        }
    }
}

impl FromStr for BiasFlags {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut flags = BiasFlags::default();
        if s == "none" || s.is_empty() {
            return Ok(flags);
        }
        for name in s.split(',') {
            match name.trim() {
                "position" => flags.position = true,
                "markov" => flags.markov = true,
                "local-fertility" => flags.local_fertility = true,
                "global-fertility" => flags.global_fertility = true,
                "xu-penalty" => flags.xu_penalty = true,
                "align" => {
                    flags.position = true;
                    flags.markov = true;
                    flags.local_fertility = true;
                }
                other => return Err(Error::InvalidConfig(format!("unknown bias flag `{other}`"))),
            }
        }
        Ok(flags)
    }
}

/// Extent of the cumulative-attention window used by local fertility.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FertilityWindow {
    /// Offsets `-k..=k`, the same window as the Markov features.
    Symmetric,
    /// Offsets `-k..=1`; positions beyond `i+1` read as zero.
    Literal,
}

impl FertilityWindow {
    /// Largest right-hand offset read for window half-width `k`.
    pub fn reach(self, k: usize) -> usize {
        match self {
            FertilityWindow::Symmetric => k,
            FertilityWindow::Literal => k.min(1),
        }
    }
}

impl fmt::Display for FertilityWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FertilityWindow::Symmetric => "symmetric",
            FertilityWindow::Literal => "literal",
        })
    }
}

impl FromStr for FertilityWindow {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(FertilityWindow::Symmetric),
            "literal" => Ok(FertilityWindow::Literal),
            _ => Err(Error::InvalidConfig(format!(
                "unknown fertility window `{s}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// Hidden units per LSTM layer (H).
    pub hidden: usize,
    /// Word embedding size.
    pub embed: usize,
    /// Alignment (attention scorer) hidden size (A).
    pub align: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Markov / local-fertility window half-width (k).
    pub window: usize,
    pub flags: BiasFlags,
    /// Weight of the trace bonus in symmetric training.
    pub gamma: f64,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub fertility_window: FertilityWindow,
    /// Treat previous attention rows as constants inside the bias features.
    pub detach_history: bool,
    /// Weight on the global fertility term.
    pub fertility_weight: f64,
    /// Include `<s>`/`</s>` positions in fertility sums.
    pub fertility_sentinels: bool,
}

impl ModelConfig {
    pub fn new(architecture: Architecture, src_vocab: usize, tgt_vocab: usize) -> Self {
        ModelConfig {
            architecture,
            hidden: 512,
            embed: 512,
            align: 256,
            encoder_layers: 1,
            decoder_layers: 2,
            window: 1,
            flags: BiasFlags::none(),
            gamma: 1.0,
            src_vocab,
            tgt_vocab,
            fertility_window: FertilityWindow::Symmetric,
            detach_history: false,
            fertility_weight: 1.0,
            fertility_sentinels: true,
        }
    }

    pub fn with_dims(mut self, hidden: usize, embed: usize, align: usize) -> Self {
        self.hidden = hidden;
        self.embed = embed;
        self.align = align;
        self
    }

    pub fn with_flags(mut self, flags: BiasFlags) -> Self {
        self.flags = flags;
        self
    }

    /// Config of the model translating in the opposite direction.
    pub fn reversed(&self) -> Self {
        ModelConfig {
            src_vocab: self.tgt_vocab,
            tgt_vocab: self.src_vocab,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("H", self.hidden),
            ("E", self.embed),
            ("A", self.align),
            ("encoder layers", self.encoder_layers),
            ("decoder layers", self.decoder_layers),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if self.src_vocab < 3 || self.tgt_vocab < 3 {
            return Err(Error::InvalidConfig(
                "vocabularies must hold the three reserved tokens".into(),
            ));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.fertility_weight.is_finite() && self.fertility_weight >= 0.0) {
            return Err(Error::InvalidConfig("fertility weight must be >= 0".into()));
        }
        if self.architecture == Architecture::Baseline && (self.flags != BiasFlags::none()) {
            return Err(Error::InvalidConfig(
                "the baseline encoder-decoder has no attention to bias".into(),
            ));
        }
        Ok(())
    }
}

//! Gradient-check suite over every bias configuration and objective.

use crate::autodiff::GradCheckReport;
use crate::corpus::SentencePair;
use crate::error::Result;
use crate::model::{Architecture, BiasFlags, Model, ModelConfig};
use crate::objectives::{check_gradients, LossOptions};

/// Model sizes and finite-difference step for [`gradient_suite`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteSpec {
    pub hidden: usize,
    pub embed: usize,
    pub align: usize,
    pub window: usize,
    pub seed: u64,
    pub eps: f64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            hidden: 8,
            embed: 8,
            align: 8,
            window: 1,
            seed: 0,
            eps: 1e-3,
        }
    }
}

/// Four source and four target tokens plus sentinels, over six-word vocabularies.
pub fn suite_pair() -> SentencePair {
    SentencePair::new(vec![0, 3, 4, 5, 3, 1], vec![0, 5, 3, 4, 4, 1]).expect("well-formed pair")
}

const SUITE_VOCAB: usize = 6;

fn config(spec: &SuiteSpec, flags: BiasFlags) -> ModelConfig {
    let mut cfg = ModelConfig::new(Architecture::Attentional, SUITE_VOCAB, SUITE_VOCAB)
        .with_dims(spec.hidden, spec.embed, spec.align)
        .with_flags(flags);
    cfg.window = spec.window;
    cfg
}

/// Checks the cross-entropy under all eight scorer-bias combinations, the
/// loss with global fertility and coverage penalty, and the symmetric loss
/// with the trace bonus. Returns one labelled report per configuration.
pub fn gradient_suite(spec: &SuiteSpec) -> Result<Vec<(String, GradCheckReport)>> {
    let pair = suite_pair();
    let mut out = Vec::new();
    for flags in BiasFlags::scorer_combinations() {
        let model = Model::new(config(spec, flags), spec.seed)?;
        let report = check_gradients(&[model], &pair, &LossOptions::nll_only(), spec.eps)?;
        out.push((flags.to_string(), report));
    }

    let model = Model::new(config(spec, BiasFlags::all()), spec.seed)?;
    let opts = LossOptions::from_model(&model);
    out.push((
        "global-fertility+xu-penalty".into(),
        check_gradients(&[model], &pair, &opts, spec.eps)?,
    ));

    let cfg = config(spec, BiasFlags::align());
    let fwd = Model::new(cfg.clone(), spec.seed)?;
    let rev = Model::new(cfg.reversed(), spec.seed.wrapping_add(1))?;
    let opts = LossOptions {
        gamma: 1.0,
        ..LossOptions::nll_only()
    };
    out.push((
        "symmetric-trace-bonus".into(),
        check_gradients(&[fwd, rev], &pair, &opts, spec.eps)?,
    ));
    Ok(out)
}

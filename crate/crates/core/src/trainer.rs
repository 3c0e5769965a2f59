//! Per-sentence SGD with gradient clipping, learning-rate halving and
//! dev-perplexity model selection.
//!
//! Training runs in two phases. For the first `pretrain_epochs` epochs the
//! global fertility term is left out of the loss; afterwards it is switched
//! on if the model was configured with it. Selection is always by dev
//! perplexity, never by training loss.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::SentencePair;
use crate::error::{Error, Result};
use crate::eval::perplexity;
use crate::model::{Model, StoreGradient};
use crate::objectives::{loss_and_gradients, LossOptions};

/// How symmetric training continues once global fertility is switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FinetuneMode {
    /// Keep the trace bonus: both directions stay coupled.
    Joint,
    /// Drop the trace bonus: each direction is fine-tuned on its own.
    Separate,
}

impl fmt::Display for FinetuneMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FinetuneMode::Joint => "joint",
            FinetuneMode::Separate => "separate",
        })
    }
}

impl FromStr for FinetuneMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(FinetuneMode::Joint),
            "separate" => Ok(FinetuneMode::Separate),
            _ => Err(Error::InvalidConfig(format!(
                "unknown fine-tune mode `{s}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSchedule {
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// Factor applied to the learning rate when dev perplexity fails to improve.
    pub decay: f64,
    /// Per-sentence gradient-norm ceiling.
    pub clip: f64,
    /// Epochs trained without the global fertility term.
    pub pretrain_epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub finetune: FinetuneMode,
    /// Worker threads for dev perplexity; updates are always single-threaded.
    pub threads: usize,
    /// Record wall-clock seconds per epoch. Off keeps logs reproducible.
    pub timing: bool,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            max_epochs: 20,
            learning_rate: 0.1,
            decay: 0.5,
            clip: 5.0,
            pretrain_epochs: 10,
            seed: 0,
            shuffle: true,
            finetune: FinetuneMode::Joint,
            threads: 1,
            timing: false,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning rate must be finite and positive".into(),
            ));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidConfig("decay must be in (0, 1]".into()));
        }
        if self.clip.is_nan() || self.clip <= 0.0 {
            return Err(Error::InvalidConfig("clip must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Dev perplexity; the mean of both directions in symmetric training.
    pub dev_ppl: f64,
    /// Learning rate used during the epoch, one per direction.
    pub learning_rates: Vec<f64>,
    pub seconds: Option<f64>,
}

impl EpochRecord {
    /// `epoch  train_loss  dev_ppl  lr  seconds`, tab-separated. Several
    /// learning rates are comma-joined; untimed epochs show `NA`.
    pub fn log_line(&self) -> String {
        let lrs: Vec<String> = self.learning_rates.iter().map(|r| r.to_string()).collect();
        let secs = self
            .seconds
            .map_or_else(|| "NA".to_string(), |s| format!("{s:.3}"));
        format!(
            "{}\t{:.6}\t{:.6}\t{}\t{}",
            self.epoch,
            self.train_loss,
            self.dev_ppl,
            lrs.join(","),
            secs
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    /// 1-based epoch the parameters were taken after.
    pub epoch: usize,
    pub dev_ppl: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub best: Checkpoint,
    /// Parameters after the final epoch.
    pub last: Model,
    pub history: Vec<EpochRecord>,
}

#[derive(Clone, Debug)]
pub struct SymmetricReport {
    pub forward: Checkpoint,
    pub reverse: Checkpoint,
    pub last_forward: Model,
    pub last_reverse: Model,
    pub history: Vec<EpochRecord>,
}

fn non_finite_as_sentence(e: Error, sentence: usize) -> Error {
    match e {
        Error::NonFinite(_) | Error::NonFiniteLoss { .. } => Error::NonFiniteLoss { sentence },
        other => other,
    }
}

/// One loss/gradient evaluation for sentence `index`, with gradients clipped
/// per model.
fn sentence_gradients(
    models: &[Model],
    pair: &SentencePair,
    index: usize,
    opts: &LossOptions,
    clip: f64,
) -> Result<(f64, Vec<StoreGradient>)> {
    let (loss, mut grads) =
        loss_and_gradients(models, pair, opts).map_err(|e| non_finite_as_sentence(e, index))?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { sentence: index });
    }
    for grad in &mut grads {
        if !grad.norm().is_finite() {
            return Err(Error::NonFiniteLoss { sentence: index });
        }
        grad.clip_norm(clip);
    }
    Ok((loss, grads))
}

/// One pass over `corpus` in `order`, updating after every sentence.
/// `models` holds one model, or a forward/reverse pair trained jointly
/// (`rates` has one learning rate per model). Returns the mean loss.
pub fn sgd_epoch(
    models: &mut [Model],
    corpus: &[SentencePair],
    order: &[usize],
    rates: &[f64],
    clip: f64,
    opts: &LossOptions,
) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if rates.len() != models.len() {
        return Err(Error::CountMismatch(rates.len(), models.len()));
    }
    let mut total = 0.0;
    for &index in order {
        let pair = corpus.get(index).ok_or(Error::IndexOutOfRange {
            index,
            len: corpus.len(),
        })?;
        let (loss, grads) = sentence_gradients(models, pair, index, opts, clip)?;
        total += loss;
        for ((model, grad), &rate) in models.iter_mut().zip(&grads).zip(rates) {
            model.params_mut().apply_update(grad, rate);
        }
    }
    Ok(total / order.len() as f64)
}

fn epoch_order(rng: &mut ChaCha8Rng, len: usize, shuffle: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    if shuffle {
        order.shuffle(rng);
    }
    order
}

fn phase_options(model: &Model, schedule: &TrainSchedule, epoch: usize) -> LossOptions {
    let mut opts = LossOptions::from_model(model);
    if epoch < schedule.pretrain_epochs {
        opts.global_fertility = false;
    }
    opts
}

/// Trains `model` and returns the checkpoint with the lowest dev perplexity.
pub fn train(
    mut model: Model,
    schedule: &TrainSchedule,
    train_corpus: &[SentencePair],
    dev_corpus: &[SentencePair],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    schedule.validate()?;
    if train_corpus.is_empty() || dev_corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut rate = schedule.learning_rate;
    let mut best: Option<Checkpoint> = None;
    let mut history = Vec::with_capacity(schedule.max_epochs);
    for epoch in 0..schedule.max_epochs {
        let start = Instant::now();
        let order = epoch_order(&mut rng, train_corpus.len(), schedule.shuffle);
        let opts = phase_options(&model, schedule, epoch);
        let loss = sgd_epoch(
            std::slice::from_mut(&mut model),
            train_corpus,
            &order,
            &[rate],
            schedule.clip,
            &opts,
        )?;
        let ppl = perplexity(&model, dev_corpus, schedule.threads)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss,
            dev_ppl: ppl,
            learning_rates: vec![rate],
            seconds: schedule.timing.then(|| start.elapsed().as_secs_f64()),
        };
        on_epoch(&record);
        history.push(record);
        if best.as_ref().is_none_or(|b| ppl < b.dev_ppl) {
            best = Some(Checkpoint {
                model: model.clone(),
                epoch: epoch + 1,
                dev_ppl: ppl,
            });
        } else {
            rate *= schedule.decay;
        }
    }
    Ok(TrainReport {
        best: best.expect("at least one epoch"),
        last: model,
        history,
    })
}

/// Joint training of a forward model and a reverse model with the trace
/// bonus. `reverse_train` must be the pairwise swap of `train_corpus`. Each direction keeps its own learning rate, halved when
/// its own dev perplexity stalls, and its own gradient clip, so with
/// `γ = 0` the result equals two independent runs with the same seed.
/// The returned pair is the epoch with the lowest mean dev perplexity.
pub fn train_symmetric(
    forward: Model,
    reverse: Model,
    schedule: &TrainSchedule,
    train_corpus: &[SentencePair],
    reverse_train: &[SentencePair],
    dev_corpus: &[SentencePair],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<SymmetricReport> {
    schedule.validate()?;
    check_swapped(train_corpus, reverse_train)?;
    if train_corpus.is_empty() || dev_corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (fc, rc) = (forward.config(), reverse.config());
    if fc.src_vocab != rc.tgt_vocab || fc.tgt_vocab != rc.src_vocab {
        return Err(Error::InvalidConfig(
            "reverse model vocabularies must be the forward model's, swapped".into(),
        ));
    }
    let reverse_dev: Vec<SentencePair> = dev_corpus.iter().map(SentencePair::reversed).collect();
    let mut models = [forward, reverse];
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut rates = [schedule.learning_rate; 2];
    let mut own_best = [f64::INFINITY; 2];
    let mut best: Option<(Checkpoint, Checkpoint)> = None;
    let mut history = Vec::with_capacity(schedule.max_epochs);
    for epoch in 0..schedule.max_epochs {
        let start = Instant::now();
        let order = epoch_order(&mut rng, train_corpus.len(), schedule.shuffle);
        let mut opts = phase_options(&models[0], schedule, epoch);
        opts.gamma = models[0].config().gamma;
        if epoch >= schedule.pretrain_epochs
            && opts.global_fertility
            && schedule.finetune == FinetuneMode::Separate
        {
            opts.gamma = 0.0;
        }
        let used_rates = rates.to_vec();
        let loss = sgd_epoch(
            &mut models,
            train_corpus,
            &order,
            &rates,
            schedule.clip,
            &opts,
        )?;
        let ppl = [
            perplexity(&models[0], dev_corpus, schedule.threads)?,
            perplexity(&models[1], &reverse_dev, schedule.threads)?,
        ];
        for d in 0..2 {
            if ppl[d] < own_best[d] {
                own_best[d] = ppl[d];
            } else {
                rates[d] *= schedule.decay;
            }
        }
        let mean = 0.5 * (ppl[0] + ppl[1]);
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss,
            dev_ppl: mean,
            learning_rates: used_rates,
            seconds: schedule.timing.then(|| start.elapsed().as_secs_f64()),
        };
        on_epoch(&record);
        history.push(record);
        let improved = best
            .as_ref()
            .is_none_or(|(f, r)| mean < 0.5 * (f.dev_ppl + r.dev_ppl));
        if improved {
            let checkpoint = |m: &Model, p: f64| Checkpoint {
                model: m.clone(),
                epoch: epoch + 1,
                dev_ppl: p,
            };
            best = Some((
                checkpoint(&models[0], ppl[0]),
                checkpoint(&models[1], ppl[1]),
            ));
        }
    }
    let (fwd_best, rev_best) = best.expect("at least one epoch");
    let [last_forward, last_reverse] = models;
    Ok(SymmetricReport {
        forward: fwd_best,
        reverse: rev_best,
        last_forward,
        last_reverse,
        history,
    })
}

/// Checks that `reverse` is `forward` with every pair's sides swapped.
pub fn check_swapped(forward: &[SentencePair], reverse: &[SentencePair]) -> Result<()> {
    if forward.len() != reverse.len() {
        return Err(Error::CountMismatch(forward.len(), reverse.len()));
    }
    for (i, (f, r)) in forward.iter().zip(reverse).enumerate() {
        if f.source != r.target || f.target != r.source {
            return Err(Error::InvalidConfig(format!(
                "reverse corpus pair {i} is not the swap of the forward pair"
            )));
        }
    }
    Ok(())
}

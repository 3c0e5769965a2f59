//! Training objectives built on top of a model's forward pass.
//!
//! Single-direction loss: `NLL [+ w·(−Σ_i log N(f_i; μ_i, σ²_i))] [+ Σ_i (1 − f_i)²]`.
//! Symmetric loss: `NLL(t|s) + NLL(s|t) + γ·B` plus each direction's extras,
//! where `B = −Σ_{i,j} α^{rev}_{i,j} α^{fwd}_{j,i}`.
//!
//! Attention rows include the sentinel positions. The trace bonus pairs rows
//! and columns by token position, so it drops the `<s>` column of each
//! direction (the one token that is never predicted); what remains is a
//! `(J−1) × (I−1)` block against its `(I−1) × (J−1)` twin.

use std::f64::consts::PI;

use crate::autodiff::{finite_difference_check, GradCheckReport, Graph, NodeId};
use crate::corpus::SentencePair;
use crate::error::{Error, Result};
use crate::model::{
    AttentionTrace, Bound, EncodedSource, ForwardPass, Model, ParameterStore, StoreGradient,
};
use crate::tensor::Tensor;

/// Which extra terms enter the loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOptions {
    pub global_fertility: bool,
    pub xu_penalty: bool,
    /// Trace bonus weight; only used with two models.
    pub gamma: f64,
}

impl LossOptions {
    /// The extras the model was configured with.
    pub fn from_model(model: &Model) -> Self {
        let c = model.config();
        LossOptions {
            global_fertility: c.flags.global_fertility,
            xu_penalty: c.flags.xu_penalty,
            gamma: c.gamma,
        }
    }

    pub fn nll_only() -> Self {
        LossOptions {
            global_fertility: false,
            xu_penalty: false,
            gamma: 0.0,
        }
    }
}

/// `f = Σ_j α_j`, an `I × 1` node.
pub fn fertility_vector(g: &mut Graph<'_>, alphas: &[NodeId]) -> Result<NodeId> {
    if alphas.is_empty() {
        return Err(Error::InvalidConfig(
            "fertility needs at least one attention row".into(),
        ));
    }
    g.sum(alphas)
}

/// `Σ_i −log N(f_i; μ_i, σ²_i)` over the entries of three same-shaped nodes.
pub fn gaussian_neg_log_density(
    g: &mut Graph<'_>,
    f: NodeId,
    mean: NodeId,
    var: NodeId,
) -> Result<NodeId> {
    let n = g.dims(f).0 * g.dims(f).1;
    let diff = g.sub(f, mean)?;
    let sq = g.square(diff)?;
    let log_var = g.log(var)?;
    let neg_log_var = g.scalar_mul(log_var, -1.0)?;
    let precision = g.exp(neg_log_var)?;
    let quad = g.cwise_mul(sq, precision)?;
    let inner = g.add(log_var, quad)?;
    let halved = g.scalar_mul(inner, 0.5)?;
    let total = g.sum_elems(halved)?;
    let constant = g.input(Tensor::filled(1, 1, 0.5 * (2.0 * PI).ln() * n as f64))?;
    g.add(total, constant)
}

/// Negated log-likelihood of the fertilities under the model's contextual
/// Gaussian, weighted by the configured fertility weight.
pub fn global_fertility_term<'m>(
    g: &mut Graph<'m>,
    b: &mut Bound<'m>,
    encoded: &EncodedSource,
    alphas: &[NodeId],
) -> Result<NodeId> {
    let model = b.model();
    let f = fertility_vector(g, alphas)?;
    let (mut mean, mut var) = model.fertility_moments(g, b, encoded)?;
    let mut f = f;
    if !model.config().fertility_sentinels {
        let len = encoded.len();
        if len <= 2 {
            return g.input(Tensor::zeros(1, 1));
        }
        f = g.slice_rows(f, 1, len - 2)?;
        mean = g.slice_rows(mean, 1, len - 2)?;
        var = g.slice_rows(var, 1, len - 2)?;
    }
    let term = gaussian_neg_log_density(g, f, mean, var)?;
    let weight = model.config().fertility_weight;
    if weight == 1.0 {
        Ok(term)
    } else {
        g.scalar_mul(term, weight)
    }
}

/// `Σ_i (1 − Σ_j α_{j,i})²`.
pub fn xu_penalty(g: &mut Graph<'_>, alphas: &[NodeId]) -> Result<NodeId> {
    let f = fertility_vector(g, alphas)?;
    let ones = g.input(Tensor::filled(g.dims(f).0, 1, 1.0))?;
    let gap = g.sub(ones, f)?;
    let sq = g.square(gap)?;
    g.sum_elems(sq)
}

/// `B = −Σ_{j,i} fwd[j,i] · rev[i,j]` for a `J × I` and an `I × J` matrix.
pub fn trace_bonus(g: &mut Graph<'_>, fwd: NodeId, rev: NodeId) -> Result<NodeId> {
    let (j, i) = g.dims(fwd);
    if g.dims(rev) != (i, j) {
        return Err(Error::DimMismatch {
            op: "trace_bonus",
            detail: format!(
                "forward {:?} needs reverse {:?}, got {:?}",
                (j, i),
                (i, j),
                g.dims(rev)
            ),
        });
    }
    let t = g.trace_of_product(fwd, rev)?;
    g.scalar_mul(t, -1.0)
}

/// Stacks attention rows into a matrix with one row per step, dropping the
/// first source position (`<s>`).
pub fn alignment_block(g: &mut Graph<'_>, alphas: &[NodeId]) -> Result<NodeId> {
    let len = alphas
        .first()
        .map(|a| g.dims(*a).0)
        .ok_or_else(|| Error::InvalidConfig("empty attention trace".into()))?;
    if len < 2 {
        return Err(Error::InvalidConfig(
            "attention rows need at least two positions".into(),
        ));
    }
    let cols = alphas
        .iter()
        .map(|a| g.slice_rows(*a, 1, len - 1))
        .collect::<Result<Vec<_>>>()?;
    let stacked = g.concat_cols(&cols)?;
    g.transpose(stacked)
}

/// Trace bonus between the attention rows of a forward and a reverse pass.
pub fn symmetric_trace_bonus(
    g: &mut Graph<'_>,
    fwd_alphas: &[NodeId],
    rev_alphas: &[NodeId],
) -> Result<NodeId> {
    let fwd = alignment_block(g, fwd_alphas)?;
    let rev = alignment_block(g, rev_alphas)?;
    trace_bonus(g, fwd, rev)
}

/// `B` for plain matrices.
pub fn trace_bonus_value(fwd: &Tensor, rev: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let f = g.input(fwd.clone())?;
    let r = g.input(rev.clone())?;
    let b = trace_bonus(&mut g, f, r)?;
    Ok(g.value(b).scalar_value())
}

/// `−B / min(I', J')` on the sentinel-trimmed blocks of two traces: 1 for
/// perfectly agreeing one-to-one attention, 0 for no overlap.
pub fn trace_overlap(fwd: &AttentionTrace, rev: &AttentionTrace) -> Result<f64> {
    let (rows, cols) = (fwd.rows(), fwd.cols());
    if rev.rows() + 1 != cols || rev.cols() != rows + 1 {
        return Err(Error::DimMismatch {
            op: "trace_overlap",
            detail: format!(
                "forward {rows}x{cols}, reverse {}x{}",
                rev.rows(),
                rev.cols()
            ),
        });
    }
    let mut acc = 0.0;
    for j in 0..rows {
        for i in 1..cols {
            acc += fwd.values.get(j, i) * rev.values.get(i - 1, j + 1);
        }
    }
    Ok(acc / rows.min(cols - 1) as f64)
}

/// A built loss plus the forward passes it was made from.
#[derive(Clone, Debug)]
pub struct Objective {
    pub loss: NodeId,
    pub passes: Vec<ForwardPass>,
    /// `B` when the trace bonus was included.
    pub trace_bonus: Option<NodeId>,
}

fn direction_extras<'m>(
    g: &mut Graph<'m>,
    b: &mut Bound<'m>,
    pass: &ForwardPass,
    opts: &LossOptions,
    terms: &mut Vec<NodeId>,
) -> Result<()> {
    if pass.alphas.is_empty() {
        return Ok(());
    }
    if opts.global_fertility && b.model().has_fertility_nets() {
        let encoded = pass
            .encoded
            .as_ref()
            .expect("attentional pass has encodings");
        terms.push(global_fertility_term(g, b, encoded, &pass.alphas)?);
    }
    if opts.xu_penalty {
        terms.push(xu_penalty(g, &pass.alphas)?);
    }
    Ok(())
}

/// Composite loss for one model (`bounds.len() == 1`) or a forward/reverse
/// pair trained jointly (`bounds.len() == 2`, the second sees `pair.reversed()`).
pub fn composite_loss<'m>(
    g: &mut Graph<'m>,
    bounds: &mut [Bound<'m>],
    pair: &SentencePair,
    opts: &LossOptions,
) -> Result<Objective> {
    match bounds {
        [single] => {
            let pass = single.model().forward(g, single, pair)?;
            let mut terms = vec![pass.nll];
            direction_extras(g, single, &pass, opts, &mut terms)?;
            let loss = g.sum(&terms)?;
            Ok(Objective {
                loss,
                passes: vec![pass],
                trace_bonus: None,
            })
        }
        [fwd, rev] => {
            let fwd_pass = fwd.model().forward(g, fwd, pair)?;
            let rev_pass = rev.model().forward(g, rev, &pair.reversed())?;
            let mut terms = vec![fwd_pass.nll, rev_pass.nll];
            direction_extras(g, fwd, &fwd_pass, opts, &mut terms)?;
            direction_extras(g, rev, &rev_pass, opts, &mut terms)?;
            let mut bonus = None;
            if opts.gamma != 0.0 && !fwd_pass.alphas.is_empty() && !rev_pass.alphas.is_empty() {
                let b = symmetric_trace_bonus(g, &fwd_pass.alphas, &rev_pass.alphas)?;
                terms.push(g.scalar_mul(b, opts.gamma)?);
                bonus = Some(b);
            }
            let loss = g.sum(&terms)?;
            Ok(Objective {
                loss,
                passes: vec![fwd_pass, rev_pass],
                trace_bonus: bonus,
            })
        }
        _ => Err(Error::InvalidConfig(format!(
            "composite loss takes one or two models, got {}",
            bounds.len()
        ))),
    }
}

/// Loss value and unclipped per-model gradients of [`composite_loss`].
pub fn loss_and_gradients(
    models: &[Model],
    pair: &SentencePair,
    opts: &LossOptions,
) -> Result<(f64, Vec<StoreGradient>)> {
    let mut g = Graph::new();
    let mut bounds: Vec<Bound<'_>> = models.iter().map(Bound::new).collect();
    let objective = composite_loss(&mut g, &mut bounds, pair, opts)?;
    let grads = g.backward(objective.loss)?;
    let value = g.value(objective.loss).scalar_value();
    Ok((value, bounds.iter().map(|b| b.gradient(&grads)).collect()))
}

/// Finite-difference check of [`composite_loss`] over every parameter of
/// every model.
pub fn check_gradients(
    models: &[Model],
    pair: &SentencePair,
    opts: &LossOptions,
    eps: f64,
) -> Result<GradCheckReport> {
    let mut stores: Vec<ParameterStore> = models.iter().map(|m| m.params().clone()).collect();
    let mut work = models.to_vec();
    finite_difference_check(&mut stores, eps, |stores| {
        for (m, s) in work.iter_mut().zip(stores) {
            m.params_mut().clone_from(s);
        }
        loss_and_gradients(&work, pair, opts)
    })
}

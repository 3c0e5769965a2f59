use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Architecture, ModelConfig};
use super::features::position_features;
use super::params::{ParamId, ParameterStore, StoreGradient};
use crate::autodiff::{Gradients, Graph, NodeId};
use crate::corpus::{SentencePair, Vocab};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const INIT_SCALE: f64 = 0.08;
const FORGET_BIAS: f64 = 1.0;
/// Floor added to the softplus outputs of the fertility nets.
const FERTILITY_FLOOR: f64 = 1e-4;

/// Gate matrix, bias and optional learned initial state of one LSTM layer.
/// Gate rows are ordered input, forget, output, candidate.
#[derive(Clone, Debug, PartialEq)]
struct LstmLayer {
    weights: ParamId,
    bias: ParamId,
    initial: Option<ParamId>,
}

#[derive(Clone, Debug, PartialEq)]
struct AttentionParams {
    w_ae: ParamId,
    w_ah: ParamId,
    v: ParamId,
    w_ap: Option<ParamId>,
    w_am: Option<ParamId>,
    w_af: Option<ParamId>,
    w_ta: ParamId,
    w_uc: ParamId,
    w_ui: ParamId,
}

/// `softplus(out · tanh(hidden · e + hidden_bias) + out_bias) + floor`.
#[derive(Clone, Debug, PartialEq)]
struct PositiveNet {
    hidden: ParamId,
    hidden_bias: ParamId,
    out: ParamId,
    out_bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    src_embed: ParamId,
    tgt_embed: ParamId,
    enc_forward: Vec<LstmLayer>,
    enc_backward: Vec<LstmLayer>,
    decoder: Vec<LstmLayer>,
    attention: Option<AttentionParams>,
    fertility: Option<(PositiveNet, PositiveNet)>,
    w_ou: ParamId,
    b_to: ParamId,
}

/// One directional translation model: its configuration and parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParameterStore,
    layout: Layout,
}

/// Per-position source encodings.
#[derive(Clone, Debug)]
pub struct EncodedSource {
    /// `e_i` for each source position, each `2H × 1`.
    pub columns: Vec<NodeId>,
    /// The `2H × I` matrix `[e_1 … e_I]`.
    pub matrix: NodeId,
}

impl EncodedSource {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// Encoded source plus its projection through `W^{ae}`, shared by every step.
#[derive(Clone, Debug)]
pub struct AttentionMemory {
    pub encoded: EncodedSource,
    keys: NodeId,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionStep {
    /// Pre-normalization compatibility scores `f_j` (`I × 1`).
    pub scores: NodeId,
    /// `α_j` (`I × 1`).
    pub alpha: NodeId,
    /// `c_j = E α_j` (`2H × 1`).
    pub context: NodeId,
}

/// Hidden and cell state of every decoder layer, bottom first.
#[derive(Clone, Debug)]
pub struct DecoderState {
    pub layers: Vec<(NodeId, NodeId)>,
}

impl DecoderState {
    pub fn top(&self) -> NodeId {
        self.layers.last().expect("decoder has layers").0
    }
}

/// Everything one sentence pair contributes to a graph.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    /// Summed negative log-likelihood of the predicted target tokens.
    pub nll: NodeId,
    /// Attention rows, one per predicted token. Empty for the baseline.
    pub alphas: Vec<NodeId>,
    pub encoded: Option<EncodedSource>,
    pub predicted: usize,
}

/// Attention matrix of one sentence pair: one row per predicted target token,
/// one column per source position.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTrace {
    pub values: Tensor,
}

impl AttentionTrace {
    pub fn from_graph(g: &Graph<'_>, alphas: &[NodeId]) -> Self {
        let cols = alphas.first().map_or(0, |a| g.dims(*a).0);
        let mut data = Vec::with_capacity(alphas.len() * cols);
        for a in alphas {
            data.extend_from_slice(g.value(*a).data());
        }
        AttentionTrace {
            values: Tensor::raw(alphas.len(), cols, data),
        }
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        self.values.row(j)
    }

    /// Column sums: the fertility of each source position.
    pub fn fertilities(&self) -> Vec<f64> {
        (0..self.cols())
            .map(|i| (0..self.rows()).map(|j| self.values.get(j, i)).sum())
            .collect()
    }
}

/// Binds a model's parameters into one graph, creating each parameter node
/// at most once so repeated uses accumulate into a single gradient.
pub struct Bound<'m> {
    model: &'m Model,
    nodes: Vec<Option<NodeId>>,
}

impl<'m> Bound<'m> {
    pub fn new(model: &'m Model) -> Self {
        Bound {
            model,
            nodes: vec![None; model.params.len()],
        }
    }

    pub fn model(&self) -> &'m Model {
        self.model
    }

    pub fn param(&mut self, g: &mut Graph<'m>, id: ParamId) -> NodeId {
        let slot = &mut self.nodes[id.index()];
        *slot.get_or_insert_with(|| g.parameter(self.model.params.get(id)))
    }

    pub fn gradient(&self, grads: &Gradients) -> StoreGradient {
        StoreGradient::from_bound(&self.model.params, grads, &self.nodes)
    }
}

struct Init {
    rng: ChaCha8Rng,
    zero: bool,
}

impl Init {
    fn tensor(&mut self, rows: usize, cols: usize) -> Tensor {
        if self.zero {
            return Tensor::zeros(rows, cols);
        }
        Tensor::from_fn(rows, cols, |_, _| {
            self.rng.gen_range(-INIT_SCALE..INIT_SCALE)
        })
    }
}

impl Model {
    /// Fresh model with uniform(-0.08, 0.08) weights and forget-gate biases of 1.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::build(
            config,
            Init {
                rng: ChaCha8Rng::seed_from_u64(seed),
                zero: false,
            },
        )
    }

    /// Model with every parameter set to zero.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        Self::build(
            config,
            Init {
                rng: ChaCha8Rng::seed_from_u64(0),
                zero: true,
            },
        )
    }

    fn build(config: ModelConfig, mut init: Init) -> Result<Self> {
        config.validate()?;
        let (h, e, a) = (config.hidden, config.embed, config.align);
        let k = config.window;
        let attentional = config.architecture == Architecture::Attentional;
        let mut p = ParameterStore::new();

        let src_embed = p.add("src_embed", init.tensor(config.src_vocab, e));
        let tgt_embed = p.add("tgt_embed", init.tensor(config.tgt_vocab, e));

        let mut lstm =
            |p: &mut ParameterStore, name: String, input: usize, learned_initial: bool| {
                let weights = p.add(format!("{name}.w"), init.tensor(4 * h, input + h));
                let mut b = init.tensor(4 * h, 1);
                if !init.zero {
                    for r in h..2 * h {
                        b.set(r, 0, FORGET_BIAS);
                    }
                }
                let bias = p.add(format!("{name}.b"), b);
                let initial =
                    learned_initial.then(|| p.add(format!("{name}.h0"), init.tensor(h, 1)));
                LstmLayer {
                    weights,
                    bias,
                    initial,
                }
            };

        let mut enc_forward = Vec::new();
        let mut enc_backward = Vec::new();
        for l in 0..config.encoder_layers {
            let input = if l == 0 { e } else { h };
            enc_forward.push(lstm(&mut p, format!("enc_fwd{l}"), input, true));
            if attentional {
                enc_backward.push(lstm(&mut p, format!("enc_bwd{l}"), input, true));
            }
        }
        let mut decoder = Vec::new();
        for l in 0..config.decoder_layers {
            let input = match (l, attentional) {
                (0, true) => e + h,
                (0, false) => e,
                _ => h,
            };
            decoder.push(lstm(&mut p, format!("dec{l}"), input, false));
        }

        let attention = if attentional {
            let flags = config.flags;
            Some(AttentionParams {
                w_ae: p.add("att.w_ae", init.tensor(a, 2 * h)),
                w_ah: p.add("att.w_ah", init.tensor(a, h)),
                v: p.add("att.v", init.tensor(a, 1)),
                w_ap: flags.position.then(|| p.add("att.w_ap", init.tensor(a, 3))),
                w_am: flags
                    .markov
                    .then(|| p.add("att.w_am", init.tensor(a, 2 * k + 1))),
                w_af: flags
                    .local_fertility
                    .then(|| p.add("att.w_af", init.tensor(a, 2 * k + 1))),
                w_ta: p.add("dec.w_ta", init.tensor(h, 2 * h)),
                w_uc: p.add("dec.w_uc", init.tensor(h, 2 * h)),
                w_ui: p.add("dec.w_ui", init.tensor(h, e)),
            })
        } else {
            None
        };

        let w_ou = p.add("out.w_ou", init.tensor(config.tgt_vocab, h));
        let b_to = p.add("out.b_to", init.tensor(config.tgt_vocab, 1));

        // Drawn last so enabling the fertility nets leaves every other initial value unchanged.
        let fertility = if attentional && config.flags.global_fertility {
            let mut net = |p: &mut ParameterStore, name: &str| PositiveNet {
                hidden: p.add(format!("{name}.hidden"), init.tensor(a, 2 * h)),
                hidden_bias: p.add(format!("{name}.hidden_b"), init.tensor(a, 1)),
                out: p.add(format!("{name}.out"), init.tensor(1, a)),
                out_bias: p.add(format!("{name}.out_b"), init.tensor(1, 1)),
            };
            Some((net(&mut p, "fert_mean"), net(&mut p, "fert_var")))
        } else {
            None
        };

        Ok(Model {
            config,
            params: p,
            layout: Layout {
                src_embed,
                tgt_embed,
                enc_forward,
                enc_backward,
                decoder,
                attention,
                fertility,
                w_ou,
                b_to,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    pub fn has_fertility_nets(&self) -> bool {
        self.layout.fertility.is_some()
    }

    fn check_ids(&self, ids: &[usize], vocab: usize) -> Result<()> {
        match ids.iter().find(|&&id| id >= vocab) {
            Some(&index) => Err(Error::IndexOutOfRange { index, len: vocab }),
            None => Ok(()),
        }
    }

    fn check_pair(&self, pair: &SentencePair) -> Result<()> {
        if pair.source.len() < 2 || pair.target.len() < 2 {
            return Err(Error::InvalidConfig(
                "sentence pairs need at least the two sentinels per side".into(),
            ));
        }
        self.check_ids(&pair.source, self.config.src_vocab)?;
        self.check_ids(&pair.target, self.config.tgt_vocab)
    }

    fn zeros<'m>(&self, g: &mut Graph<'m>, rows: usize) -> Result<NodeId> {
        g.input(Tensor::zeros(rows, 1))
    }

    fn lstm_step<'m>(
        &'m self,
        g: &mut Graph<'m>,
        b: &mut Bound<'m>,
        layer: &LstmLayer,
        x: NodeId,
        (h, c): (NodeId, NodeId),
    ) -> Result<(NodeId, NodeId)> {
        let hd = self.config.hidden;
        let w = b.param(g, layer.weights);
        let bias = b.param(g, layer.bias);
        let xh = g.concat_rows(&[x, h])?;
        let z = g.matmul(w, xh)?;
        let z = g.add(z, bias)?;
        let gate = |g: &mut Graph<'m>, n: usize| g.slice_rows(z, n * hd, hd);
        let i = gate(g, 0)?;
        let i = g.logistic(i)?;
        let f = gate(g, 1)?;
        let f = g.logistic(f)?;
        let o = gate(g, 2)?;
        let o = g.logistic(o)?;
        let cand = gate(g, 3)?;
        let cand = g.tanh(cand)?;
        let keep = g.cwise_mul(f, c)?;
        let write = g.cwise_mul(i, cand)?;
        let c_next = g.add(keep, write)?;
        let squashed = g.tanh(c_next)?;
        let h_next = g.cwise_mul(o, squashed)?;
        Ok((h_next, c_next))
    }

    /// Runs a stack of LSTM layers over `inputs`, returning top-layer states.
    fn run_stack<'m>(
        &'m self,
        g: &mut Graph<'m>,
        b: &mut Bound<'m>,
        layers: &[LstmLayer],
        inputs: Vec<NodeId>,
    ) -> Result<Vec<NodeId>> {
        let mut seq = inputs;
        for layer in layers {
            let mut h = match layer.initial {
                Some(id) => b.param(g, id),
                None => self.zeros(g, self.config.hidden)?,
            };
            let mut c = self.zeros(g, self.config.hidden)?;
            let mut out = Vec::with_capacity(seq.len());
            for x in seq {
                (h, c) = self.lstm_step(g, b, layer, x, (h, c))?;
                out.push(h);
            }
            seq = out;
        }
        Ok(seq)
    }

    fn embed_source<'m>(
        &'m self,
        g: &mut Graph<'m>,
        b: &mut Bound<'m>,
        src: &[usize],
    ) -> Result<Vec<NodeId>> {
        self.check_ids(src, self.config.src_vocab)?;
        let table = b.param(g, self.layout.src_embed);
        src.iter().map(|&id| g.row_lookup(table, id)).collect()
    }

    /// Bidirectional encoding: `e_i = [h→_i ; h←_i]`.
    pub fn encode_bidirectional<'m>(
        &'m self,
        g: &mut Graph<'m>,
        b: &mut Bound<'m>,
        src: &[usize],
    ) -> Result<EncodedSource> {
        if self.config.architecture != Architecture::Attentional {
            return Err(Error::InvalidConfig(
                "baseline models have no bidirectional encoder".into(),
            ));
        }
        let embedded = self.embed_source(g, b, src)?;
        let forward = self.run_stack(g, b, &self.layout.enc_forward, embedded.clone())?;
        let mut reversed_inputs = embedded;
        reversed_inputs.reverse();
        let mut backward = self.run_stack(g, b, &self.layout.enc_backward, reversed_inputs)?;
        backward.reverse();
        let columns = forward
            .into_iter()
            .zip(backward)
            .map(|(f, r)| g.concat_rows(&[f, r]))
            .collect::<Result<Vec<_>>>()?;
        let matrix = g.concat_cols(&columns)?;
        Ok(EncodedSource { columns, matrix })
    }

    /// Unidirectional encoding; returns the final hidden state `h_I`.
    pub fn encode_baseline<'m>(
        &'m self,
        g: &mut Graph<'m>,
        b: &mut Bound<'m>,
        src: &[usize],
    ) -> Result<NodeId> {
        if src.is_empty() {
            return Err(Error::InvalidConfig("empty source".into()));
        }
        let embedded = self.embed_source(g, b, src)?;
        let states = self.run_stack(g, b, &self.layout.enc_forward, embedded)?;
        Ok(*states.last().expect("non-empty source"))
    }

    fn attention_params(&self) -> Result<&AttentionParams> {
        self.layout
            .attention
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("model has no attention".into()))
    }

    pub fn attention_memory<'m>(
        &'m self,
        g: &mut Graph<'m>,
        b: &mut Bound<'m>,
        encoded: EncodedSource,
    ) -> Result<AttentionMemory> {
        let att = self.attention_params()?;
        let w_ae = b.param(g, att.w_ae);
        let keys = g.matmul(w_ae, encoded.matrix)?;
        Ok(AttentionMemory { encoded, keys })
    }

    /// Attention for target position `j` (1-based, `j ≥ 2` for predicted
    /// tokens) given the previous decoder top state and attention history.
    ///
    /// `alpha_prev` is the previous attention row (zeros at the first step)
    /// and `alpha_cum` the running column sums of all earlier rows.
    #[allow(clippy::too_many_arguments)]
    pub fn attention_step<'m>(
        &'m self,
        g: &mut Graph<'m>,
        b: &mut Bound<'m>,
        memory: &AttentionMemory,
        g_prev: NodeId,
        j: usize,
        alpha_prev: NodeId,
        alpha_cum: NodeId,
    ) -> Result<AttentionStep> {
        let att = self.attention_params()?;
        let src_len = memory.encoded.len();
        let k = self.config.window;
        if g.dims(g_prev) != (self.config.hidden, 1) {
            return Err(Error::DimMismatch {
                op: "attention_step",
                detail: format!(
                    "decoder state {:?}, expected H={}",
                    g.dims(g_prev),
                    self.config.hidden
                ),
            });
        }
        if g.dims(alpha_prev) != (src_len, 1) || g.dims(alpha_cum) != (src_len, 1) {
            return Err(Error::DimMismatch {
                op: "attention_step",
                detail: format!("attention history must be {src_len}x1"),
            });
        }

        let w_ah = b.param(g, att.w_ah);
        let query = g.matmul(w_ah, g_prev)?;
        let mut pre = g.add_column(memory.keys, query)?;

        if let Some(w_ap) = att.w_ap {
            let psi = Tensor::from_fn(3, src_len, |r, i| position_features(j, i + 1, src_len)[r]);
            let psi = g.input(psi)?;
            let w = b.param(g, w_ap);
            let term = g.matmul(w, psi)?;
            pre = g.add(pre, term)?;
        }
        if let Some(w_am) = att.w_am {
            let history = self.history(g, alpha_prev)?;
            let xi = g.window(history, k, k)?;
            let w = b.param(g, w_am);
            let term = g.matmul(w, xi)?;
            pre = g.add(pre, term)?;
        }
        if let Some(w_af) = att.w_af {
            let history = self.history(g, alpha_cum)?;
            let xi = g.window(history, k, self.config.fertility_window.reach(k))?;
            let w = b.param(g, w_af);
            let term = g.matmul(w, xi)?;
            pre = g.add(pre, term)?;
        }

        let hidden = g.tanh(pre)?;
        let hidden_t = g.transpose(hidden)?;
        let v = b.param(g, att.v);
        let scores = g.matmul(hidden_t, v)?;
        let alpha = g.softmax(scores)?;
        let context = g.matmul(memory.encoded.matrix, alpha)?;
        Ok(AttentionStep {
            scores,
            alpha,
            context,
        })
    }

    fn history<'m>(&self, g: &mut Graph<'m>, node: NodeId) -> Result<NodeId> {
        if self.config.detach_history {
            let value = g.value(node).clone();
            g.input(value)
        } else {
            Ok(node)
        }
    }

    /// Initial decoder state: zeros for the attentional model, `h = vE` on
    /// every layer for the baseline.
    pub fn initial_decoder_state<'m>(
        &self,
        g: &mut Graph<'m>,
        source_vector: Option<NodeId>,
    ) -> Result<DecoderState> {
        let layers = (0..self.config.decoder_layers)
            .map(|_| {
                let h = match source_vector {
                    Some(v) => v,
                    None => self.zeros(g, self.config.hidden)?,
                };
                Ok((h, self.zeros(g, self.config.hidden)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DecoderState { layers })
    }

    /// One decoder step from the previous token. `context` is required for
    /// the attentional model and ignored by the baseline.
    ///
    /// Returns the new state and the output logits (`V_T × 1`).
    pub fn decoder_step<'m>(
        &'m self,
        g: &mut Graph<'m>,
        b: &mut Bound<'m>,
        state: &DecoderState,
        t_prev: usize,
        context: Option<NodeId>,
    ) -> Result<(DecoderState, NodeId)> {
        if t_prev >= self.config.tgt_vocab {
            return Err(Error::IndexOutOfRange {
                index: t_prev,
                len: self.config.tgt_vocab,
            });
        }
        let table = b.param(g, self.layout.tgt_embed);
        let r = g.row_lookup(table, t_prev)?;
        let att = self.layout.attention.as_ref();

        let mut input = r;
        if let Some(att) = att {
            let c = context.ok_or_else(|| {
                Error::InvalidConfig("attentional decoder needs a context".into())
            })?;
            let w_ta = b.param(g, att.w_ta);
            let projected = g.matmul(w_ta, c)?;
            input = g.concat_rows(&[r, projected])?;
        }
        let mut layers = Vec::with_capacity(state.layers.len());
        for (layer, prev) in self.layout.decoder.iter().zip(&state.layers) {
            let next = self.lstm_step(g, b, layer, input, *prev)?;
            input = next.0;
            layers.push(next);
        }
        let top = input;

        let hidden = match (att, context) {
            (Some(att), Some(c)) => {
                let w_uc = b.param(g, att.w_uc);
                let w_ui = b.param(g, att.w_ui);
                let uc = g.matmul(w_uc, c)?;
                let ui = g.matmul(w_ui, r)?;
                let s = g.add(top, uc)?;
                let s = g.add(s, ui)?;
                g.tanh(s)?
            }
            _ => top,
        };
        let w_ou = b.param(g, self.layout.w_ou);
        let b_to = b.param(g, self.layout.b_to);
        let logits = g.matmul(w_ou, hidden)?;
        let logits = g.add(logits, b_to)?;
        Ok((DecoderState { layers }, logits))
    }

    /// Builds the full per-sentence graph: encoder, every decoder step and
    /// the summed cross-entropy of `t_2 … t_J`.
    pub fn forward<'m>(
        &'m self,
        g: &mut Graph<'m>,
        b: &mut Bound<'m>,
        pair: &SentencePair,
    ) -> Result<ForwardPass> {
        self.check_pair(pair)?;
        let mut losses = Vec::with_capacity(pair.target.len() - 1);
        let mut alphas = Vec::new();
        let mut encoded = None;
        match self.config.architecture {
            Architecture::Baseline => {
                let summary = self.encode_baseline(g, b, &pair.source)?;
                let mut state = self.initial_decoder_state(g, Some(summary))?;
                for pos in 1..pair.target.len() {
                    let (next, logits) =
                        self.decoder_step(g, b, &state, pair.target[pos - 1], None)?;
                    losses.push(g.pick_neg_log_softmax(logits, pair.target[pos])?);
                    state = next;
                }
            }
            Architecture::Attentional => {
                let enc = self.encode_bidirectional(g, b, &pair.source)?;
                let memory = self.attention_memory(g, b, enc)?;
                let src_len = pair.source.len();
                let mut state = self.initial_decoder_state(g, None)?;
                let mut alpha_prev = self.zeros(g, src_len)?;
                let mut alpha_cum = alpha_prev;
                for pos in 1..pair.target.len() {
                    let step = self.attention_step(
                        g,
                        b,
                        &memory,
                        state.top(),
                        pos + 1,
                        alpha_prev,
                        alpha_cum,
                    )?;
                    let (next, logits) =
                        self.decoder_step(g, b, &state, pair.target[pos - 1], Some(step.context))?;
                    losses.push(g.pick_neg_log_softmax(logits, pair.target[pos])?);
                    state = next;
                    alphas.push(step.alpha);
                    alpha_cum = if pos == 1 {
                        step.alpha
                    } else {
                        g.add(alpha_cum, step.alpha)?
                    };
                    alpha_prev = step.alpha;
                }
                encoded = Some(memory.encoded);
            }
        }
        let stacked = g.concat_rows(&losses)?;
        let nll = g.sum_elems(stacked)?;
        Ok(ForwardPass {
            nll,
            alphas,
            encoded,
            predicted: losses.len(),
        })
    }

    /// Negative log-likelihood of the pair and its attention trace.
    pub fn sentence_nll(&self, pair: &SentencePair) -> Result<(f64, AttentionTrace)> {
        let mut g = Graph::new();
        let mut b = Bound::new(self);
        let pass = self.forward(&mut g, &mut b, pair)?;
        Ok((
            g.value(pass.nll).scalar_value(),
            AttentionTrace::from_graph(&g, &pass.alphas),
        ))
    }

    /// `(μ_i, σ²_i)` for every source position, each an `I × 1` node.
    pub fn fertility_moments<'m>(
        &'m self,
        g: &mut Graph<'m>,
        b: &mut Bound<'m>,
        encoded: &EncodedSource,
    ) -> Result<(NodeId, NodeId)> {
        let (mean, var) = self
            .layout
            .fertility
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("model has no fertility nets".into()))?;
        let src_len = encoded.len();
        let mut eval = |g: &mut Graph<'m>, net: &PositiveNet| -> Result<NodeId> {
            let w = b.param(g, net.hidden);
            let bias = b.param(g, net.hidden_bias);
            let out = b.param(g, net.out);
            let out_bias = b.param(g, net.out_bias);
            let pre = g.matmul(w, encoded.matrix)?;
            let pre = g.add_column(pre, bias)?;
            let hidden = g.tanh(pre)?;
            let row = g.matmul(out, hidden)?;
            let row = g.add_column(row, out_bias)?;
            let positive = g.softplus(row)?;
            let floor = g.input(Tensor::filled(1, src_len, FERTILITY_FLOOR))?;
            let floored = g.add(positive, floor)?;
            g.transpose(floored)
        };
        Ok((eval(g, mean)?, eval(g, var)?))
    }

    /// Greedy decoding up to `max_len` tokens; stops at `</s>`. Ties go to
    /// the lowest id. Returned ids exclude the sentinels.
    pub fn greedy_decode(&self, src: &[usize], max_len: usize) -> Result<Vec<usize>> {
        if max_len == 0 {
            return Err(Error::InvalidConfig("max_len must be at least 1".into()));
        }
        let mut g = Graph::new();
        let mut b = Bound::new(self);
        let mut out = Vec::new();
        let mut prev = Vocab::BOS_ID;
        match self.config.architecture {
            Architecture::Baseline => {
                let summary = self.encode_baseline(&mut g, &mut b, src)?;
                let mut state = self.initial_decoder_state(&mut g, Some(summary))?;
                while out.len() < max_len {
                    let (next, logits) = self.decoder_step(&mut g, &mut b, &state, prev, None)?;
                    state = next;
                    prev = argmax(g.value(logits).data());
                    if prev == Vocab::EOS_ID {
                        break;
                    }
                    out.push(prev);
                }
            }
            Architecture::Attentional => {
                let enc = self.encode_bidirectional(&mut g, &mut b, src)?;
                let memory = self.attention_memory(&mut g, &mut b, enc)?;
                let mut state = self.initial_decoder_state(&mut g, None)?;
                let mut alpha_prev = self.zeros(&mut g, src.len())?;
                let mut alpha_cum = alpha_prev;
                let mut pos = 1;
                while out.len() < max_len {
                    let step = self.attention_step(
                        &mut g,
                        &mut b,
                        &memory,
                        state.top(),
                        pos + 1,
                        alpha_prev,
                        alpha_cum,
                    )?;
                    let (next, logits) =
                        self.decoder_step(&mut g, &mut b, &state, prev, Some(step.context))?;
                    state = next;
                    alpha_cum = if pos == 1 {
                        step.alpha
                    } else {
                        g.add(alpha_cum, step.alpha)?
                    };
                    alpha_prev = step.alpha;
                    pos += 1;
                    prev = argmax(g.value(logits).data());
                    if prev == Vocab::EOS_ID {
                        break;
                    }
                    out.push(prev);
                }
            }
        }
        Ok(out)
    }
}

/// Index of the largest value, lowest index on ties.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

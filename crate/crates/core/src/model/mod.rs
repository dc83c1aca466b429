//! Transformer stacks assembled from an ordering string.
//!
//! Each symbol of the ordering becomes one residual sublayer, applied in
//! order from the embeddings (left) to the output projection (right).

pub mod checkpoint;
mod sublayers;

pub use sublayers::{
    cross_attention_sublayer, feedforward_sublayer, self_attention_sublayer, Activation, AttentionSink,
    AttentionWeights, BlockOptions, CapturedAttention, FeedforwardWeights, NormPlacement,
};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ordering::{OrderingError, OrderingSpec, SublayerKind};
use crate::rng::LabRng;
use crate::tensor::{GradCheckConfig, ParamCategory, ParamId, ParamStore, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Ordering(#[from] OrderingError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("token {token} at position {position} is outside vocabulary of size {vocab}")]
    TokenOutOfRange { position: usize, token: usize, vocab: usize },
    #[error("sequence length {len} must be between 1 and the context length {context}")]
    BadSequenceLength { len: usize, context: usize },
    #[error("batch sequences must share one length")]
    RaggedBatch,
    #[error("ordering contains cross-attention but no memory was supplied")]
    MissingMemory,
}

/// Serializes as the plain ordering string; `c` anywhere selects decoder mode.
pub mod ordering_string {
    use super::*;

    pub fn serialize<S: Serializer>(spec: &OrderingSpec, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&spec.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<OrderingSpec, D::Error> {
        let text = String::deserialize(d)?;
        if text.is_empty() {
            return Ok(OrderingSpec::empty());
        }
        OrderingSpec::parse(&text, text.contains('c')).map_err(serde::de::Error::custom)
    }
}

fn default_true() -> bool {
    true
}

fn default_ln_eps() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    pub heads: usize,
    pub ffn_inner: usize,
    pub vocab: usize,
    pub context: usize,
    /// Optional in templates, where each trial supplies its own.
    #[serde(with = "ordering_string", default = "OrderingSpec::empty")]
    pub ordering: OrderingSpec,
    #[serde(default = "default_true")]
    pub tie_embeddings: bool,
    #[serde(default)]
    pub norm: NormPlacement,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_ln_eps")]
    pub ln_eps: f64,
}

impl ModelConfig {
    /// Pre-norm, ReLU, tied embeddings, `ffn_inner = 4d`, no dropout.
    pub fn new(d: usize, heads: usize, vocab: usize, context: usize, ordering: OrderingSpec) -> Self {
        Self {
            d,
            heads,
            ffn_inner: 4 * d,
            vocab,
            context,
            ordering,
            tie_embeddings: true,
            norm: NormPlacement::Pre,
            activation: Activation::Relu,
            dropout: 0.0,
            ln_eps: 1e-5,
        }
    }

    /// Every violated constraint, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("d", self.d),
            ("heads", self.heads),
            ("ffn_inner", self.ffn_inner),
            ("vocab", self.vocab),
            ("context", self.context),
        ] {
            if v == 0 {
                out.push(format!("{name} must be at least 1"));
            }
        }
        if self.heads > 0 && !self.d.is_multiple_of(self.heads) {
            out.push(format!("d={} is not divisible by heads={}", self.d, self.heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            out.push(format!("dropout={} must be in [0, 1)", self.dropout));
        }
        if self.ln_eps.is_nan() || self.ln_eps <= 0.0 {
            out.push(format!("ln_eps={} must be positive", self.ln_eps));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self.problems().as_slice() {
            [] => Ok(()),
            p => Err(ModelError::Config(p.join("; "))),
        }
    }

    pub fn block_options(&self) -> BlockOptions {
        BlockOptions {
            heads: self.heads,
            norm: self.norm,
            activation: self.activation,
            ln_eps: self.ln_eps,
        }
    }
}

/// Parameter handles of one sublayer inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SublayerParams {
    Attention {
        kind: SublayerKind,
        ln_gain: ParamId,
        ln_bias: ParamId,
        wq: ParamId,
        wk: ParamId,
        wv: ParamId,
        wo: ParamId,
    },
    Feedforward {
        ln_gain: ParamId,
        ln_bias: ParamId,
        w1: ParamId,
        b1: ParamId,
        w2: ParamId,
        b2: ParamId,
    },
}

impl SublayerParams {
    pub fn kind(&self) -> SublayerKind {
        match self {
            SublayerParams::Attention { kind, .. } => *kind,
            SublayerParams::Feedforward { .. } => SublayerKind::Feedforward,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransformerStack {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub token_embedding: ParamId,
    pub position_embedding: ParamId,
    pub sublayers: Vec<SublayerParams>,
    pub final_gain: ParamId,
    pub final_bias: ParamId,
    /// Free output projection `[d×vocab]`; `None` when tied to the token embedding.
    pub output: Option<ParamId>,
}

fn glorot(rng: &mut LabRng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform(-limit, limit)).collect();
    Tensor::new(vec![rows, cols], data).expect("positive extents")
}

/// Allocates and initializes every parameter: Glorot-uniform matrices, zero
/// biases, unit norm gains.
pub fn build_model(config: ModelConfig, seed: u64) -> Result<TransformerStack, ModelError> {
    config.validate()?;
    let mut rng = LabRng::new(seed);
    let mut params = ParamStore::new();
    let (d, inner) = (config.d, config.ffn_inner);
    let token_embedding = params.add("token_embedding", ParamCategory::Embedding, glorot(&mut rng, config.vocab, d));
    let position_embedding = params.add(
        "position_embedding",
        ParamCategory::Embedding,
        glorot(&mut rng, config.context, d),
    );
    let mut sublayers = Vec::with_capacity(config.ordering.len());
    for (i, &kind) in config.ordering.kinds().iter().enumerate() {
        let ln_gain = params.add(format!("sublayer{i}.ln_gain"), ParamCategory::Bias, Tensor::filled(&[d], 1.0));
        let ln_bias = params.add(format!("sublayer{i}.ln_bias"), ParamCategory::Bias, Tensor::zeros(&[d]));
        let entry = match kind {
            SublayerKind::SelfAttention | SublayerKind::CrossAttention => {
                let mut proj = |name: &str| {
                    params.add(format!("sublayer{i}.{name}"), ParamCategory::Weight, glorot(&mut rng, d, d))
                };
                SublayerParams::Attention {
                    kind,
                    ln_gain,
                    ln_bias,
                    wq: proj("wq"),
                    wk: proj("wk"),
                    wv: proj("wv"),
                    wo: proj("wo"),
                }
            }
            SublayerKind::Feedforward => {
                let w1 = params.add(format!("sublayer{i}.w1"), ParamCategory::Weight, glorot(&mut rng, d, inner));
                let b1 = params.add(format!("sublayer{i}.b1"), ParamCategory::Bias, Tensor::zeros(&[inner]));
                let w2 = params.add(format!("sublayer{i}.w2"), ParamCategory::Weight, glorot(&mut rng, inner, d));
                let b2 = params.add(format!("sublayer{i}.b2"), ParamCategory::Bias, Tensor::zeros(&[d]));
                SublayerParams::Feedforward {
                    ln_gain,
                    ln_bias,
                    w1,
                    b1,
                    w2,
                    b2,
                }
            }
        };
        sublayers.push(entry);
    }
    let final_gain = params.add("final.ln_gain", ParamCategory::Bias, Tensor::filled(&[d], 1.0));
    let final_bias = params.add("final.ln_bias", ParamCategory::Bias, Tensor::zeros(&[d]));
    let output = (!config.tie_embeddings)
        .then(|| params.add("output", ParamCategory::Embedding, glorot(&mut rng, d, config.vocab)));
    Ok(TransformerStack {
        config,
        params,
        token_embedding,
        position_embedding,
        sublayers,
        final_gain,
        final_bias,
        output,
    })
}

/// Exact parameter count. Layer-norm gains and shifts count as biases;
/// embeddings include an untied output projection.
pub fn count_params(model: &TransformerStack, include_bias: bool, include_embeddings: bool) -> usize {
    model.params.count(|c| match c {
        ParamCategory::Weight => true,
        ParamCategory::Bias => include_bias,
        ParamCategory::Embedding => include_embeddings,
    })
}

/// Per-call forward settings.
#[derive(Default)]
pub struct ForwardOptions<'a> {
    /// Encoder output `[m×d]` consumed by `c` sublayers.
    pub memory: Option<&'a Tensor>,
    pub capture: Option<&'a mut AttentionSink>,
    /// Source of dropout masks; dropout is skipped when absent.
    pub dropout_rng: Option<&'a mut LabRng>,
}

impl TransformerStack {
    pub fn kinds(&self) -> Vec<SublayerKind> {
        self.sublayers.iter().map(SublayerParams::kind).collect()
    }

    fn check_batch(&self, batch: &[&[usize]]) -> Result<usize, ModelError> {
        let len = batch.first().map_or(0, |s| s.len());
        if batch.iter().any(|s| s.len() != len) {
            return Err(ModelError::RaggedBatch);
        }
        if len == 0 || len > self.config.context {
            return Err(ModelError::BadSequenceLength {
                len,
                context: self.config.context,
            });
        }
        for seq in batch {
            if let Some((position, &token)) = seq.iter().enumerate().find(|(_, &t)| t >= self.config.vocab) {
                return Err(ModelError::TokenOutOfRange {
                    position,
                    token,
                    vocab: self.config.vocab,
                });
            }
        }
        Ok(len)
    }

    /// Records the forward pass for a batch of equal-length sequences and
    /// returns logits `[batch·len × vocab]`.
    pub fn forward_on_tape(&self, tape: &mut Tape, batch: &[&[usize]], opts: ForwardOptions<'_>) -> Result<Var, ModelError> {
        let t = self.check_batch(batch)?;
        let ForwardOptions {
            memory,
            mut capture,
            mut dropout_rng,
        } = opts;
        let p = |tape: &mut Tape, id: ParamId| tape.param(&self.params, id);
        let ids: Vec<usize> = batch.iter().flat_map(|s| s.iter().copied()).collect();
        let positions: Vec<usize> = (0..batch.len()).flat_map(|_| 0..t).collect();
        let emb = p(tape, self.token_embedding);
        let pos = p(tape, self.position_embedding);
        let tok = tape.gather_rows(emb, &ids)?;
        let pe = tape.gather_rows(pos, &positions)?;
        let mut x = tape.add(tok, pe)?;
        let memory = memory.map(|m| tape.constant(m.clone()));
        let opts = self.config.block_options();
        let rate = self.config.dropout;

        for (index, sub) in self.sublayers.iter().enumerate() {
            // Dropout acts on the residual stream entering each sublayer.
            if let Some(rng) = dropout_rng.as_deref_mut() {
                x = tape.dropout(x, rate, rng);
            }
            x = match *sub {
                SublayerParams::Attention {
                    kind,
                    ln_gain,
                    ln_bias,
                    wq,
                    wk,
                    wv,
                    wo,
                } => {
                    let w = AttentionWeights {
                        ln_gain: p(tape, ln_gain),
                        ln_bias: p(tape, ln_bias),
                        wq: p(tape, wq),
                        wk: p(tape, wk),
                        wv: p(tape, wv),
                        wo: p(tape, wo),
                    };
                    if kind == SublayerKind::CrossAttention {
                        let mem = memory.ok_or(ModelError::MissingMemory)?;
                        cross_attention_sublayer(tape, x, mem, &w, &opts, t, index, capture.as_deref_mut())?
                    } else {
                        self_attention_sublayer(tape, x, &w, &opts, t, true, index, capture.as_deref_mut())?
                    }
                }
                SublayerParams::Feedforward {
                    ln_gain,
                    ln_bias,
                    w1,
                    b1,
                    w2,
                    b2,
                } => {
                    let w = FeedforwardWeights {
                        ln_gain: p(tape, ln_gain),
                        ln_bias: p(tape, ln_bias),
                        w1: p(tape, w1),
                        b1: p(tape, b1),
                        w2: p(tape, w2),
                        b2: p(tape, b2),
                    };
                    feedforward_sublayer(tape, x, &w, &opts)?
                }
            };
        }

        let g = p(tape, self.final_gain);
        let b = p(tape, self.final_bias);
        let h = tape.layer_norm(x, g, b, self.config.ln_eps)?;
        let logits = match self.output {
            Some(out) => {
                let w = p(tape, out);
                tape.matmul(h, w)?
            }
            None => tape.matmul_nt(h, emb)?,
        };
        Ok(logits)
    }

    /// Logits `[t×vocab]` for one sequence, without dropout.
    pub fn forward(&self, tokens: &[usize], memory: Option<&Tensor>, capture: Option<&mut AttentionSink>) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let logits = self.forward_on_tape(
            &mut tape,
            &[tokens],
            ForwardOptions {
                memory,
                capture,
                dropout_rng: None,
            },
        )?;
        Ok(tape.value(logits).clone())
    }

    /// Mean next-token NLL (nats) of `targets` given `inputs` on a fresh tape,
    /// without dropout.
    pub fn loss(&self, inputs: &[&[usize]], targets: &[usize], memory: Option<&Tensor>) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let logits = self.forward_on_tape(
            &mut tape,
            inputs,
            ForwardOptions {
                memory,
                ..Default::default()
            },
        )?;
        let loss = tape.cross_entropy(logits, targets)?;
        Ok(tape.value(loss).data()[0])
    }
}

/// Largest finite-difference relative error over every parameter
/// coordinate of the mean next-token loss.
pub fn check_param_gradients(
    model: &TransformerStack,
    inputs: &[&[usize]],
    targets: &[usize],
    memory: Option<&Tensor>,
    cfg: &GradCheckConfig,
) -> Result<f64, ModelError> {
    let mut analytic = model.params.clone();
    analytic.zero_grads();
    let mut tape = Tape::new();
    let logits = model.forward_on_tape(
        &mut tape,
        inputs,
        ForwardOptions {
            memory,
            ..Default::default()
        },
    )?;
    let loss = tape.cross_entropy(logits, targets)?;
    tape.backward(loss)?;
    tape.accumulate_param_grads(&mut analytic);

    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (pi, param) in analytic.iter().enumerate() {
        let id = ParamId(pi);
        for k in 0..param.value.numel() {
            let original = model.params.value(id).data()[k];
            probe.params.get_mut(id).value.data_mut()[k] = original + cfg.eps;
            let up = probe.loss(inputs, targets, memory)?;
            probe.params.get_mut(id).value.data_mut()[k] = original - cfg.eps;
            let down = probe.loss(inputs, targets, memory)?;
            probe.params.get_mut(id).value.data_mut()[k] = original;
            let numeric = (up - down) / (2.0 * cfg.eps);
            let a = param.grad[k];
            worst = worst.max((a - numeric).abs() / (a.abs().max(numeric.abs()) + cfg.floor));
        }
    }
    Ok(worst)
}

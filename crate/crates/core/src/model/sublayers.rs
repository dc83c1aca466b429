//! Residual sublayers over a batch laid out as `[batch·seq_len × d]` rows.

use serde::{Deserialize, Serialize};

use crate::ordering::SublayerKind;
use crate::tensor::{causal_mask, Tape, TensorError, Var};

/// Where layer normalization sits relative to the residual connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormPlacement {
    /// `x + F(LN(x))`
    #[default]
    Pre,
    /// `LN(x + F(x))`
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Gelu,
}

/// Settings shared by every sublayer of a stack.
#[derive(Debug, Clone, Copy)]
pub struct BlockOptions {
    pub heads: usize,
    pub norm: NormPlacement,
    pub activation: Activation,
    pub ln_eps: f64,
}

/// Tape handles for an attention sublayer (self or cross).
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights {
    pub ln_gain: Var,
    pub ln_bias: Var,
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct FeedforwardWeights {
    pub ln_gain: Var,
    pub ln_bias: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// Post-softmax attention weights from one sublayer for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturedAttention {
    /// Position of the sublayer in the ordering.
    pub sublayer: usize,
    pub kind: SublayerKind,
    /// Sequence index within the batch.
    pub sequence: usize,
    pub heads: usize,
    pub queries: usize,
    pub keys: usize,
    /// `[heads × queries × keys]`, row-major.
    pub probs: Vec<f64>,
}

impl CapturedAttention {
    pub fn row(&self, head: usize, query: usize) -> &[f64] {
        let start = (head * self.queries + query) * self.keys;
        &self.probs[start..start + self.keys]
    }
}

/// Collector for attention weights produced during a forward pass.
#[derive(Debug, Clone, Default)]
pub struct AttentionSink {
    pub records: Vec<CapturedAttention>,
}

fn residual(tape: &mut Tape, x: Var, ln_gain: Var, ln_bias: Var, opts: &BlockOptions, body: impl FnOnce(&mut Tape, Var) -> Result<Var, TensorError>) -> Result<Var, TensorError> {
    match opts.norm {
        NormPlacement::Pre => {
            let h = tape.layer_norm(x, ln_gain, ln_bias, opts.ln_eps)?;
            let h = body(tape, h)?;
            tape.add(x, h)
        }
        NormPlacement::Post => {
            let h = body(tape, x)?;
            let s = tape.add(x, h)?;
            tape.layer_norm(s, ln_gain, ln_bias, opts.ln_eps)
        }
    }
}

struct AttentionCall<'a> {
    sublayer: usize,
    kind: SublayerKind,
    seq_len: usize,
    /// Memory rows per sequence; `None` means keys come from the queries' own sequence.
    memory: Option<Var>,
    causal: bool,
    capture: Option<&'a mut AttentionSink>,
}

fn multi_head(tape: &mut Tape, h: Var, w: &AttentionWeights, opts: &BlockOptions, call: AttentionCall<'_>) -> Result<Var, TensorError> {
    let shape = tape.shape(h).to_vec();
    let [rows, d] = shape[..] else {
        return Err(TensorError::NotMatrix { op: "attention", shape });
    };
    let t = call.seq_len;
    if t == 0 || rows % t != 0 || d % opts.heads != 0 {
        return Err(TensorError::ShapeMismatch {
            op: "attention",
            left: vec![rows, d],
            right: vec![t, opts.heads],
        });
    }
    let batch = rows / t;
    let dh = d / opts.heads;
    let source = call.memory.unwrap_or(h);
    let keys = if call.memory.is_some() { tape.shape(source)[0] } else { t };
    if tape.shape(source)[1] != d {
        return Err(TensorError::ShapeMismatch {
            op: "attention",
            left: vec![rows, d],
            right: tape.shape(source).to_vec(),
        });
    }

    let q = tape.matmul(h, w.wq)?;
    let k = tape.matmul(source, w.wk)?;
    let v = tape.matmul(source, w.wv)?;
    let mask = call.causal.then(|| causal_mask(t));
    let scale = 1.0 / (dh as f64).sqrt();
    let mut capture = call.capture;
    let mut parts = Vec::with_capacity(batch * opts.heads);
    for b in 0..batch {
        let key_row = if call.memory.is_some() { 0 } else { b * t };
        let mut probs_all = Vec::new();
        for head in 0..opts.heads {
            let qh = tape.block(q, b * t, head * dh, t, dh)?;
            let kh = tape.block(k, key_row, head * dh, keys, dh)?;
            let vh = tape.block(v, key_row, head * dh, keys, dh)?;
            let scores = tape.matmul_nt(qh, kh)?;
            let scores = tape.scale(scores, scale);
            let probs = tape.softmax_rows(scores, mask.as_deref())?;
            if capture.is_some() {
                probs_all.extend_from_slice(tape.value(probs).data());
            }
            let out = tape.matmul(probs, vh)?;
            parts.push((out, b * t, head * dh));
        }
        if let Some(sink) = capture.as_deref_mut() {
            sink.records.push(CapturedAttention {
                sublayer: call.sublayer,
                kind: call.kind,
                sequence: b,
                heads: opts.heads,
                queries: t,
                keys,
                probs: probs_all,
            });
        }
    }
    let merged = tape.stitch(&parts, rows, d)?;
    tape.matmul(merged, w.wo)
}

/// `X + self-attention(X)` with scaled dot-product heads.
#[allow(clippy::too_many_arguments)]
pub fn self_attention_sublayer(
    tape: &mut Tape,
    x: Var,
    w: &AttentionWeights,
    opts: &BlockOptions,
    seq_len: usize,
    causal: bool,
    sublayer: usize,
    capture: Option<&mut AttentionSink>,
) -> Result<Var, TensorError> {
    residual(tape, x, w.ln_gain, w.ln_bias, opts, |tape, h| {
        multi_head(
            tape,
            h,
            w,
            opts,
            AttentionCall {
                sublayer,
                kind: SublayerKind::SelfAttention,
                seq_len,
                memory: None,
                causal,
                capture,
            },
        )
    })
}

/// `Y + cross-attention(Y, memory)`: queries from `y`, keys and values from
/// the `[m×d]` memory shared by every sequence in the batch; no mask.
#[allow(clippy::too_many_arguments)]
pub fn cross_attention_sublayer(
    tape: &mut Tape,
    y: Var,
    memory: Var,
    w: &AttentionWeights,
    opts: &BlockOptions,
    seq_len: usize,
    sublayer: usize,
    capture: Option<&mut AttentionSink>,
) -> Result<Var, TensorError> {
    residual(tape, y, w.ln_gain, w.ln_bias, opts, |tape, h| {
        multi_head(
            tape,
            h,
            w,
            opts,
            AttentionCall {
                sublayer,
                kind: SublayerKind::CrossAttention,
                seq_len,
                memory: Some(memory),
                causal: false,
                capture,
            },
        )
    })
}

/// `X + W2·act(W1·X + b1) + b2`.
pub fn feedforward_sublayer(tape: &mut Tape, x: Var, w: &FeedforwardWeights, opts: &BlockOptions) -> Result<Var, TensorError> {
    residual(tape, x, w.ln_gain, w.ln_bias, opts, |tape, h| {
        let inner = tape.matmul(h, w.w1)?;
        let inner = tape.add_row(inner, w.b1)?;
        let inner = match opts.activation {
            Activation::Relu => tape.relu(inner),
            Activation::Gelu => tape.gelu(inner),
        };
        let out = tape.matmul(inner, w.w2)?;
        tape.add_row(out, w.b2)
    })
}

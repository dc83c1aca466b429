//! Attention dumps and their JSON Lines encoding.
//!
//! Line 1 is the header `{v, model_id, ordering, heads, t, s_count, tokens}`.
//! Every further line is `{layer, head, token, p}` where `layer` is the
//! self-attention ordinal and `p` has `t` entries written with 17
//! significant digits.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::AttentionError;
use crate::model::{AttentionSink, TransformerStack};
use crate::ordering::SublayerKind;

pub const DUMP_VERSION: u32 = 1;

/// Self-attention weights of one model on one token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDump {
    pub model_id: String,
    pub ordering: String,
    pub heads: usize,
    pub t: usize,
    pub tokens: Vec<usize>,
    /// `layers[i]` is the i-th `s` sublayer, laid out `[heads × t × t]`:
    /// one length-`t` distribution per (head, token), zero past the token.
    pub layers: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    v: u32,
    model_id: String,
    ordering: String,
    heads: usize,
    t: usize,
    s_count: usize,
    tokens: Vec<usize>,
}

#[derive(Debug, Deserialize)]
struct Line {
    layer: usize,
    head: usize,
    token: usize,
    p: Vec<f64>,
}

impl AttentionDump {
    pub fn s_count(&self) -> usize {
        self.layers.len()
    }

    pub fn dist(&self, layer: usize, head: usize, token: usize) -> &[f64] {
        let start = (head * self.t + token) * self.t;
        &self.layers[layer][start..start + self.t]
    }

    /// Content ordering used to canonicalize argument order.
    pub(crate) fn content_cmp(&self, other: &Self) -> std::cmp::Ordering {
        let key = |d: &Self| (d.model_id.clone(), d.ordering.clone(), d.heads, d.t, d.tokens.clone(), d.layers.len());
        key(self).cmp(&key(other)).then_with(|| {
            self.layers
                .iter()
                .flatten()
                .zip(other.layers.iter().flatten())
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    }

    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<(), AttentionError> {
        let header = Header {
            v: DUMP_VERSION,
            model_id: self.model_id.clone(),
            ordering: self.ordering.clone(),
            heads: self.heads,
            t: self.t,
            s_count: self.s_count(),
            tokens: self.tokens.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
        let mut line = String::new();
        for layer in 0..self.s_count() {
            for head in 0..self.heads {
                for token in 0..self.t {
                    line.clear();
                    let _ = write!(line, r#"{{"layer":{layer},"head":{head},"token":{token},"p":["#);
                    for (i, p) in self.dist(layer, head, token).iter().enumerate() {
                        if i > 0 {
                            line.push(',');
                        }
                        let _ = write!(line, "{p:.16e}");
                    }
                    line.push_str("]}");
                    writeln!(w, "{line}")?;
                }
            }
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self, AttentionError> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| AttentionError::Format("empty dump".into()))??;
        let h: Header = serde_json::from_str(&first).map_err(|e| AttentionError::Format(format!("header: {e}")))?;
        if h.v != DUMP_VERSION {
            return Err(AttentionError::Format(format!("unsupported dump version {}", h.v)));
        }
        if h.tokens.len() != h.t {
            return Err(AttentionError::Format(format!("{} tokens for t={}", h.tokens.len(), h.t)));
        }
        let size = h.heads * h.t * h.t;
        let mut layers = vec![vec![0.0; size]; h.s_count];
        let mut seen = vec![vec![false; h.heads * h.t]; h.s_count];
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let l: Line = serde_json::from_str(&line).map_err(|e| AttentionError::Format(format!("line {}: {e}", n + 2)))?;
            if l.layer >= h.s_count || l.head >= h.heads || l.token >= h.t || l.p.len() != h.t {
                return Err(AttentionError::Format(format!("line {}: out of range", n + 2)));
            }
            let slot = l.head * h.t + l.token;
            if std::mem::replace(&mut seen[l.layer][slot], true) {
                return Err(AttentionError::Format(format!("line {}: duplicate entry", n + 2)));
            }
            layers[l.layer][slot * h.t..(slot + 1) * h.t].copy_from_slice(&l.p);
        }
        if seen.iter().flatten().any(|s| !s) {
            return Err(AttentionError::Format("missing distributions".into()));
        }
        Ok(Self {
            model_id: h.model_id,
            ordering: h.ordering,
            heads: h.heads,
            t: h.t,
            tokens: h.tokens,
            layers,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), AttentionError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, AttentionError> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Runs `tokens` through `model` and keeps every self-attention sublayer's
/// weights, ordered by their position in the stack.
pub fn capture(model: &TransformerStack, tokens: &[usize], model_id: &str) -> Result<AttentionDump, AttentionError> {
    let memory;
    let memory_ref = if model.config.ordering.is_decoder() {
        // Cross-attention is not analysed; any memory satisfies the forward.
        memory = crate::tensor::Tensor::zeros(&[1, model.config.d]);
        Some(&memory)
    } else {
        None
    };
    let mut sink = AttentionSink::default();
    model.forward(tokens, memory_ref, Some(&mut sink))?;
    let layers = sink
        .records
        .into_iter()
        .filter(|r| r.kind == SublayerKind::SelfAttention)
        .map(|r| r.probs)
        .collect();
    Ok(AttentionDump {
        model_id: model_id.to_string(),
        ordering: model.config.ordering.to_string(),
        heads: model.config.heads,
        t: tokens.len(),
        tokens: tokens.to_vec(),
        layers,
    })
}

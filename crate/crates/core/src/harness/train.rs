use std::f64::consts::LN_2;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::corpus::Corpus;
use super::HarnessError;
use crate::model::{build_model, count_params, ForwardOptions, ModelConfig, TransformerStack};
use crate::rng::{derive_seed, LabRng};
use crate::tensor::{adam_step, AdamConfig, OptimizerState, Tape};

/// Results schema version, written as `v` on every JSONL line.
pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub steps: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub seed: u64,
    /// Train loss is recorded every `eval_interval` steps and at the last step.
    pub eval_interval: usize,
}

impl TrainConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = self.model.problems().into_iter().map(|p| format!("model: {p}")).collect();
        if self.steps == 0 {
            out.push("steps must be at least 1".into());
        }
        if self.batch_size == 0 {
            out.push("batch_size must be at least 1".into());
        }
        if self.eval_interval == 0 {
            out.push("eval_interval must be at least 1".into());
        } else if !self.steps.is_multiple_of(self.eval_interval) {
            out.push(format!(
                "eval_interval={} does not divide steps={}",
                self.eval_interval, self.steps
            ));
        }
        let a = &self.adam;
        if !(a.lr.is_finite() && a.lr > 0.0) {
            out.push(format!("adam.lr={} must be positive", a.lr));
        }
        for (name, b) in [("adam.beta1", a.beta1), ("adam.beta2", a.beta2)] {
            if !(0.0..1.0).contains(&b) {
                out.push(format!("{name}={b} must be in [0, 1)"));
            }
        }
        if !(a.eps.is_finite() && a.eps > 0.0) {
            out.push(format!("adam.eps={} must be positive", a.eps));
        }
        out
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        match self.problems() {
            p if p.is_empty() => Ok(()),
            p => Err(HarnessError::Config(p)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    /// Mean train-batch loss before the update at `step`.
    pub nats: f64,
}

/// Run-dependent facts that are excluded from reproducibility comparisons.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub v: u32,
    pub trial: usize,
    pub ordering: String,
    /// Sandwich coefficient, or -1 outside a sweep.
    pub k: i64,
    pub seed: u64,
    /// Ex-bias sublayer parameters.
    pub params: usize,
    pub params_total: usize,
    pub loss_curve: Vec<CurvePoint>,
    pub valid_nats: f64,
    pub valid_bpc: f64,
    pub valid_ppl: f64,
    #[serde(default)]
    pub meta: RecordMeta,
}

impl TrialRecord {
    /// Equality ignoring `meta`.
    pub fn same_result(&self, other: &Self) -> bool {
        let strip = |r: &Self| Self {
            meta: RecordMeta::default(),
            ..r.clone()
        };
        strip(self) == strip(other)
    }
}

pub fn nats_to_bpc(nats: f64) -> f64 {
    nats / LN_2
}

pub fn nats_to_ppl(nats: f64) -> f64 {
    nats.exp()
}

/// Mean next-character NLL over `stream`, cut into non-overlapping windows of
/// at most `context` predictions so every character after the first is
/// predicted exactly once.
pub fn evaluate(model: &TransformerStack, stream: &[usize], context: usize) -> Result<f64, HarnessError> {
    if stream.len() < 2 {
        return Err(HarnessError::StreamTooShort(stream.len()));
    }
    let context = context.min(model.config.context).max(1);
    let predictions = stream.len() - 1;
    let full = predictions / context;
    let mut total = 0.0;
    const CHUNK: usize = 16;
    let mut start = 0;
    while start < full {
        let end = (start + CHUNK).min(full);
        let inputs: Vec<&[usize]> = (start..end).map(|w| &stream[w * context..(w + 1) * context]).collect();
        let targets: Vec<usize> = (start..end)
            .flat_map(|w| stream[w * context + 1..(w + 1) * context + 1].iter().copied())
            .collect();
        total += model.loss(&inputs, &targets, None)? * targets.len() as f64;
        start = end;
    }
    let tail = predictions - full * context;
    if tail > 0 {
        let s = full * context;
        total += model.loss(&[&stream[s..s + tail]], &stream[s + 1..], None)? * tail as f64;
    }
    Ok(total / predictions as f64)
}

/// Streams derived from a trial seed, so that sampling batches and
/// initializing weights never share random numbers.
fn seeds(seed: u64) -> (u64, u64, u64) {
    (derive_seed(seed, 0), derive_seed(seed, 1), derive_seed(seed, 2))
}

/// Trains a model and returns it with its record. `trial` and `k` are copied
/// into the record unchanged.
pub fn train_model(cfg: &TrainConfig, corpus: &Corpus, trial: usize, k: i64) -> Result<(TransformerStack, TrialRecord), HarnessError> {
    cfg.validate()?;
    if cfg.model.vocab < corpus.vocab() {
        return Err(HarnessError::Config(vec![format!(
            "model: vocab={} is smaller than the corpus vocabulary {}",
            cfg.model.vocab,
            corpus.vocab()
        )]));
    }
    let t = cfg.model.context;
    if corpus.train.len() < t + 1 {
        return Err(HarnessError::StreamTooShort(corpus.train.len()));
    }
    let started = Instant::now();
    let (init_seed, batch_seed, dropout_seed) = seeds(cfg.seed);
    let mut model = build_model(cfg.model.clone(), init_seed)?;
    let mut state = OptimizerState::new(&model.params, cfg.adam);
    let mut batch_rng = LabRng::new(batch_seed);
    let mut dropout_rng = LabRng::new(dropout_seed);
    let starts_available = (corpus.train.len() - t) as u64;

    let mut curve = Vec::new();
    for step in 0..cfg.steps {
        let starts: Vec<usize> = (0..cfg.batch_size).map(|_| batch_rng.below(starts_available) as usize).collect();
        let inputs: Vec<&[usize]> = starts.iter().map(|&s| &corpus.train[s..s + t]).collect();
        let targets: Vec<usize> = starts.iter().flat_map(|&s| corpus.train[s + 1..s + t + 1].iter().copied()).collect();

        let mut tape = Tape::new();
        let opts = ForwardOptions {
            dropout_rng: (cfg.model.dropout > 0.0).then_some(&mut dropout_rng),
            ..Default::default()
        };
        let logits = model.forward_on_tape(&mut tape, &inputs, opts)?;
        let loss = tape.cross_entropy(logits, &targets)?;
        if step % cfg.eval_interval == 0 || step + 1 == cfg.steps {
            curve.push(CurvePoint {
                step,
                nats: tape.value(loss).data()[0],
            });
        }
        tape.backward(loss)?;
        tape.accumulate_param_grads(&mut model.params);
        adam_step(&mut model.params, &mut state);
    }

    let valid_nats = evaluate(&model, &corpus.valid, t)?;
    let record = TrialRecord {
        v: RECORD_VERSION,
        trial,
        ordering: cfg.model.ordering.to_string(),
        k,
        seed: cfg.seed,
        params: count_params(&model, false, false),
        params_total: count_params(&model, true, true),
        loss_curve: curve,
        valid_nats,
        valid_bpc: nats_to_bpc(valid_nats),
        valid_ppl: nats_to_ppl(valid_nats),
        meta: RecordMeta {
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    };
    Ok((model, record))
}

pub fn train(cfg: &TrainConfig, corpus: &Corpus) -> Result<TrialRecord, HarnessError> {
    train_model(cfg, corpus, 0, -1).map(|(_, r)| r)
}

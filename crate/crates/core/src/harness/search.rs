//! Random-search and sandwich-sweep runners with a resumable JSONL log.
//!
//! The results file starts with one [`SearchHeader`] line followed by one
//! [`TrialRecord`] per line in trial-index order. On restart the header must
//! match the current config; complete records are kept, a torn final line is
//! cut off, and only the missing trials are trained.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering as AtomicOrdering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use super::corpus::Corpus;
use super::train::{train_model, TrainConfig, TrialRecord, RECORD_VERSION};
use super::HarnessError;
use crate::ordering::{sample_budgeted, sample_permutation, sandwich, OrderingSpec, ParamBudget};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchMode {
    /// `n_s` self-attention and `n_f` feedforward sublayers, shuffled.
    Permutation { n_s: usize, n_f: usize, trials: usize },
    /// Random orderings spending exactly `budget` units.
    Budgeted { budget: u64, trials: usize },
    /// One trial per coefficient, `sandwich(n, k)`.
    SandwichSweep { n: usize, k_values: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub mode: SearchMode,
    /// Shared hyperparameters; its ordering and seed are replaced per trial.
    pub template: TrainConfig,
    pub master_seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl SearchConfig {
    pub fn trial_count(&self) -> usize {
        match &self.mode {
            SearchMode::Permutation { trials, .. } | SearchMode::Budgeted { trials, .. } => *trials,
            SearchMode::SandwichSweep { k_values, .. } => k_values.len(),
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = self.template.problems().into_iter().map(|p| format!("template.{p}")).collect();
        match &self.mode {
            SearchMode::Permutation { n_s, n_f, trials } => {
                if n_s + n_f == 0 {
                    out.push("mode: n_s + n_f must be at least 1".into());
                }
                if *trials == 0 {
                    out.push("mode.trials must be at least 1".into());
                }
            }
            SearchMode::Budgeted { budget, trials } => {
                if *budget == 0 {
                    out.push("mode.budget must be at least 1".into());
                }
                if *trials == 0 {
                    out.push("mode.trials must be at least 1".into());
                }
            }
            SearchMode::SandwichSweep { n, k_values } => {
                if *n == 0 {
                    out.push("mode.n must be at least 1".into());
                }
                if k_values.is_empty() {
                    out.push("mode.k_values must not be empty".into());
                }
                for &k in k_values {
                    if k >= (*n).max(1) {
                        out.push(format!("mode.k_values: k={k} is outside [0, {}]", n.saturating_sub(1)));
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        match self.problems() {
            p if p.is_empty() => Ok(()),
            p => Err(HarnessError::Config(p)),
        }
    }

    pub fn trial_seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, index as u64)
    }

    /// Ordering and sandwich coefficient (or -1) of trial `index`.
    pub fn trial_ordering(&self, index: usize) -> Result<(OrderingSpec, i64), HarnessError> {
        let draw_seed = derive_seed(self.trial_seed(index), 0x5EED);
        Ok(match &self.mode {
            SearchMode::Permutation { n_s, n_f, .. } => (sample_permutation(*n_s, *n_f, draw_seed)?, -1),
            SearchMode::Budgeted { budget, .. } => (sample_budgeted(ParamBudget(*budget), draw_seed)?, -1),
            SearchMode::SandwichSweep { n, k_values } => (sandwich(*n, k_values[index])?, k_values[index] as i64),
        })
    }

    pub fn trial_config(&self, index: usize) -> Result<(TrainConfig, i64), HarnessError> {
        let (ordering, k) = self.trial_ordering(index)?;
        let mut cfg = self.template.clone();
        cfg.model.ordering = ordering;
        cfg.seed = self.trial_seed(index);
        Ok((cfg, k))
    }
}

/// First line of every results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHeader {
    pub v: u32,
    pub generator: String,
    pub config: SearchConfig,
}

impl SearchHeader {
    pub fn new(config: &SearchConfig) -> Self {
        Self {
            v: RECORD_VERSION,
            generator: concat!("sublab ", env!("CARGO_PKG_VERSION")).to_string(),
            config: config.clone(),
        }
    }
}

/// Execution knobs that do not change results.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub workers: usize,
    /// Stop after writing this many new records, as if killed. Test hook.
    pub interrupt_after: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            interrupt_after: None,
        }
    }
}

/// Reads a results file, truncating an unterminated final line in place.
/// Returns the header (if one was completely written) and the records in
/// file order.
pub fn read_results(path: &Path) -> Result<(Option<SearchHeader>, Vec<TrialRecord>), HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let good_end = text.rfind('\n').map_or(0, |i| i + 1);
    if good_end < text.len() {
        let file = OpenOptions::new().write(true).open(path).map_err(|e| HarnessError::io(path, e))?;
        file.set_len(good_end as u64).map_err(|e| HarnessError::io(path, e))?;
    }
    let mut lines = text[..good_end].lines();
    let corrupt = |line: usize, e: serde_json::Error| HarnessError::CorruptResults(path.to_path_buf(), format!("line {line}: {e}"));
    let Some(first) = lines.next() else {
        return Ok((None, Vec::new()));
    };
    let header: SearchHeader = serde_json::from_str(first).map_err(|e| corrupt(1, e))?;
    let records = lines
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| corrupt(i + 2, e)))
        .collect::<Result<Vec<TrialRecord>, _>>()?;
    Ok((Some(header), records))
}

fn write_line(file: &mut File, path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let mut line = serde_json::to_string(value).expect("records serialize");
    line.push('\n');
    file.write_all(line.as_bytes()).map_err(|e| HarnessError::io(path, e))?;
    file.flush().map_err(|e| HarnessError::io(path, e))
}

/// Opens (or creates) the results file and returns it positioned for append
/// together with the records already present.
fn open_results(path: &Path, config: &SearchConfig) -> Result<(File, Vec<TrialRecord>), HarnessError> {
    let mut header_present = false;
    let mut done = Vec::new();
    if path.exists() {
        let (header, records) = read_results(path)?;
        if let Some(header) = header {
            if header.config != *config {
                return Err(HarnessError::ConfigMismatch(path.to_path_buf()));
            }
            header_present = true;
        }
        for (expected, r) in records.iter().enumerate() {
            if r.trial != expected {
                return Err(HarnessError::CorruptResults(
                    path.to_path_buf(),
                    format!("record {expected} has trial index {}", r.trial),
                ));
            }
        }
        done = records;
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| HarnessError::io(path, e))?;
    if !header_present {
        write_line(&mut file, path, &SearchHeader::new(config))?;
    }
    Ok((file, done))
}

/// Runs every trial of `config` not already present in its output file.
/// Returns all records so far in trial order; fewer than
/// [`SearchConfig::trial_count`] only when interrupted.
pub fn run_search(config: &SearchConfig, corpus: &Corpus, opts: RunOptions) -> Result<Vec<TrialRecord>, HarnessError> {
    config.validate()?;
    let total = config.trial_count();
    let (mut sink, mut records) = match &config.output {
        Some(path) => {
            let (file, done) = open_results(path, config)?;
            (Some((file, path.clone())), done)
        }
        None => (None, Vec::new()),
    };
    let first = records.len();
    if first >= total {
        records.truncate(total);
        return Ok(records);
    }
    let budget = opts.interrupt_after.unwrap_or(usize::MAX);
    let next = AtomicUsize::new(first);
    let stop = AtomicBool::new(false);
    let workers = opts.workers.clamp(1, total - first);

    std::thread::scope(|scope| -> Result<(), HarnessError> {
        let (tx, rx) = mpsc::channel::<(usize, Result<TrialRecord, HarnessError>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop) = (&next, &stop);
            scope.spawn(move || loop {
                if stop.load(AtomicOrdering::SeqCst) {
                    break;
                }
                let index = next.fetch_add(1, AtomicOrdering::SeqCst);
                if index >= total {
                    break;
                }
                let result = config
                    .trial_config(index)
                    .and_then(|(cfg, k)| train_model(&cfg, corpus, index, k).map(|(_, r)| r));
                if tx.send((index, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut written = 0;
        let mut failure = None;
        for (index, result) in rx {
            match result {
                Ok(r) => {
                    pending.insert(index, r);
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    stop.store(true, AtomicOrdering::SeqCst);
                }
            }
            while failure.is_none() && written < budget {
                let Some(r) = pending.remove(&(first + written)) else { break };
                if let Some((file, path)) = sink.as_mut() {
                    write_line(file, path, &r)?;
                }
                records.push(r);
                written += 1;
            }
            if written >= budget {
                stop.store(true, AtomicOrdering::SeqCst);
            }
        }
        failure.map_or(Ok(()), Err)
    })?;
    Ok(records)
}

/// Random search over permutations or budgeted orderings.
pub fn run_random_search(config: &SearchConfig, corpus: &Corpus, opts: RunOptions) -> Result<Vec<TrialRecord>, HarnessError> {
    if matches!(config.mode, SearchMode::SandwichSweep { .. }) {
        return Err(HarnessError::Config(vec!["mode: random search needs permutation or budgeted".into()]));
    }
    run_search(config, corpus, opts)
}

/// One trial per `k`, each trained on `sandwich(n, k)` with the template's
/// hyperparameters.
pub fn run_sandwich_sweep(
    n: usize,
    k_values: &[usize],
    template: &TrainConfig,
    master_seed: u64,
    corpus: &Corpus,
    output: Option<PathBuf>,
    opts: RunOptions,
) -> Result<Vec<TrialRecord>, HarnessError> {
    let config = SearchConfig {
        mode: SearchMode::SandwichSweep {
            n,
            k_values: k_values.to_vec(),
        },
        template: template.clone(),
        master_seed,
        output,
    };
    run_search(&config, corpus, opts)
}

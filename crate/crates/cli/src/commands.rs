use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sublab::attention::{distance_matrix, grouped_means, DistanceTable, GroupedMeans};
use sublab::harness::fixtures::published_random_models;
use sublab::harness::{
    analyze_halves, bundled_corpus, load_corpus, read_results, render, run_search, train_model, Corpus, HarnessError,
    ReportFormat, RunOptions, ScoredOrdering, SearchConfig, SearchMode, SplitFractions, TrainConfig, DEFAULT_THRESHOLD,
};
use sublab::model::checkpoint;
use sublab::ordering::{half_counts, kinds_to_string, sample_budgeted, sample_permutation, split_halves, sublayer_param_count};
use sublab::rng::derive_seed;
use sublab::{attention_distance, capture, sandwich, sandwich_decoder, AttentionDump, GroundMetric, OrderingSpec, ParamBudget, SublayerKind};

use crate::{
    CaptureArgs, Command, CorpusArgs, DistanceArgs, GenArgs, HalvesArgs, ParamsArgs, ReportArgs, SampleArgs, SearchArgs,
    SplitArgs, TrainArgs,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Metric {
    Ppl,
    Bpc,
}

/// Usage and config errors exit with 2, everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) | HarnessError::BadFractions(_) | HarnessError::UnknownFormat(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other.into()),
        }
    }
}

fn usage(msg: impl fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Params(a) => params(a),
        Command::Sample(a) => sample(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Search(a) => search(a, false),
        Command::Sweep(a) => search(a, true),
        Command::Capture(a) => capture_cmd(a),
        Command::Distance(a) => distance(a),
        Command::AnalyzeHalves(a) => halves(a),
        Command::Report(a) => report(a),
    }
}

/// `c` anywhere selects decoder mode.
fn parse_ordering(text: &str) -> Result<OrderingSpec> {
    OrderingSpec::parse(text, text.contains('c')).map_err(|e| usage(format!("{text:?}: {e}")))
}

fn gen(a: GenArgs) -> Result<()> {
    let spec = match (a.sandwich, a.decoder_sandwich) {
        (Some(nk), _) => sandwich(nk[0], nk[1]),
        (_, Some(nk)) => sandwich_decoder(nk[0], nk[1]),
        (None, None) => unreachable!("clap requires one of the two"),
    }
    .map_err(usage)?;
    println!("{spec}");
    Ok(())
}

fn params(a: ParamsArgs) -> Result<()> {
    let spec = parse_ordering(&a.ordering)?;
    if a.d == 0 {
        return Err(usage("--d must be at least 1"));
    }
    for kind in [SublayerKind::SelfAttention, SublayerKind::Feedforward, SublayerKind::CrossAttention] {
        let n = spec.count(kind) as u64;
        if n > 0 {
            println!("{}: {} x {} = {}", kind.symbol(), n, sublayer_param_count(kind, a.d), n * sublayer_param_count(kind, a.d));
        }
    }
    println!("total: {}", spec.param_count(a.d));
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let mut out = String::new();
    for i in 0..a.count {
        let seed = derive_seed(a.seed, i as u64);
        let spec = match (&a.permutation, a.budget) {
            (Some(p), _) => sample_permutation(p[0], p[1], seed),
            (None, Some(b)) => sample_budgeted(ParamBudget(b), seed),
            (None, None) => unreachable!("clap requires one of the two"),
        }
        .map_err(usage)?;
        out += &format!("{spec}\n");
    }
    print!("{out}");
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let spec = parse_ordering(&a.ordering)?;
    let (bottom, top) = split_halves(&spec);
    let h = half_counts(&spec);
    println!("bottom: {:?} (s={}, f={})", kinds_to_string(bottom), h.bottom_s, h.bottom_f);
    println!("top: {:?} (s={}, f={})", kinds_to_string(top), h.top_s, h.top_f);
    Ok(())
}

fn corpus(a: &CorpusArgs) -> Result<Corpus> {
    let fractions = match &a.split {
        Some(v) => SplitFractions {
            train: v[0],
            valid: v[1],
            test: v[2],
        },
        None => SplitFractions::default(),
    };
    match &a.corpus {
        Some(path) => Ok(load_corpus(path, fractions)?),
        None if a.split.is_none() => Ok(bundled_corpus()),
        None => Ok(sublab::harness::Corpus::from_text(sublab::harness::corpus::BUNDLED_TEXT, fractions)?),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// A vocabulary of 0 in a config means "take it from the corpus".
fn fill_vocab(cfg: &mut TrainConfig, corpus: &Corpus) {
    if cfg.model.vocab == 0 {
        cfg.model.vocab = corpus.vocab();
    }
}

fn check_vocab(cfg: &TrainConfig, corpus: &Corpus) -> Result<()> {
    if cfg.model.vocab < corpus.vocab() {
        return Err(usage(format!(
            "invalid config:\n  model: vocab={} is smaller than the corpus vocabulary {}",
            cfg.model.vocab,
            corpus.vocab()
        )));
    }
    Ok(())
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).context("writing stdout")?;
        }
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = read_json(&a.config)?;
    let corpus = corpus(&a.corpus)?;
    fill_vocab(&mut cfg, &corpus);
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let mut problems = cfg.problems();
    if cfg.model.ordering.is_empty() {
        problems.push("model: ordering is required".into());
    }
    if !problems.is_empty() {
        return Err(HarnessError::Config(problems).into());
    }
    check_vocab(&cfg, &corpus)?;
    let (model, record) = train_model(&cfg, &corpus, 0, -1)?;
    let line = serde_json::to_string(&record).context("serializing record")? + "\n";
    write_output(a.output.as_deref(), &line)?;
    if let Some(path) = &a.checkpoint {
        checkpoint::save_file(&model, path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn search(a: SearchArgs, sweep: bool) -> Result<()> {
    let mut cfg: SearchConfig = read_json(&a.config)?;
    let corpus = corpus(&a.corpus)?;
    fill_vocab(&mut cfg.template, &corpus);
    if let Some(out) = a.output {
        cfg.output = Some(out);
    }
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    let mut problems = cfg.problems();
    let is_sweep = matches!(cfg.mode, SearchMode::SandwichSweep { .. });
    if sweep && !is_sweep {
        problems.push("mode: sweep needs kind \"sandwich_sweep\"".into());
    }
    if !sweep && is_sweep {
        problems.push("mode: use the sweep subcommand for kind \"sandwich_sweep\"".into());
    }
    if cfg.output.is_none() {
        problems.push("output: a results path is required (config or --output)".into());
    }
    if a.workers == 0 {
        problems.push("--workers must be at least 1".into());
    }
    if !problems.is_empty() {
        return Err(HarnessError::Config(problems).into());
    }
    check_vocab(&cfg.template, &corpus)?;
    let records = run_search(
        &cfg,
        &corpus,
        RunOptions {
            workers: a.workers,
            interrupt_after: None,
        },
    )?;
    eprintln!(
        "{} records in {}",
        records.len(),
        cfg.output.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    );
    Ok(())
}

fn capture_cmd(a: CaptureArgs) -> Result<()> {
    let model = checkpoint::load_file(&a.checkpoint).with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let corpus = corpus(&a.corpus)?;
    let length = a.length.unwrap_or(model.config.context);
    let end = a.offset.checked_add(length).filter(|&e| e <= corpus.valid.len()).ok_or_else(|| {
        usage(format!(
            "window {}..{} exceeds the validation split ({} characters)",
            a.offset,
            a.offset.saturating_add(length),
            corpus.valid.len()
        ))
    })?;
    let model_id = a.model_id.clone().unwrap_or_else(|| stem(&a.checkpoint));
    let dump = capture(&model, &corpus.valid[a.offset..end], &model_id).context("capturing attention")?;
    dump.save(&a.output).with_context(|| format!("writing {}", a.output.display()))?;
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

#[derive(Serialize)]
struct DistanceOutput {
    metric: &'static str,
    table: DistanceTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    groups: Option<GroupedMeans>,
}

fn distance(a: DistanceArgs) -> Result<()> {
    let mut paths: Vec<PathBuf> = a.dumps.clone();
    // A single dump is compared against itself.
    if paths.len() == 1 {
        paths.push(paths[0].clone());
    }
    if let Some(g) = &a.groups {
        if g.len() != paths.len() && !(a.dumps.len() == 1 && g.len() == 1) {
            return Err(usage(format!("{} group labels for {} dumps", g.len(), a.dumps.len())));
        }
    }
    let dumps = paths
        .iter()
        .map(|p| AttentionDump::load(p).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let metric = if a.normalized { GroundMetric::Normalized } else { GroundMetric::Unit };
    let mut out = String::new();
    if dumps.len() == 2 {
        let r = attention_distance(&dumps[0], &dumps[1], metric).context("distance")?;
        out += &format!("{} vs {}\n", dumps[0].model_id, dumps[1].model_id);
        for (i, m) in r.layer_means.iter().enumerate() {
            out += &format!("layer {i}: {m}\n");
        }
        out += &format!("grand mean: {}\n", r.grand_mean);
    }
    let table = distance_matrix(&dumps, metric).context("distance")?;
    let groups = match &a.groups {
        Some(g) if a.dumps.len() > 1 => Some(grouped_means(&table, g).context("grouping")?),
        _ => None,
    };
    if dumps.len() > 2 {
        out += &table.to_markdown();
    }
    if let Some(g) = &groups {
        out += "\n| group | group | mean | pairs |\n|---|---|---|---|\n";
        for (ga, gb, mean, pairs) in &g.blocks {
            out += &format!("| {ga} | {gb} | {mean:.6e} | {pairs} |\n");
        }
        let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6e}"));
        out += &format!("\nsame-group mean: {}\ncross-group mean: {}\n", show(g.same_group_mean), show(g.cross_group_mean));
    }
    print!("{out}");
    if let Some(path) = &a.output {
        let json = DistanceOutput {
            metric: if a.normalized { "normalized" } else { "unit" },
            table,
            groups,
        };
        let text = serde_json::to_string_pretty(&json).context("serializing distances")? + "\n";
        write_output(Some(path), &text)?;
    }
    Ok(())
}

fn halves(a: HalvesArgs) -> Result<()> {
    let rows = match &a.records {
        None => published_random_models(),
        Some(path) => {
            let (_, records) = read_results(path)?;
            records
                .iter()
                .map(|r| {
                    Ok(ScoredOrdering {
                        ordering: parse_ordering(&r.ordering)?,
                        metric: match a.metric {
                            Metric::Ppl => r.valid_ppl,
                            Metric::Bpc => r.valid_bpc,
                        },
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let threshold = match (a.threshold, &a.records) {
        (Some(t), _) => t,
        (None, None) => DEFAULT_THRESHOLD,
        (None, Some(_)) => return Err(usage("--threshold is required with --records")),
    };
    let report = analyze_halves(&rows, threshold)?;
    let mut out = report.to_markdown();
    if let Some(d) = report.difference() {
        out += &format!(
            "| better - worse | | {:+.3} | {:+.3} | {:+.3} | {:+.3} |\n",
            d.bottom_s, d.bottom_f, d.top_s, d.top_f
        );
    }
    print!("{out}");
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let format: ReportFormat = a.format.parse()?;
    let (_, records) = read_results(&a.records)?;
    let text = render(&records, format)?;
    write_output(a.output.as_deref(), &text)
}

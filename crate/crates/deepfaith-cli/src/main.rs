//! Command-line driver: train a model, generate explanation signals,
//! train the explainer, and benchmark, all from one flat-key JSON config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use deepfaith::bench::{
    curve_plot_data, emit_report, run_ablation, run_benchmark, write_ablation, BenchConfig,
    BenchMethod,
};
use deepfaith::data::{load_csv_with_split, synth_linear, Dataset, Instance};
use deepfaith::explain::SaliencyExplanation;
use deepfaith::metrics::{evaluate_all, EvalConfig, McSequence, MetricReport};
use deepfaith::model::{accuracy, train_model, Activation, MlpModel, TargetedModel, TrainHyperparams};
use deepfaith::net::{
    train_explainer, ExplainerCheckpoint, ExplainerTrainConfig, LcSubsets, PcSimilarity,
    EXPLAINER_CHECKPOINT_VERSION,
};
use deepfaith::perturb::RemovalStrategy;
use deepfaith::signals::{
    build_pairs, generate_signals, read_signals, write_signals, Method, PipelineConfig,
};
use deepfaith::Real;

const ARTIFACT_SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "deepfaith", about = "Explanation faithfulness toolkit", version)]
struct Cli {
    /// JSON config file with flat dotted keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` config key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts (default ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the `threads` config key.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Additional config overrides as key=json-value.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Skip config-hash verification of upstream artifacts.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the classifier on the configured task.
    TrainModel,
    /// Explain one sample with one method.
    Explain {
        #[arg(long)]
        method: String,
        /// Comma-separated feature values; defaults to a test-split sample.
        #[arg(long)]
        row: Option<String>,
        /// Test-split sample position when no row is given.
        #[arg(long, default_value_t = 0)]
        sample: usize,
    },
    /// Score a stored explanation on all ten metrics.
    Evaluate {
        #[arg(long)]
        explanation: PathBuf,
    },
    /// Generate, deduplicate, and filter supervision signals.
    Signals,
    /// Train the explainer network on stored signals.
    TrainExplainer,
    /// Run the full method comparison (and optionally the loss ablation).
    Benchmark,
}

enum CliError {
    /// Config or input problems; every violation listed. Exit code 1.
    Validation(Vec<String>),
    /// Everything else. Exit code 2.
    Runtime(String),
}

impl From<deepfaith::Error> for CliError {
    fn from(e: deepfaith::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(violations)) => {
            eprintln!("config validation failed:");
            for v in violations {
                eprintln!("  - {v}");
            }
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

// ---------------------------------------------------------------------------
// config handling

type Config = BTreeMap<String, Value>;

fn default_config() -> Config {
    let pairs: Vec<(&str, Value)> = vec![
        ("task.kind", json!("synth")),
        ("task.n", json!(8)),
        ("task.samples", json!(64)),
        ("task.csv_path", json!("")),
        ("task.target_column", json!("target")),
        ("model.hidden", json!([8])),
        ("model.activation", json!("tanh")),
        ("model.epochs", json!(200)),
        ("model.batch_size", json!(32)),
        ("model.lr", json!(0.5)),
        ("model.momentum", json!(0.9)),
        ("model.target_class", json!(1)),
        ("removal.strategy", json!("zero")),
        ("metrics.fc_budget", json!(256)),
        ("metrics.inf_samples", json!(64)),
        ("metrics.fe_subsets", json!(32)),
        ("metrics.mc_sequence", json!("singletons")),
        (
            "pipeline.methods",
            json!([
                "occlusion",
                "feature_ablation",
                "saliency",
                "integrated_gradients",
                "lime",
                "kernel_shap"
            ]),
        ),
        ("pipeline.dedup_threshold", json!(0.95)),
        ("pipeline.p", json!(0.5)),
        ("pipeline.per_sample_quantiles", json!(true)),
        ("pipeline.samples", json!(24)),
        ("explainer.hidden", json!(8)),
        ("explainer.epochs", json!(120)),
        ("explainer.batch_size", json!(8)),
        ("explainer.lr", json!(0.15)),
        ("explainer.momentum", json!(0.9)),
        ("explainer.alpha_mid", Value::Null),
        ("explainer.alpha_width", Value::Null),
        ("explainer.lc_subsets", json!("exact")),
        ("explainer.lc_m", json!(64)),
        ("explainer.pc_similarity", json!("pearson")),
        ("explainer.adaptive", json!(false)),
        ("benchmark.samples", json!(12)),
        ("benchmark.latency", json!(false)),
        ("benchmark.latency_runs", json!(50)),
        ("benchmark.ablation", json!(false)),
        ("seed", json!(0u64)),
        ("threads", json!(1)),
    ];
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = default_config();
    let mut violations = Vec::new();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(vec![format!("config {}: {e}", path.display())]))?;
        let file: BTreeMap<String, Value> = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(vec![format!("config {}: {e}", path.display())]))?;
        for (k, v) in file {
            if cfg.contains_key(&k) {
                cfg.insert(k, v);
            } else {
                violations.push(format!("unknown config key '{k}'"));
            }
        }
    }
    for s in &cli.sets {
        match s.split_once('=') {
            Some((k, v)) if cfg.contains_key(k) => {
                let parsed = serde_json::from_str(v).unwrap_or_else(|_| json!(v));
                cfg.insert(k.to_string(), parsed);
            }
            Some((k, _)) => violations.push(format!("unknown config key '{k}'")),
            None => violations.push(format!("--set needs key=value, got '{s}'")),
        }
    }
    if let Some(seed) = cli.seed {
        cfg.insert("seed".into(), json!(seed));
    }
    if let Some(threads) = cli.threads {
        cfg.insert("threads".into(), json!(threads));
    }
    violations.extend(validate_config(&cfg));
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Validation(violations))
    }
}

fn get_u64(cfg: &Config, key: &str) -> u64 {
    cfg.get(key).and_then(Value::as_u64).unwrap_or(0)
}

fn get_usize(cfg: &Config, key: &str) -> usize {
    get_u64(cfg, key) as usize
}

fn get_f64(cfg: &Config, key: &str) -> Real {
    cfg.get(key).and_then(Value::as_f64).unwrap_or(Real::NAN)
}

fn get_str<'a>(cfg: &'a Config, key: &str) -> &'a str {
    cfg.get(key).and_then(Value::as_str).unwrap_or("")
}

fn get_bool(cfg: &Config, key: &str) -> bool {
    cfg.get(key).and_then(Value::as_bool).unwrap_or(false)
}

/// Collects every violation instead of stopping at the first.
fn validate_config(cfg: &Config) -> Vec<String> {
    let mut v = Vec::new();
    let kind = get_str(cfg, "task.kind");
    if !matches!(kind, "synth" | "csv") {
        v.push(format!("task.kind must be 'synth' or 'csv', got '{kind}'"));
    }
    if kind == "csv" {
        let path = get_str(cfg, "task.csv_path");
        if path.is_empty() || !Path::new(path).exists() {
            v.push(format!("task.csv_path does not exist: '{path}'"));
        }
    }
    let n = get_usize(cfg, "task.n");
    if kind == "synth" && !(2..=16).contains(&n) {
        v.push(format!("task.n must be in 2..=16, got {n}"));
    }
    if get_usize(cfg, "task.samples") < 4 {
        v.push("task.samples must be at least 4".into());
    }
    for key in [
        "model.epochs",
        "model.batch_size",
        "explainer.hidden",
        "explainer.epochs",
        "explainer.batch_size",
        "pipeline.samples",
        "benchmark.samples",
        "metrics.fc_budget",
        "metrics.inf_samples",
        "metrics.fe_subsets",
    ] {
        if get_usize(cfg, key) == 0 {
            v.push(format!("{key} must be positive"));
        }
    }
    for key in ["model.lr", "explainer.lr"] {
        if !(get_f64(cfg, key) > 0.0) {
            v.push(format!("{key} must be positive"));
        }
    }
    let p = get_f64(cfg, "pipeline.p");
    if !(0.0 < p && p < 1.0) {
        v.push(format!("pipeline.p must be in (0, 1), got {p}"));
    }
    let t = get_f64(cfg, "pipeline.dedup_threshold");
    if !(0.0 < t && t <= 1.0) {
        v.push(format!("pipeline.dedup_threshold must be in (0, 1], got {t}"));
    }
    match cfg.get("pipeline.methods").and_then(Value::as_array) {
        Some(methods) if methods.len() >= 2 => {
            for m in methods {
                let name = m.as_str().unwrap_or("");
                if Method::from_name(name).is_err() {
                    v.push(format!("pipeline.methods: unknown method '{name}'"));
                }
            }
        }
        _ => v.push("pipeline.methods must list at least 2 methods".into()),
    }
    if !matches!(get_str(cfg, "removal.strategy"), "zero" | "mean") {
        v.push("removal.strategy must be 'zero' or 'mean'".into());
    }
    if !matches!(get_str(cfg, "model.activation"), "tanh" | "relu") {
        v.push("model.activation must be 'tanh' or 'relu'".into());
    }
    if !matches!(get_str(cfg, "metrics.mc_sequence"), "singletons" | "prefixes") {
        v.push("metrics.mc_sequence must be 'singletons' or 'prefixes'".into());
    }
    if !matches!(get_str(cfg, "explainer.lc_subsets"), "exact" | "sampled") {
        v.push("explainer.lc_subsets must be 'exact' or 'sampled'".into());
    }
    if !matches!(get_str(cfg, "explainer.pc_similarity"), "pearson" | "cosine") {
        v.push("explainer.pc_similarity must be 'pearson' or 'cosine'".into());
    }
    if get_str(cfg, "explainer.lc_subsets") == "sampled" && get_usize(cfg, "explainer.lc_m") < 2 {
        v.push("explainer.lc_m must be at least 2".into());
    }
    v
}

fn config_hash(cfg: &Config) -> String {
    // canonical: BTreeMap serializes with sorted keys
    let text = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(text.as_bytes());
    format!("{digest:x}")
}

// ---------------------------------------------------------------------------
// artifacts

fn write_pretty(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn wrap(hash: &str, payload: Value) -> Value {
    json!({
        "schema_version": ARTIFACT_SCHEMA_VERSION,
        "config_hash": hash,
        "payload": payload,
    })
}

/// Loads an artifact and verifies its config hash unless `force`.
fn read_artifact(path: &Path, hash: &str, force: bool) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Runtime(format!(
            "missing artifact {}: {e}; run the upstream command first",
            path.display()
        ))
    })?;
    let value: Value = serde_json::from_str(&text)?;
    let stored = value["config_hash"].as_str().unwrap_or("");
    if !force && stored != hash {
        return Err(CliError::Runtime(format!(
            "config hash mismatch for {}: artifact was produced by a different config \
             (stored {stored}, current {hash}); rerun the upstream command or pass --force",
            path.display()
        )));
    }
    Ok(value["payload"].clone())
}

fn write_effective_config(out: &Path, cfg: &Config, hash: &str) -> Result<(), CliError> {
    let snapshot = json!({
        "config_hash": hash,
        "config": cfg,
    });
    write_pretty(&out.join("effective-config.json"), &snapshot)
}

// ---------------------------------------------------------------------------
// shared builders

fn out_dir(cli: &Cli) -> Result<PathBuf, CliError> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn build_dataset(cfg: &Config) -> Result<Dataset, CliError> {
    let seed = get_u64(cfg, "seed");
    match get_str(cfg, "task.kind") {
        "synth" => {
            let (ds, _) = synth_linear(
                get_usize(cfg, "task.n"),
                get_usize(cfg, "task.samples"),
                seed,
            )?;
            Ok(ds)
        }
        "csv" => Ok(load_csv_with_split(
            get_str(cfg, "task.csv_path"),
            get_str(cfg, "task.target_column"),
            true,
            seed,
            0.8,
        )?),
        other => Err(CliError::Runtime(format!("unsupported task.kind '{other}'"))),
    }
}

fn build_eval_config(cfg: &Config) -> EvalConfig {
    EvalConfig {
        fc_budget: get_usize(cfg, "metrics.fc_budget"),
        inf_samples: get_usize(cfg, "metrics.inf_samples"),
        fe_subsets: get_usize(cfg, "metrics.fe_subsets"),
        mc_sequence: match get_str(cfg, "metrics.mc_sequence") {
            "prefixes" => McSequence::Prefixes,
            _ => McSequence::Singletons,
        },
        seed: get_u64(cfg, "seed"),
        ..Default::default()
    }
}

fn build_strategy(cfg: &Config, ds: &Dataset) -> Result<RemovalStrategy, CliError> {
    Ok(match get_str(cfg, "removal.strategy") {
        "mean" => RemovalStrategy::MeanReplace {
            means: ds.mean_instance()?.values().to_vec(),
        },
        _ => RemovalStrategy::zero_baseline(ds.n(), ds.d()),
    })
}

fn load_model(out: &Path, hash: &str, force: bool) -> Result<MlpModel, CliError> {
    let payload = read_artifact(&out.join("model.json"), hash, force)?;
    Ok(serde_json::from_value(payload["model"].clone())?)
}

fn methods_from_config(cfg: &Config) -> Vec<Method> {
    cfg.get("pipeline.methods")
        .and_then(Value::as_array)
        .map(|list| {
            list.iter()
                .filter_map(|m| Method::from_name(m.as_str().unwrap_or("")).ok())
                .collect()
        })
        .unwrap_or_default()
}

fn explainer_train_config(cfg: &Config) -> ExplainerTrainConfig {
    let opt_f64 = |key: &str| cfg.get(key).and_then(Value::as_f64);
    ExplainerTrainConfig {
        hidden: get_usize(cfg, "explainer.hidden"),
        epochs: get_usize(cfg, "explainer.epochs"),
        batch_size: get_usize(cfg, "explainer.batch_size"),
        lr: get_f64(cfg, "explainer.lr"),
        momentum: get_f64(cfg, "explainer.momentum"),
        alpha_mid: opt_f64("explainer.alpha_mid"),
        alpha_width: opt_f64("explainer.alpha_width"),
        lc_subsets: match get_str(cfg, "explainer.lc_subsets") {
            "sampled" => LcSubsets::Sampled {
                m: get_usize(cfg, "explainer.lc_m"),
            },
            _ => LcSubsets::Exact,
        },
        pc_similarity: match get_str(cfg, "explainer.pc_similarity") {
            "cosine" => PcSimilarity::Cosine,
            _ => PcSimilarity::Pearson,
        },
        alpha_fixed: None,
        adaptive: get_bool(cfg, "explainer.adaptive"),
        seed: get_u64(cfg, "seed"),
    }
}

/// Zeroes per-metric timing so reruns with identical configs produce
/// byte-identical artifacts.
fn scrub_timing(report: &mut MetricReport) {
    for s in report.scores.iter_mut() {
        s.wall_time_ms = 0.0;
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let hash = config_hash(&cfg);
    let out = out_dir(cli)?;
    write_effective_config(&out, &cfg, &hash)?;
    match &cli.cmd {
        Cmd::TrainModel => cmd_train_model(&cfg, &hash, &out),
        Cmd::Explain {
            method,
            row,
            sample,
        } => cmd_explain(&cfg, &hash, &out, cli.force, method, row.as_deref(), *sample),
        Cmd::Evaluate { explanation } => cmd_evaluate(&cfg, &hash, &out, cli.force, explanation),
        Cmd::Signals => cmd_signals(&cfg, &hash, &out, cli.force),
        Cmd::TrainExplainer => cmd_train_explainer(&cfg, &hash, &out, cli.force),
        Cmd::Benchmark => cmd_benchmark(&cfg, &hash, &out, cli.force),
    }
}

// ---------------------------------------------------------------------------
// commands

fn cmd_train_model(cfg: &Config, hash: &str, out: &Path) -> Result<(), CliError> {
    let ds = build_dataset(cfg)?;
    let hidden: Vec<usize> = cfg
        .get("model.hidden")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_u64).map(|v| v as usize).collect())
        .unwrap_or_default();
    let activation = match get_str(cfg, "model.activation") {
        "relu" => Activation::Relu,
        _ => Activation::Tanh,
    };
    let hyper = TrainHyperparams {
        epochs: get_usize(cfg, "model.epochs"),
        batch_size: get_usize(cfg, "model.batch_size"),
        learning_rate: get_f64(cfg, "model.lr"),
        momentum: get_f64(cfg, "model.momentum"),
    };
    let seed = get_u64(cfg, "seed");
    let (model, curve) = train_model(&ds, hidden, activation, &hyper, seed)?;
    let train_acc = accuracy(&model, ds.train_instances())?;
    let test_acc = accuracy(&model, ds.test_instances())?;
    let payload = json!({
        "model": serde_json::to_value(&model)?,
        "initial_loss": curve.initial_loss,
        "final_loss": curve.epoch_losses.last(),
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
    });
    write_pretty(&out.join("model.json"), &wrap(hash, payload))?;
    println!(
        "trained model: train accuracy {train_acc:.3}, test accuracy {test_acc:.3} -> {}",
        out.join("model.json").display()
    );
    Ok(())
}

fn parse_row(row: &str, ds: &Dataset) -> Result<Instance, CliError> {
    let values: Result<Vec<Real>, _> = row.split(',').map(|v| v.trim().parse::<Real>()).collect();
    let values =
        values.map_err(|e| CliError::Validation(vec![format!("--row parse error: {e}")]))?;
    if values.len() != ds.n() * ds.d() {
        return Err(CliError::Validation(vec![format!(
            "--row needs {} values for this task, got {}",
            ds.n() * ds.d(),
            values.len()
        )]));
    }
    Ok(Instance::new(ds.n(), ds.d(), values)?)
}

fn test_sample(ds: &Dataset, position: usize) -> Result<usize, CliError> {
    ds.test_idx.get(position).copied().ok_or_else(|| {
        CliError::Validation(vec![format!(
            "--sample {position} out of range: test split has {} samples",
            ds.test_idx.len()
        )])
    })
}

fn cmd_explain(
    cfg: &Config,
    hash: &str,
    out: &Path,
    force: bool,
    method_name: &str,
    row: Option<&str>,
    sample: usize,
) -> Result<(), CliError> {
    let ds = build_dataset(cfg)?;
    let method = Method::from_name(method_name)
        .map_err(|e| CliError::Validation(vec![e.to_string()]))?;
    let model = load_model(out, hash, force)?;
    let tm = TargetedModel::new(&model, get_usize(cfg, "model.target_class"))?;
    let strat = build_strategy(cfg, &ds)?;
    let eval_cfg = build_eval_config(cfg);
    let (x, sample_index) = match row {
        Some(r) => (parse_row(r, &ds)?, None),
        None => {
            let si = test_sample(&ds, sample)?;
            (ds.instances[si].clone(), Some(si))
        }
    };
    let expl = method.explain(&x, &tm, &strat, &eval_cfg, get_u64(cfg, "seed"))?;
    let payload = json!({
        "sample_index": sample_index,
        "instance": x,
        "explanation": expl,
    });
    let path = out.join("explanation.json");
    write_pretty(&path, &wrap(hash, payload))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_evaluate(
    cfg: &Config,
    hash: &str,
    out: &Path,
    force: bool,
    explanation: &Path,
) -> Result<(), CliError> {
    let ds = build_dataset(cfg)?;
    let model = load_model(out, hash, force)?;
    let tm = TargetedModel::new(&model, get_usize(cfg, "model.target_class"))?;
    let strat = build_strategy(cfg, &ds)?;
    let eval_cfg = build_eval_config(cfg);
    let payload = read_artifact(explanation, hash, force)?;
    let x: Instance = serde_json::from_value(payload["instance"].clone())?;
    let expl: SaliencyExplanation = serde_json::from_value(payload["explanation"].clone())?;
    let mut report = evaluate_all(&expl.scores, &x, &tm, &strat, &eval_cfg)?;
    scrub_timing(&mut report);
    let path = out.join("report.json");
    write_pretty(&path, &wrap(hash, serde_json::to_value(&report)?))?;
    for s in &report.scores {
        println!("{:>5}: {:.4}", format!("{:?}", s.metric).to_uppercase(), s.score);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_signals(cfg: &Config, hash: &str, out: &Path, force: bool) -> Result<(), CliError> {
    let ds = build_dataset(cfg)?;
    let model = load_model(out, hash, force)?;
    let tm = TargetedModel::new(&model, get_usize(cfg, "model.target_class"))?;
    let strat = build_strategy(cfg, &ds)?;
    let eval_cfg = build_eval_config(cfg);
    let methods = methods_from_config(cfg);
    let pipeline = PipelineConfig {
        dedup_threshold: get_f64(cfg, "pipeline.dedup_threshold"),
        p: get_f64(cfg, "pipeline.p"),
        per_sample_quantiles: get_bool(cfg, "pipeline.per_sample_quantiles"),
        seed: get_u64(cfg, "seed"),
    };
    let count = get_usize(cfg, "pipeline.samples").min(ds.train_idx.len());
    let indices: Vec<usize> = ds.train_idx[..count].to_vec();
    let signals = generate_signals(&ds, &indices, &tm, &methods, &strat, &eval_cfg, &pipeline)?;
    for w in &signals.warnings {
        eprintln!("warning: {w}");
    }
    let (pairs, stats) = build_pairs(&ds, &signals, &pipeline)?;
    let jsonl = out.join("signals.jsonl");
    write_signals(&jsonl, &pairs)?;
    let meta = json!({
        "pairs": pairs.len(),
        "stats": stats,
        "warnings": signals.warnings,
        "path": "signals.jsonl",
    });
    write_pretty(&out.join("signals.meta.json"), &wrap(hash, meta))?;
    println!(
        "wrote {} signal pairs from {} samples -> {}",
        pairs.len(),
        indices.len(),
        jsonl.display()
    );
    Ok(())
}

fn cmd_train_explainer(cfg: &Config, hash: &str, out: &Path, force: bool) -> Result<(), CliError> {
    // hash checks ride on the meta file; the jsonl sits beside it
    read_artifact(&out.join("signals.meta.json"), hash, force)?;
    let pairs = read_signals(out.join("signals.jsonl"))?;
    let ds = build_dataset(cfg)?;
    let model = load_model(out, hash, force)?;
    let tm = TargetedModel::new(&model, get_usize(cfg, "model.target_class"))?;
    let strat = build_strategy(cfg, &ds)?;
    let eval_cfg = build_eval_config(cfg);
    let train_cfg = explainer_train_config(cfg);
    let (net, log) = train_explainer(&pairs, &tm, &strat, &eval_cfg.effect, &train_cfg)?;
    if let Some(e) = log.diverged_at {
        eprintln!("warning: training diverged at epoch {e}; kept last finite checkpoint");
    }
    let ck = ExplainerCheckpoint {
        version: EXPLAINER_CHECKPOINT_VERSION,
        net,
        config: train_cfg,
        log: log.clone(),
    };
    let path = out.join("explainer.json");
    write_pretty(&path, &wrap(hash, serde_json::to_value(&ck)?))?;
    log.write_csv(out.join("training_log.csv"))?;
    if let (Some(first), Some(last)) = (log.rows.first(), log.rows.last()) {
        println!(
            "trained explainer over {} epochs: loss_obj {:.4} -> {:.4}",
            log.rows.len(),
            first.loss_obj,
            last.loss_obj
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_benchmark(cfg: &Config, hash: &str, out: &Path, force: bool) -> Result<(), CliError> {
    let ds = build_dataset(cfg)?;
    let model = load_model(out, hash, force)?;
    let tm = TargetedModel::new(&model, get_usize(cfg, "model.target_class"))?;
    let strat = build_strategy(cfg, &ds)?;
    let mut methods: Vec<BenchMethod> = methods_from_config(cfg)
        .into_iter()
        .map(BenchMethod::Baseline)
        .collect();
    let explainer_path = out.join("explainer.json");
    if explainer_path.exists() {
        let payload = read_artifact(&explainer_path, hash, force)?;
        let ck: ExplainerCheckpoint = serde_json::from_value(payload)?;
        methods.push(BenchMethod::Trained {
            name: "explainer_net".into(),
            net: ck.net,
        });
    } else {
        eprintln!("note: no explainer checkpoint found; benchmarking baselines only");
    }
    let bench_cfg = BenchConfig {
        eval: build_eval_config(cfg),
        measure_latency: get_bool(cfg, "benchmark.latency"),
        latency_runs: get_usize(cfg, "benchmark.latency_runs"),
        latency_warmups: 5,
        seed: get_u64(cfg, "seed"),
    };
    let count = get_usize(cfg, "benchmark.samples").min(ds.test_idx.len());
    let indices: Vec<usize> = ds.test_idx[..count].to_vec();
    let mut result = run_benchmark(&ds, &indices, &tm, &methods, &strat, &bench_cfg)?;
    result.config = json!({"config_hash": hash});
    let curves = curve_plot_data(&ds, &indices, &tm, &methods, &strat, &bench_cfg)?;
    emit_report(&result, Some(&curves), out)?;
    for (name, rank) in result.method_names.iter().zip(&result.avg_ranks) {
        println!("{name:<22} avg rank {rank:.2}");
    }
    for (name, reason) in &result.excluded {
        eprintln!("excluded {name}: {reason}");
    }

    if get_bool(cfg, "benchmark.ablation") {
        read_artifact(&out.join("signals.meta.json"), hash, force)?;
        let pairs = read_signals(out.join("signals.jsonl"))?;
        let train_cfg = explainer_train_config(cfg);
        let eval_cfg = build_eval_config(cfg);
        let (ablation, _) =
            run_ablation(&pairs, &ds, &indices, &tm, &strat, &train_cfg, &eval_cfg)?;
        write_ablation(&ablation, out)?;
        println!("wrote {}", out.join("ablation.json").display());
    }
    println!("wrote {}", out.join("benchmark.json").display());
    Ok(())
}

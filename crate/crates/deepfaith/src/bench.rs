//! Benchmark harness: per-method ten-metric score matrices over a test
//! split, direction-aware average ranks, loss-ablation comparisons, and
//! per-sample explanation latency.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::math;
use crate::metrics::{
    curve_steps, delta, delta_minus, evaluate_all, CurveMode, Direction, EvalConfig, MetricId,
};
use crate::model::TargetedModel;
use crate::net::{train_explainer, ExplainerNet, ExplainerTrainConfig, TrainLog};
use crate::perturb::{remove, IndexSet, RemovalStrategy};
use crate::signals::{Method, SignalPair};
use crate::Real;

pub const BENCHMARK_SCHEMA_VERSION: u32 = 1;

/// A benchmark entrant: either a baseline method or a trained explainer.
pub enum BenchMethod {
    Baseline(Method),
    Trained { name: String, net: ExplainerNet },
}

impl BenchMethod {
    pub fn name(&self) -> String {
        match self {
            BenchMethod::Baseline(m) => m.name().to_string(),
            BenchMethod::Trained { name, .. } => name.clone(),
        }
    }

    pub fn explain_scores(
        &self,
        x: &Instance,
        tm: &TargetedModel,
        strat: &RemovalStrategy,
        eval_cfg: &EvalConfig,
        seed: u64,
    ) -> Result<Vec<Real>> {
        match self {
            BenchMethod::Baseline(m) => Ok(m.explain(x, tm, strat, eval_cfg, seed)?.scores),
            BenchMethod::Trained { net, .. } => net.scores(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub eval: EvalConfig,
    pub measure_latency: bool,
    /// Timed single-sample explanations per method (after warmups).
    pub latency_runs: usize,
    pub latency_warmups: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            eval: EvalConfig::default(),
            measure_latency: false,
            latency_runs: 50,
            latency_warmups: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub schema_version: u32,
    pub method_names: Vec<String>,
    pub metric_names: Vec<String>,
    pub directions: Vec<Direction>,
    /// Row per method, column per metric: mean score over test samples.
    pub scores: Vec<Vec<Real>>,
    /// Direction-adjusted mean-tie ranks averaged over the ten metrics.
    pub avg_ranks: Vec<Real>,
    /// Median single-sample explanation latency in ms; None when latency
    /// measurement is off.
    pub latency_ms: Vec<Option<Real>>,
    /// Methods dropped mid-run, with the failure reason.
    pub excluded: Vec<(String, String)>,
    pub num_samples: usize,
    pub config: serde_json::Value,
}

/// Direction-adjusted fractional ranks (1 = best) for one metric column.
pub fn rank_column(scores: &[Real], direction: Direction) -> Vec<Real> {
    let keyed: Vec<Real> = scores
        .iter()
        .map(|s| match direction {
            Direction::HigherBetter => -s,
            Direction::LowerBetter => *s,
        })
        .collect();
    math::fractional_ranks(&keyed)
}

/// Recomputes per-method average ranks from a score matrix.
pub fn average_ranks(scores: &[Vec<Real>], directions: &[Direction]) -> Vec<Real> {
    let num_methods = scores.len();
    let mut avg = vec![0.0; num_methods];
    for (j, dir) in directions.iter().enumerate() {
        let column: Vec<Real> = scores.iter().map(|row| row[j]).collect();
        let ranks = rank_column(&column, *dir);
        for (a, r) in avg.iter_mut().zip(&ranks) {
            *a += r;
        }
    }
    for a in avg.iter_mut() {
        *a /= directions.len() as Real;
    }
    avg
}

pub fn run_benchmark(
    dataset: &Dataset,
    sample_indices: &[usize],
    tm: &TargetedModel,
    methods: &[BenchMethod],
    strat: &RemovalStrategy,
    cfg: &BenchConfig,
) -> Result<BenchmarkResult> {
    if sample_indices.is_empty() || methods.is_empty() {
        return Err(Error::Empty);
    }
    let mut method_names = Vec::new();
    let mut scores: Vec<Vec<Real>> = Vec::new();
    let mut latency_ms = Vec::new();
    let mut excluded = Vec::new();

    for method in methods {
        let run = || -> Result<[Real; 10]> {
            let mut sums = [0.0; 10];
            for &si in sample_indices {
                let x = &dataset.instances[si];
                let seed = cfg.seed.wrapping_add((si as u64) << 8);
                let s = method.explain_scores(x, tm, strat, &cfg.eval, seed)?;
                let mut sample_cfg = cfg.eval.clone();
                sample_cfg.seed = cfg.eval.seed.wrapping_add(si as u64);
                let report = evaluate_all(&s, x, tm, strat, &sample_cfg)?;
                for (acc, v) in sums.iter_mut().zip(report.score_vector()) {
                    *acc += v;
                }
            }
            for acc in sums.iter_mut() {
                *acc /= sample_indices.len() as Real;
            }
            Ok(sums)
        };
        match run() {
            Ok(row) => {
                method_names.push(method.name());
                scores.push(row.to_vec());
                latency_ms.push(if cfg.measure_latency {
                    Some(measure_latency(method, dataset, sample_indices, tm, strat, cfg)?)
                } else {
                    None
                });
            }
            Err(e) => excluded.push((method.name(), e.to_string())),
        }
    }
    if scores.is_empty() {
        return Err(Error::Invalid("every benchmark method failed".into()));
    }
    let directions: Vec<Direction> = MetricId::ALL.iter().map(|m| m.direction()).collect();
    let avg_ranks = average_ranks(&scores, &directions);
    Ok(BenchmarkResult {
        schema_version: BENCHMARK_SCHEMA_VERSION,
        method_names,
        metric_names: MetricId::ALL.iter().map(|m| m.name().to_string()).collect(),
        directions,
        scores,
        avg_ranks,
        latency_ms,
        excluded,
        num_samples: sample_indices.len(),
        config: serde_json::to_value(cfg)?,
    })
}

/// Median wall time of single-sample explanations, warmups excluded.
fn measure_latency(
    method: &BenchMethod,
    dataset: &Dataset,
    sample_indices: &[usize],
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    cfg: &BenchConfig,
) -> Result<Real> {
    let mut times = Vec::with_capacity(cfg.latency_runs);
    for r in 0..cfg.latency_warmups + cfg.latency_runs {
        let si = sample_indices[r % sample_indices.len()];
        let x = &dataset.instances[si];
        let start = Instant::now();
        method.explain_scores(x, tm, strat, &cfg.eval, cfg.seed)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        if r >= cfg.latency_warmups {
            times.push(elapsed);
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = times.len();
    Ok(if m % 2 == 1 {
        times[m / 2]
    } else {
        0.5 * (times[m / 2 - 1] + times[m / 2])
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationSetting {
    Obj,
    PcOnly,
    LcOnly,
}

impl AblationSetting {
    pub const ALL: [AblationSetting; 3] = [
        AblationSetting::Obj,
        AblationSetting::PcOnly,
        AblationSetting::LcOnly,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AblationSetting::Obj => "obj",
            AblationSetting::PcOnly => "pc_only",
            AblationSetting::LcOnly => "lc_only",
        }
    }

    fn alpha_fixed(&self) -> Option<Real> {
        match self {
            AblationSetting::Obj => None,
            AblationSetting::PcOnly => Some(1.0),
            AblationSetting::LcOnly => Some(0.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: AblationSetting,
    pub scores: [Real; 10],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationResult {
    pub schema_version: u32,
    pub rows: Vec<AblationRow>,
    pub num_samples: usize,
}

/// Trains one explainer per loss setting with identical budgets and seeds,
/// then scores each on the ten metrics over `sample_indices`. Also returns
/// the trained nets and logs in setting order.
pub fn run_ablation(
    pairs: &[SignalPair],
    dataset: &Dataset,
    sample_indices: &[usize],
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    train_cfg: &ExplainerTrainConfig,
    eval_cfg: &EvalConfig,
) -> Result<(AblationResult, Vec<(ExplainerNet, TrainLog)>)> {
    let mut rows = Vec::new();
    let mut trained = Vec::new();
    for setting in AblationSetting::ALL {
        let mut cfg = train_cfg.clone();
        cfg.alpha_fixed = setting.alpha_fixed();
        let (net, log) = train_explainer(pairs, tm, strat, &eval_cfg.effect, &cfg)?;
        let mut sums = [0.0; 10];
        for &si in sample_indices {
            let x = &dataset.instances[si];
            let s = net.scores(x)?;
            let mut sample_cfg = eval_cfg.clone();
            sample_cfg.seed = eval_cfg.seed.wrapping_add(si as u64);
            let report = evaluate_all(&s, x, tm, strat, &sample_cfg)?;
            for (acc, v) in sums.iter_mut().zip(report.score_vector()) {
                *acc += v;
            }
        }
        for acc in sums.iter_mut() {
            *acc /= sample_indices.len() as Real;
        }
        rows.push(AblationRow {
            setting,
            scores: sums,
        });
        trained.push((net, log));
    }
    Ok((
        AblationResult {
            schema_version: BENCHMARK_SCHEMA_VERSION,
            rows,
            num_samples: sample_indices.len(),
        },
        trained,
    ))
}

/// Counts metrics (direction-adjusted, with tolerance) on which the first
/// ablation row is at least as good as both others.
pub fn obj_best_or_tied(result: &AblationResult, tol: Real) -> usize {
    let obj = &result.rows[0].scores;
    let mut wins = 0;
    for (j, id) in MetricId::ALL.iter().enumerate() {
        let better = |a: Real, b: Real| match id.direction() {
            Direction::HigherBetter => a >= b - tol,
            Direction::LowerBetter => a <= b + tol,
        };
        if result.rows[1..].iter().all(|r| better(obj[j], r.scores[j])) {
            wins += 1;
        }
    }
    wins
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Per-step curve data (DEL, INS, and the cumulative-removal effect and
/// preservation sequences behind the perturbation metrics), one row per
/// method, sample, and removal step.
pub fn curve_plot_data(
    dataset: &Dataset,
    sample_indices: &[usize],
    tm: &TargetedModel,
    methods: &[BenchMethod],
    strat: &RemovalStrategy,
    cfg: &BenchConfig,
) -> Result<String> {
    let mut out = String::from("method,metric,sample_index,step,value\n");
    for method in methods {
        let name = method.name();
        for &si in sample_indices {
            let x = &dataset.instances[si];
            let seed = cfg.seed.wrapping_add((si as u64) << 8);
            let s = method.explain_scores(x, tm, strat, &cfg.eval, seed)?;
            let perm = math::argsort_desc(&s)?;
            for (metric, mode) in [("DEL", CurveMode::Del), ("INS", CurveMode::Ins)] {
                let steps = curve_steps(&perm, x, tm, strat, &cfg.eval.effect, mode)?;
                for (k, v) in steps.iter().enumerate() {
                    out.push_str(&format!("{name},{metric},{si},{},{v}\n", k + 1));
                }
            }
            // cumulative-removal effect (RP summand) and preservation
            // (IROF summand) at each step
            let y0 = tm.f_scalar(x)?;
            for j in 1..=x.n() {
                let set = IndexSet::new(perm.prefix(j).to_vec(), x.n())?;
                let y = tm.f_scalar(&remove(x, &set, strat)?)?;
                let d = delta(y0, y, &cfg.eval.effect)?;
                let p = 1.0 - delta_minus(y0, y, &cfg.eval.effect)?;
                out.push_str(&format!("{name},RP,{si},{j},{d}\n"));
                out.push_str(&format!("{name},IROF,{si},{j},{p}\n"));
            }
        }
    }
    Ok(out)
}

/// Writes benchmark.json / benchmark.csv / benchmark.md (and curves.csv
/// when curve data is supplied) into `out_dir`.
pub fn emit_report(
    result: &BenchmarkResult,
    curves: Option<&str>,
    out_dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = out_dir.as_ref();
    write_text(
        &dir.join("benchmark.json"),
        &serde_json::to_string_pretty(result)?,
    )?;

    let mut csv = String::from("method");
    for m in &result.metric_names {
        csv.push(',');
        csv.push_str(m);
    }
    csv.push_str(",avg_rank,latency_ms\n");
    for (i, name) in result.method_names.iter().enumerate() {
        csv.push_str(name);
        for v in &result.scores[i] {
            csv.push_str(&format!(",{v}"));
        }
        csv.push_str(&format!(",{}", result.avg_ranks[i]));
        match result.latency_ms[i] {
            Some(l) => csv.push_str(&format!(",{l}\n")),
            None => csv.push_str(",\n"),
        }
    }
    write_text(&dir.join("benchmark.csv"), &csv)?;

    let mut md = String::from("| method |");
    for m in &result.metric_names {
        md.push_str(&format!(" {m} |"));
    }
    md.push_str(" avg rank |\n|---|");
    md.push_str(&"---|".repeat(result.metric_names.len() + 1));
    md.push('\n');
    for (i, name) in result.method_names.iter().enumerate() {
        md.push_str(&format!("| {name} |"));
        for v in &result.scores[i] {
            md.push_str(&format!(" {v:.4} |"));
        }
        md.push_str(&format!(" {:.2} |\n", result.avg_ranks[i]));
    }
    if !result.excluded.is_empty() {
        md.push('\n');
        for (name, reason) in &result.excluded {
            md.push_str(&format!("excluded: {name} ({reason})\n"));
        }
    }
    write_text(&dir.join("benchmark.md"), &md)?;

    if let Some(curves) = curves {
        write_text(&dir.join("curves.csv"), curves)?;
    }
    Ok(())
}

pub fn write_ablation(result: &AblationResult, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    write_text(
        &dir.join("ablation.json"),
        &serde_json::to_string_pretty(result)?,
    )?;
    let mut csv = String::from("setting");
    for m in MetricId::ALL {
        csv.push(',');
        csv.push_str(m.name());
    }
    csv.push('\n');
    for row in &result.rows {
        csv.push_str(row.setting.name());
        for v in &row.scores {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    write_text(&dir.join("ablation.csv"), &csv)
}

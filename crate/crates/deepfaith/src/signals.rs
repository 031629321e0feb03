//! Supervised-explanation-signal pipeline: generate K explanations per
//! sample, deduplicate by cosine similarity, filter by per-metric
//! quantiles, and emit the training pair set Z.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::explain::{
    self, KernelShapConfig, LimeConfig, SaliencyExplanation,
};
use crate::math;
use crate::metrics::{evaluate_all, Direction, EvalConfig, MetricId};
use crate::model::TargetedModel;
use crate::perturb::RemovalStrategy;
use crate::Real;

pub const SIGNAL_SCHEMA_VERSION: u32 = 1;

/// A baseline explanation method usable by the signal pipeline and the
/// benchmark harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Method {
    Occlusion,
    /// Adjacent elements grouped in pairs (odd leftover kept singleton).
    FeatureAblation,
    Saliency,
    IntegratedGradients { steps: usize },
    Lime { num_masks: usize },
    KernelShap,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Occlusion => "occlusion",
            Method::FeatureAblation => "feature_ablation",
            Method::Saliency => "saliency",
            Method::IntegratedGradients { .. } => "integrated_gradients",
            Method::Lime { .. } => "lime",
            Method::KernelShap => "kernel_shap",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "occlusion" => Method::Occlusion,
            "feature_ablation" => Method::FeatureAblation,
            "saliency" => Method::Saliency,
            "integrated_gradients" => Method::IntegratedGradients { steps: 64 },
            "lime" => Method::Lime { num_masks: 256 },
            "kernel_shap" => Method::KernelShap,
            other => return Err(Error::Invalid(format!("unknown method '{other}'"))),
        })
    }

    pub fn explain(
        &self,
        x: &Instance,
        tm: &TargetedModel,
        strat: &RemovalStrategy,
        eval_cfg: &EvalConfig,
        seed: u64,
    ) -> Result<SaliencyExplanation> {
        let eff = &eval_cfg.effect;
        match self {
            Method::Occlusion => explain::occlusion(x, tm, strat, eff),
            Method::FeatureAblation => {
                let n = x.n();
                let mut groups: Vec<Vec<usize>> = Vec::new();
                let mut i = 0;
                while i < n {
                    if i + 1 < n {
                        groups.push(vec![i, i + 1]);
                    } else {
                        groups.push(vec![i]);
                    }
                    i += 2;
                }
                explain::feature_ablation(x, tm, strat, eff, &groups)
            }
            Method::Saliency => explain::saliency_grad(x, tm),
            Method::IntegratedGradients { steps } => {
                let baseline = strat.baseline_of(x)?;
                explain::integrated_gradients(x, tm, &baseline, *steps)
            }
            Method::Lime { num_masks } => {
                let cfg = LimeConfig {
                    num_masks: *num_masks,
                    seed,
                    ..Default::default()
                };
                explain::lime(x, tm, strat, &cfg)
            }
            Method::KernelShap => {
                let cfg = KernelShapConfig {
                    seed,
                    ..Default::default()
                };
                Ok(explain::kernel_shap(x, tm, strat, &cfg)?.explanation)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Cosine-similarity threshold in `(0, 1]` above which two explanations
    /// of the same sample count as duplicates.
    pub dedup_threshold: Real,
    /// Quantile level in `(0, 1)` for the per-metric filter thresholds.
    pub p: Real,
    /// Per-sample quantiles (default); false switches to corpus-global
    /// thresholds.
    pub per_sample_quantiles: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dedup_threshold: 0.95,
            p: 0.5,
            per_sample_quantiles: true,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.dedup_threshold && self.dedup_threshold <= 1.0) {
            return Err(Error::OutOfRange {
                name: "dedup_threshold",
                value: self.dedup_threshold,
            });
        }
        if !(0.0 < self.p && self.p < 1.0) {
            return Err(Error::OutOfRange {
                name: "p",
                value: self.p,
            });
        }
        Ok(())
    }
}

/// One explanation with its ten-metric evaluation attached.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluatedExplanation {
    pub saliency: SaliencyExplanation,
    pub metric_scores: [Real; 10],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSignals {
    pub sample_index: usize,
    pub explanations: Vec<EvaluatedExplanation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratedSignals {
    pub per_sample: Vec<SampleSignals>,
    /// Dropped (sample, method) entries with the failure reason.
    pub warnings: Vec<String>,
}

/// K explanations per sample, each scored on all ten metrics. Explainer
/// failures drop the entry with a warning instead of aborting.
pub fn generate_signals(
    dataset: &Dataset,
    sample_indices: &[usize],
    tm: &TargetedModel,
    methods: &[Method],
    strat: &RemovalStrategy,
    eval_cfg: &EvalConfig,
    cfg: &PipelineConfig,
) -> Result<GeneratedSignals> {
    if methods.len() < 2 {
        return Err(Error::TooFewValues {
            min: 2,
            got: methods.len(),
        });
    }
    cfg.validate()?;
    let mut per_sample = Vec::with_capacity(sample_indices.len());
    let mut warnings = Vec::new();
    for &si in sample_indices {
        let x = &dataset.instances[si];
        let mut explanations = Vec::with_capacity(methods.len());
        for (mi, method) in methods.iter().enumerate() {
            let seed = cfg
                .seed
                .wrapping_mul(0x9e3779b97f4a7c15)
                .wrapping_add((si as u64) << 8)
                .wrapping_add(mi as u64);
            match method.explain(x, tm, strat, eval_cfg, seed) {
                Ok(saliency) => {
                    let mut sample_cfg = eval_cfg.clone();
                    sample_cfg.seed = eval_cfg.seed.wrapping_add(si as u64);
                    let report = evaluate_all(&saliency.scores, x, tm, strat, &sample_cfg)?;
                    explanations.push(EvaluatedExplanation {
                        saliency,
                        metric_scores: report.score_vector(),
                    });
                }
                Err(e) => warnings.push(format!("sample {si}, method {}: {e}", method.name())),
            }
        }
        per_sample.push(SampleSignals {
            sample_index: si,
            explanations,
        });
    }
    Ok(GeneratedSignals {
        per_sample,
        warnings,
    })
}

/// Greedy dedup in method-list order: an explanation is dropped when its
/// cosine similarity to an earlier-retained one reaches the threshold.
/// Returns indices of the retained explanations.
pub fn dedup(explanations: &[EvaluatedExplanation], threshold: Real) -> Result<Vec<usize>> {
    if explanations.is_empty() {
        return Err(Error::Empty);
    }
    let mut retained: Vec<usize> = Vec::new();
    for (i, e) in explanations.iter().enumerate() {
        let mut duplicate = false;
        for &r in &retained {
            let sim = math::cosine(&e.saliency.scores, &explanations[r].saliency.scores)?;
            if sim >= threshold {
                duplicate = true;
                break;
            }
        }
        if !duplicate {
            retained.push(i);
        }
    }
    Ok(retained)
}

fn direction_of(pos: usize) -> Direction {
    MetricId::ALL[pos].direction()
}

/// Per-metric quantile thresholds over a score table (rows = explanations).
pub fn filter_thresholds(scores: &[[Real; 10]], p: Real) -> Result<[Real; 10]> {
    let mut thresholds = [0.0; 10];
    for (j, threshold) in thresholds.iter_mut().enumerate() {
        let column: Vec<Real> = scores.iter().map(|row| row[j]).collect();
        let level = match direction_of(j) {
            Direction::HigherBetter => p,
            Direction::LowerBetter => 1.0 - p,
        };
        *threshold = math::quantile(&column, level)?;
    }
    Ok(thresholds)
}

fn passes(scores: &[Real; 10], thresholds: &[Real; 10]) -> bool {
    scores.iter().zip(thresholds).enumerate().all(|(j, (s, t))| {
        match direction_of(j) {
            Direction::HigherBetter => s >= t,
            Direction::LowerBetter => s <= t,
        }
    })
}

/// Mean direction-adjusted rank (1 = best) per explanation.
fn mean_adjusted_ranks(scores: &[[Real; 10]]) -> Vec<Real> {
    let k = scores.len();
    let mut mean = vec![0.0; k];
    for j in 0..10 {
        let keyed: Vec<Real> = scores
            .iter()
            .map(|row| match direction_of(j) {
                Direction::HigherBetter => -row[j],
                Direction::LowerBetter => row[j],
            })
            .collect();
        let ranks = math::fractional_ranks(&keyed);
        for (m, r) in mean.iter_mut().zip(&ranks) {
            *m += r / 10.0;
        }
    }
    mean
}

/// Quantile filter over one sample's retained explanations. When no
/// explanation passes every metric, the best mean-rank one is kept so the
/// sample is not lost from Z; `guard_used` reports that case.
pub struct FilterOutcome {
    pub kept: Vec<usize>,
    pub guard_used: bool,
}

pub fn filter(
    explanations: &[EvaluatedExplanation],
    p: Real,
    external_thresholds: Option<&[Real; 10]>,
) -> Result<FilterOutcome> {
    if explanations.is_empty() {
        return Err(Error::Empty);
    }
    let table: Vec<[Real; 10]> = explanations.iter().map(|e| e.metric_scores).collect();
    let thresholds = match external_thresholds {
        Some(t) => *t,
        None => filter_thresholds(&table, p)?,
    };
    let kept: Vec<usize> = (0..explanations.len())
        .filter(|&i| passes(&table[i], &thresholds))
        .collect();
    if !kept.is_empty() {
        return Ok(FilterOutcome {
            kept,
            guard_used: false,
        });
    }
    let ranks = mean_adjusted_ranks(&table);
    let best = ranks
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    Ok(FilterOutcome {
        kept: vec![best],
        guard_used: true,
    })
}

/// An (instance, high-quality saliency) training pair with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalPair {
    pub schema_version: u32,
    pub sample_index: usize,
    pub instance: Instance,
    pub saliency: SaliencyExplanation,
    pub metric_scores: [Real; 10],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineStats {
    pub k: usize,
    pub k_dedup: Vec<usize>,
    pub k_filter: Vec<usize>,
    pub guard_samples: Vec<usize>,
}

/// Runs dedup + filter per sample and assembles Z.
pub fn build_pairs(
    dataset: &Dataset,
    signals: &GeneratedSignals,
    cfg: &PipelineConfig,
) -> Result<(Vec<SignalPair>, PipelineStats)> {
    cfg.validate()?;
    let k = signals
        .per_sample
        .iter()
        .map(|s| s.explanations.len())
        .max()
        .unwrap_or(0);
    let mut retained_per_sample = Vec::with_capacity(signals.per_sample.len());
    let mut k_dedup = Vec::with_capacity(signals.per_sample.len());
    for sample in &signals.per_sample {
        let retained = dedup(&sample.explanations, cfg.dedup_threshold)?;
        k_dedup.push(retained.len());
        retained_per_sample.push(retained);
    }

    // corpus-global thresholds when per-sample mode is off
    let global_thresholds = if cfg.per_sample_quantiles {
        None
    } else {
        let mut all: Vec<[Real; 10]> = Vec::new();
        for (sample, retained) in signals.per_sample.iter().zip(&retained_per_sample) {
            for &i in retained {
                all.push(sample.explanations[i].metric_scores);
            }
        }
        Some(filter_thresholds(&all, cfg.p)?)
    };

    let mut pairs = Vec::new();
    let mut k_filter = Vec::with_capacity(signals.per_sample.len());
    let mut guard_samples = Vec::new();
    for (sample, retained) in signals.per_sample.iter().zip(&retained_per_sample) {
        let subset: Vec<EvaluatedExplanation> = retained
            .iter()
            .map(|&i| sample.explanations[i].clone())
            .collect();
        let outcome = filter(&subset, cfg.p, global_thresholds.as_ref())?;
        if outcome.guard_used {
            guard_samples.push(sample.sample_index);
        }
        k_filter.push(outcome.kept.len());
        for &i in &outcome.kept {
            pairs.push(SignalPair {
                schema_version: SIGNAL_SCHEMA_VERSION,
                sample_index: sample.sample_index,
                instance: dataset.instances[sample.sample_index].clone(),
                saliency: subset[i].saliency.clone(),
                metric_scores: subset[i].metric_scores,
            });
        }
    }
    Ok((
        pairs,
        PipelineStats {
            k,
            k_dedup,
            k_filter,
            guard_samples,
        },
    ))
}

/// JSON-lines signal artifact, one record per pair.
pub fn write_signals(path: impl AsRef<Path>, pairs: &[SignalPair]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut writer = std::io::BufWriter::new(file);
    for pair in pairs {
        serde_json::to_writer(&mut writer, pair)?;
        writer.write_all(b"\n").map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(())
}

pub fn read_signals(path: impl AsRef<Path>) -> Result<Vec<SignalPair>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut pairs = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        pairs.push(serde_json::from_str(&line)?);
    }
    Ok(pairs)
}

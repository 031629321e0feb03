//! The unified faithfulness engine: perturbation/preservation effects and
//! the ten metrics (four saliency-side, six permutation-side).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::math::{self, Permutation};
use crate::model::TargetedModel;
use crate::perturb::{insert, remove, sample_subsets, IndexSet, RemovalStrategy, SubsetMode};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaKind {
    AbsDiff,
    HalfSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMinusKind {
    ConfidenceRatio,
    RawConfidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauKind {
    Pearson,
    Spearman,
}

pub fn tau(kind: TauKind, a: &[Real], b: &[Real]) -> Result<Real> {
    match kind {
        TauKind::Pearson => math::pearson(a, b),
        TauKind::Spearman => math::spearman(a, b),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectConfig {
    pub delta: DeltaKind,
    pub delta_minus: DeltaMinusKind,
    /// Correlation used by FC, FE, and INF.
    pub tau_corr: TauKind,
    /// Correlation used by MC.
    pub tau_mc: TauKind,
}

impl Default for EffectConfig {
    fn default() -> Self {
        Self {
            delta: DeltaKind::AbsDiff,
            delta_minus: DeltaMinusKind::ConfidenceRatio,
            tau_corr: TauKind::Pearson,
            tau_mc: TauKind::Spearman,
        }
    }
}

fn check_unit(name: &'static str, y: Real) -> Result<()> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::OutOfRange {
            name,
            value: y,
        });
    }
    Ok(())
}

/// Perturbation effect in `[0, 1]`.
pub fn delta(y1: Real, y2: Real, cfg: &EffectConfig) -> Result<Real> {
    check_unit("y1", y1)?;
    check_unit("y2", y2)?;
    Ok(match cfg.delta {
        DeltaKind::AbsDiff => (y1 - y2).abs(),
        DeltaKind::HalfSquared => 0.5 * (y1 - y2).powi(2),
    })
}

/// Preservation effect in `[0, 1]`: how much of the original prediction
/// survives the perturbation.
pub fn delta_minus(y_orig: Real, y_pert: Real, cfg: &EffectConfig) -> Result<Real> {
    check_unit("y_orig", y_orig)?;
    check_unit("y_pert", y_pert)?;
    Ok(match cfg.delta_minus {
        DeltaMinusKind::ConfidenceRatio => {
            if y_orig == 0.0 {
                // degenerate guard: a vanished prediction is trivially preserved
                1.0
            } else {
                (y_pert / y_orig).min(1.0)
            }
        }
        DeltaMinusKind::RawConfidence => y_pert,
    })
}

fn local_sum(scores: &[Real], set: &IndexSet) -> Real {
    set.indices().iter().map(|&i| scores[i]).sum()
}

fn delta_over_sets(
    x: &Instance,
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    cfg: &EffectConfig,
    sets: &[IndexSet],
) -> Result<Vec<Real>> {
    let y0 = tm.f_scalar(x)?;
    sets.iter()
        .map(|set| {
            let y = tm.f_scalar(&remove(x, set, strat)?)?;
            delta(y0, y, cfg)
        })
        .collect()
}

/// Faithfulness Correlation: correlation between local saliency sums and
/// perturbation effects over a subset family. Exact enumeration for
/// `n <= 16`, otherwise `subset_budget` uniform power-set draws.
pub fn fc(
    scores: &[Real],
    x: &Instance,
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    cfg: &EffectConfig,
    subset_budget: usize,
    seed: u64,
) -> Result<Real> {
    let n = x.n();
    let sets = if n <= 16 {
        sample_subsets(n, 0, 0, &SubsetMode::AllSubsets)?
    } else {
        sample_subsets(n, subset_budget, seed, &SubsetMode::UniformPowerset)?
    };
    let sums: Vec<Real> = sets.iter().map(|s| local_sum(scores, s)).collect();
    let deltas = delta_over_sets(x, tm, strat, cfg, &sets)?;
    tau(cfg.tau_corr, &sums, &deltas)
}

/// Faithfulness Estimate: correlation across samples, one index set per
/// sample, with the explanation recomputed by `method` per sample.
pub fn fe(
    method: &dyn Fn(&Instance) -> Result<Vec<Real>>,
    pairs: &[(Instance, IndexSet)],
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    cfg: &EffectConfig,
) -> Result<Real> {
    if pairs.len() < 2 {
        return Err(Error::TooFewValues {
            min: 2,
            got: pairs.len(),
        });
    }
    let mut sums = Vec::with_capacity(pairs.len());
    let mut deltas = Vec::with_capacity(pairs.len());
    for (x, set) in pairs {
        let s = method(x)?;
        sums.push(local_sum(&s, set));
        let y0 = tm.f_scalar(x)?;
        let y = tm.f_scalar(&remove(x, set, strat)?)?;
        deltas.push(delta(y0, y, cfg)?);
    }
    tau(cfg.tau_corr, &sums, &deltas)
}

/// Infidelity (discretized): correlation over `n_samples` index sets drawn
/// uniformly over the power set.
pub fn inf(
    scores: &[Real],
    x: &Instance,
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    cfg: &EffectConfig,
    n_samples: usize,
    seed: u64,
) -> Result<Real> {
    if n_samples < 2 {
        return Err(Error::TooFewValues {
            min: 2,
            got: n_samples,
        });
    }
    let sets = sample_subsets(x.n(), n_samples, seed, &SubsetMode::UniformPowerset)?;
    let sums: Vec<Real> = sets.iter().map(|s| local_sum(scores, s)).collect();
    let deltas = delta_over_sets(x, tm, strat, cfg, &sets)?;
    tau(cfg.tau_corr, &sums, &deltas)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McSequence {
    Singletons,
    /// Cumulative prefixes of the descending argsort of the explanation.
    Prefixes,
}

/// Monotonicity Correlation over a fixed perturbation sequence on one
/// sample.
pub fn mc(
    scores: &[Real],
    x: &Instance,
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    cfg: &EffectConfig,
    sequence: &McSequence,
) -> Result<Real> {
    let n = x.n();
    if n < 2 {
        return Err(Error::TooFewValues { min: 2, got: n });
    }
    let sets = match sequence {
        McSequence::Singletons => sample_subsets(n, 0, 0, &SubsetMode::Singletons)?,
        McSequence::Prefixes => {
            let perm = math::argsort_desc(scores)?;
            sample_subsets(n, 0, 0, &SubsetMode::PrefixOf(perm))?
        }
    };
    let sums: Vec<Real> = sets.iter().map(|s| local_sum(scores, s)).collect();
    let deltas = delta_over_sets(x, tm, strat, cfg, &sets)?;
    tau(cfg.tau_mc, &sums, &deltas)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    Del,
    Ins,
    Neg,
    Pos,
}

/// Per-step preservation values for a curve metric; length `n` for DEL/INS
/// and `t` for NEG/POS.
pub fn curve_steps(
    perm: &Permutation,
    x: &Instance,
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    cfg: &EffectConfig,
    mode: CurveMode,
) -> Result<Vec<Real>> {
    let n = x.n();
    if perm.len() != n {
        return Err(Error::LengthMismatch {
            left: perm.len(),
            right: n,
        });
    }
    let y0 = tm.f_scalar(x)?;
    let original_class = tm.argmax_class(x)?;
    let order = match mode {
        CurveMode::Neg => perm.reversed(),
        _ => perm.clone(),
    };
    let baseline = strat.baseline_of(x)?;
    let mut steps = Vec::with_capacity(n);
    for k in 1..=n {
        let set = IndexSet::new(order.prefix(k).to_vec(), n)?;
        let perturbed = match mode {
            CurveMode::Ins => insert(&baseline, x, &set)?,
            _ => remove(x, &set, strat)?,
        };
        let y = tm.f_scalar(&perturbed)?;
        steps.push(delta_minus(y0, y, cfg)?);
        if matches!(mode, CurveMode::Neg | CurveMode::Pos) {
            let class = tm.argmax_class(&perturbed)?;
            if class != original_class {
                // t = least number of removals that flips the prediction
                break;
            }
        }
    }
    Ok(steps)
}

/// Curve metrics evaluated as exact step averages (the closed form of the
/// ceiling-step integrals).
pub fn curve_metric(
    perm: &Permutation,
    x: &Instance,
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    cfg: &EffectConfig,
    mode: CurveMode,
) -> Result<Real> {
    let steps = curve_steps(perm, x, tm, strat, cfg, mode)?;
    Ok(steps.iter().sum::<Real>() / steps.len() as Real)
}

/// Region Perturbation over `N` samples: mean perturbation effect across
/// cumulative removals, including the zero-removal term.
pub fn rp(
    method: &dyn Fn(&Instance) -> Result<Permutation>,
    samples: &[&Instance],
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    cfg: &EffectConfig,
) -> Result<Real> {
    if samples.is_empty() {
        return Err(Error::Empty);
    }
    let mut total = 0.0;
    for &x in samples {
        let n = x.n();
        let perm = method(x)?;
        let y0 = tm.f_scalar(x)?;
        let mut acc = 0.0; // j = 0 term is delta(y0, y0) = 0
        for j in 1..=n {
            let set = IndexSet::new(perm.prefix(j).to_vec(), n)?;
            let y = tm.f_scalar(&remove(x, &set, strat)?)?;
            acc += delta(y0, y, cfg)?;
        }
        total += acc / (n + 1) as Real;
    }
    Ok(total / samples.len() as Real)
}

/// Iterative Removal of Features: mean area over the preservation curve.
pub fn irof(
    method: &dyn Fn(&Instance) -> Result<Permutation>,
    samples: &[&Instance],
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    cfg: &EffectConfig,
) -> Result<Real> {
    if samples.is_empty() {
        return Err(Error::Empty);
    }
    let mut total = 0.0;
    for &x in samples {
        let n = x.n();
        let perm = method(x)?;
        let y0 = tm.f_scalar(x)?;
        let mut acc = 0.0;
        for k in 1..=n {
            let set = IndexSet::new(perm.prefix(k).to_vec(), n)?;
            let y = tm.f_scalar(&remove(x, &set, strat)?)?;
            acc += 1.0 - delta_minus(y0, y, cfg)?;
        }
        total += acc / n as Real;
    }
    Ok(total / samples.len() as Real)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MetricId {
    Fc,
    Fe,
    Inf,
    Mc,
    Del,
    Ins,
    Neg,
    Pos,
    Rp,
    Irof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

impl MetricId {
    pub const ALL: [MetricId; 10] = [
        MetricId::Fc,
        MetricId::Fe,
        MetricId::Inf,
        MetricId::Mc,
        MetricId::Del,
        MetricId::Ins,
        MetricId::Neg,
        MetricId::Pos,
        MetricId::Rp,
        MetricId::Irof,
    ];

    pub fn direction(&self) -> Direction {
        match self {
            MetricId::Del | MetricId::Pos => Direction::LowerBetter,
            _ => Direction::HigherBetter,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MetricId::Fc => "FC",
            MetricId::Fe => "FE",
            MetricId::Inf => "INF",
            MetricId::Mc => "MC",
            MetricId::Del => "DEL",
            MetricId::Ins => "INS",
            MetricId::Neg => "NEG",
            MetricId::Pos => "POS",
            MetricId::Rp => "RP",
            MetricId::Irof => "IROF",
        }
    }
}

impl std::fmt::Display for MetricId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Budgets and seeds for a full ten-metric evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub effect: EffectConfig,
    /// Sampled-FC budget when `n > 16`.
    pub fc_budget: usize,
    /// Index sets drawn for INF.
    pub inf_samples: usize,
    /// Index sets drawn for single-sample FE.
    pub fe_subsets: usize,
    pub mc_sequence: McSequence,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            effect: EffectConfig::default(),
            fc_budget: 256,
            inf_samples: 64,
            fe_subsets: 32,
            mc_sequence: McSequence::Singletons,
            seed: 0,
        }
    }
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric: MetricId,
    pub score: Real,
    pub direction: Direction,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub scores: Vec<MetricScore>,
    pub config: EvalConfig,
}

impl MetricReport {
    pub fn score(&self, id: MetricId) -> Option<Real> {
        self.scores.iter().find(|s| s.metric == id).map(|s| s.score)
    }

    pub fn score_vector(&self) -> [Real; 10] {
        let mut out = [0.0; 10];
        for (i, id) in MetricId::ALL.iter().enumerate() {
            out[i] = self.score(*id).unwrap_or(Real::NAN);
        }
        out
    }
}

fn metric_seed(base: u64, id: MetricId) -> u64 {
    base.wrapping_mul(0x100000001b3).wrapping_add(id as u64 + 1)
}

/// Evaluates all ten metrics for one saliency explanation on one sample.
/// Permutation metrics run on the descending argsort of the scores; FE uses
/// seeded nonempty subsets of this sample with the explanation held fixed,
/// and RP/IROF use the single-sample instantiation of their formulas.
pub fn evaluate_all(
    scores: &[Real],
    x: &Instance,
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    if scores.len() != x.n() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: x.n(),
        });
    }
    let perm = math::argsort_desc(scores)?;
    let eff = &cfg.effect;
    let mut out = Vec::with_capacity(10);
    for id in MetricId::ALL {
        let start = Instant::now();
        let score = match id {
            MetricId::Fc => fc(scores, x, tm, strat, eff, cfg.fc_budget, metric_seed(cfg.seed, id))?,
            MetricId::Fe => {
                let sets = nonempty_subsets(x.n(), cfg.fe_subsets, metric_seed(cfg.seed, id))?;
                let fixed = scores.to_vec();
                let pairs: Vec<(Instance, IndexSet)> =
                    sets.into_iter().map(|s| (x.clone(), s)).collect();
                fe(&move |_x: &Instance| Ok(fixed.clone()), &pairs, tm, strat, eff)?
            }
            MetricId::Inf => inf(scores, x, tm, strat, eff, cfg.inf_samples, metric_seed(cfg.seed, id))?,
            MetricId::Mc => mc(scores, x, tm, strat, eff, &cfg.mc_sequence)?,
            MetricId::Del => curve_metric(&perm, x, tm, strat, eff, CurveMode::Del)?,
            MetricId::Ins => curve_metric(&perm, x, tm, strat, eff, CurveMode::Ins)?,
            MetricId::Neg => curve_metric(&perm, x, tm, strat, eff, CurveMode::Neg)?,
            MetricId::Pos => curve_metric(&perm, x, tm, strat, eff, CurveMode::Pos)?,
            MetricId::Rp => {
                let p = perm.clone();
                rp(&move |_x: &Instance| Ok(p.clone()), &[x], tm, strat, eff)?
            }
            MetricId::Irof => {
                let p = perm.clone();
                irof(&move |_x: &Instance| Ok(p.clone()), &[x], tm, strat, eff)?
            }
        };
        out.push(MetricScore {
            metric: id,
            score,
            direction: id.direction(),
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scores: out,
        config: cfg.clone(),
    })
}

/// Seeded uniform nonempty subsets (rejection on empty draws).
pub fn nonempty_subsets(n: usize, count: usize, seed: u64) -> Result<Vec<IndexSet>> {
    let mut out = Vec::with_capacity(count);
    let mut round = 0u64;
    while out.len() < count {
        let batch = sample_subsets(n, count, seed.wrapping_add(round), &SubsetMode::UniformPowerset)?;
        out.extend(batch.into_iter().filter(|s| !s.is_empty()));
        round += 1;
        if round > 64 {
            return Err(Error::Invalid("could not draw nonempty subsets".into()));
        }
    }
    out.truncate(count);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Instance;
    use crate::model::{AdditiveProbModel, TargetedModel, UniformModel};

    fn additive(coeffs: &[Real]) -> AdditiveProbModel {
        AdditiveProbModel {
            intercept: 0.5,
            coeffs: coeffs.to_vec(),
        }
    }

    fn zero_strat(n: usize) -> RemovalStrategy {
        RemovalStrategy::zero_baseline(n, 1)
    }

    #[test]
    fn delta_values() {
        let cfg = EffectConfig::default();
        assert_eq!(delta(0.9, 0.9, &cfg).unwrap(), 0.0);
        assert_eq!(delta(0.9, 0.5, &cfg).unwrap(), 0.4);
        let cfg2 = EffectConfig {
            delta: DeltaKind::HalfSquared,
            ..cfg
        };
        assert_eq!(delta(1.0, 0.0, &cfg2).unwrap(), 0.5);
        assert!(delta(1.2, 0.0, &cfg).is_err());
    }

    #[test]
    fn delta_minus_values() {
        let cfg = EffectConfig::default();
        assert_eq!(delta_minus(0.9, 0.9, &cfg).unwrap(), 1.0);
        assert!((delta_minus(0.9, 0.45, &cfg).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(delta_minus(0.0, 0.3, &cfg).unwrap(), 1.0);
        let raw = EffectConfig {
            delta_minus: DeltaMinusKind::RawConfidence,
            ..cfg
        };
        assert!((delta_minus(0.9, 0.3, &raw).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn fc_exact_additive_model() {
        let model = additive(&[0.1, 0.3]);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![1.0, 1.0]).unwrap();
        let cfg = EffectConfig::default();
        let r = fc(&[0.25, 0.75], &x, &tm, &zero_strat(2), &cfg, 0, 0).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fc_constant_model_is_zero() {
        let model = UniformModel { classes: 2 };
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![1.0, 0.5, 0.2]).unwrap();
        let r = fc(
            &[0.3, 0.2, 0.9],
            &x,
            &tm,
            &zero_strat(3),
            &EffectConfig::default(),
            0,
            0,
        )
        .unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn fe_empty_sets_zero_and_additive_one() {
        let model = additive(&[0.05, 0.1, 0.15, 0.08]);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let strat = zero_strat(4);
        let cfg = EffectConfig::default();
        let xs: Vec<Instance> = (0..6)
            .map(|i| {
                Instance::from_row(vec![
                    0.3 + 0.1 * i as Real / 6.0,
                    0.5,
                    0.2 + 0.05 * i as Real,
                    0.7,
                ])
                .unwrap()
            })
            .collect();
        // all-empty index sets: both vectors are constant -> 0
        let empty_pairs: Vec<(Instance, IndexSet)> = xs
            .iter()
            .map(|x| (x.clone(), IndexSet::empty()))
            .collect();
        let method = |x: &Instance| {
            let model = additive(&[0.05, 0.1, 0.15, 0.08]);
            Ok(x.values()
                .iter()
                .zip(&model.coeffs)
                .map(|(v, c)| v * c)
                .collect())
        };
        let r = fe(&method, &empty_pairs, &tm, &strat, &cfg).unwrap();
        assert_eq!(r, 0.0);
        // explanation proportional to c.x with random nonempty sets -> 1
        let sets = nonempty_subsets(4, 6, 9).unwrap();
        let pairs: Vec<(Instance, IndexSet)> = xs
            .iter()
            .cloned()
            .zip(sets)
            .collect();
        let r = fe(&method, &pairs, &tm, &strat, &cfg).unwrap();
        assert!((r - 1.0).abs() < 1e-9, "fe = {r}");
    }

    #[test]
    fn inf_matches_exact_fc_with_full_coverage() {
        let coeffs = [0.03, 0.09, 0.05, 0.11, 0.02, 0.07];
        let model = additive(&coeffs);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.9, 0.4, 0.6, 0.8, 0.3, 0.7]).unwrap();
        let scores: Vec<Real> = x.values().iter().zip(&coeffs).map(|(v, c)| v * c).collect();
        let strat = zero_strat(6);
        let cfg = EffectConfig::default();
        let exact = fc(&scores, &x, &tm, &strat, &cfg, 0, 0).unwrap();
        let sampled = inf(&scores, &x, &tm, &strat, &cfg, 4000, 7).unwrap();
        assert!((exact - 1.0).abs() < 1e-9);
        assert!((sampled - 1.0).abs() < 1e-9, "inf = {sampled}");
        // determinism
        let again = inf(&scores, &x, &tm, &strat, &cfg, 4000, 7).unwrap();
        assert_eq!(sampled, again);
    }

    #[test]
    fn mc_additive_model_signs() {
        let coeffs = [0.04, 0.12, 0.07, 0.02];
        let model = additive(&coeffs);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.8, 0.5, 0.9, 0.4]).unwrap();
        let scores: Vec<Real> = x.values().iter().zip(&coeffs).map(|(v, c)| v * c).collect();
        let strat = zero_strat(4);
        let cfg = EffectConfig::default();
        let r = mc(&scores, &x, &tm, &strat, &cfg, &McSequence::Singletons).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let rev: Vec<Real> = scores.iter().map(|s| 1.0 - s).collect();
        let r = mc(&rev, &x, &tm, &strat, &cfg, &McSequence::Singletons).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn mc_bounded_for_ties() {
        let model = additive(&[0.1, 0.1]);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.5, 0.5]).unwrap();
        let r = mc(
            &[0.4, 0.6],
            &x,
            &tm,
            &zero_strat(2),
            &EffectConfig::default(),
            &McSequence::Singletons,
        )
        .unwrap();
        assert!(r.is_finite() && r.abs() <= 1.0);
    }

    #[test]
    fn del_hand_enumerated() {
        // f = 0.5 + 0.1 x1 + 0.3 x2, x = (1,1), baseline 0, perm = (x2, x1)
        let model = additive(&[0.1, 0.3]);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![1.0, 1.0]).unwrap();
        let perm = Permutation::new(vec![1, 0]).unwrap();
        let v = curve_metric(
            &perm,
            &x,
            &tm,
            &zero_strat(2),
            &EffectConfig::default(),
            CurveMode::Del,
        )
        .unwrap();
        let expected = (0.6 / 0.9 + 0.5 / 0.9) / 2.0;
        assert!((v - expected).abs() < 1e-12, "del = {v}");
    }

    #[test]
    fn ins_final_step_restores_input() {
        let model = additive(&[0.1, 0.2, 0.05]);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.9, 0.3, 0.6]).unwrap();
        let perm = Permutation::new(vec![2, 0, 1]).unwrap();
        let steps = curve_steps(
            &perm,
            &x,
            &tm,
            &zero_strat(3),
            &EffectConfig::default(),
            CurveMode::Ins,
        )
        .unwrap();
        assert_eq!(steps.len(), 3);
        assert!((steps[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn neg_never_flipping_runs_full_length() {
        // probability of class 1 stays above 0.5 everywhere
        let model = AdditiveProbModel {
            intercept: 0.6,
            coeffs: vec![0.05, 0.1, 0.08],
        };
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.5, 0.5, 0.5]).unwrap();
        let perm = Permutation::new(vec![1, 2, 0]).unwrap();
        let steps = curve_steps(
            &perm,
            &x,
            &tm,
            &zero_strat(3),
            &EffectConfig::default(),
            CurveMode::Neg,
        )
        .unwrap();
        assert_eq!(steps.len(), 3);
    }

    #[test]
    fn pos_stops_at_flip() {
        let model = AdditiveProbModel {
            intercept: 0.30,
            coeffs: vec![0.25, 0.10, 0.05],
        };
        let tm = TargetedModel::new(&model, 1).unwrap();
        // full input: p = 0.30 + 0.25 + 0.10 + 0.05 = 0.70 -> class 1
        let x = Instance::from_row(vec![1.0, 1.0, 1.0]).unwrap();
        // removing element 0 drops p to 0.45 -> flips at k = 1
        let perm = Permutation::new(vec![0, 1, 2]).unwrap();
        let steps = curve_steps(
            &perm,
            &x,
            &tm,
            &zero_strat(3),
            &EffectConfig::default(),
            CurveMode::Pos,
        )
        .unwrap();
        assert_eq!(steps.len(), 1);
    }

    #[test]
    fn rp_constant_model_zero_and_single_element() {
        let model = UniformModel { classes: 2 };
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.2, 0.4]).unwrap();
        let method = |x: &Instance| math::argsort_desc(x.values());
        let v = rp(&method, &[&x], &tm, &zero_strat(2), &EffectConfig::default()).unwrap();
        assert_eq!(v, 0.0);
        // n = 1: value is delta after removing the only element, halved
        let model = AdditiveProbModel {
            intercept: 0.5,
            coeffs: vec![0.2],
        };
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x1 = Instance::from_row(vec![1.0]).unwrap();
        let v = rp(&method, &[&x1], &tm, &zero_strat(1), &EffectConfig::default()).unwrap();
        assert!((v - 0.1).abs() < 1e-12);
    }

    #[test]
    fn irof_preserved_prediction_is_zero() {
        let model = UniformModel { classes: 2 };
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.2, 0.4, 0.9]).unwrap();
        let method = |x: &Instance| math::argsort_desc(x.values());
        let v = irof(&method, &[&x], &tm, &zero_strat(3), &EffectConfig::default()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn irof_bounded() {
        use rand::{Rng, SeedableRng};
        let coeffs = [0.05, 0.12, 0.08, 0.03, 0.1];
        let model = additive(&coeffs);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.5, 0.8, 0.2, 0.9, 0.6]).unwrap();
        let strat = zero_strat(5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let scores: Vec<Real> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
            let perm = math::argsort_desc(&scores).unwrap();
            let method = move |_x: &Instance| Ok(perm.clone());
            let v = irof(&method, &[&x], &tm, &strat, &EffectConfig::default()).unwrap();
            assert!((0.0..=1.0).contains(&v), "irof = {v}");
        }
    }

    #[test]
    fn evaluate_all_shape_and_determinism() {
        let coeffs = [0.04, 0.1, 0.06, 0.12];
        let model = additive(&coeffs);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.5, 0.8, 0.3, 0.6]).unwrap();
        let cfg = EvalConfig::default();
        let strat = zero_strat(4);
        let scores: Vec<Real> = x.values().iter().zip(&coeffs).map(|(v, c)| v * c).collect();
        let a = evaluate_all(&scores, &x, &tm, &strat, &cfg).unwrap();
        assert_eq!(a.scores.len(), 10);
        assert_eq!(
            a.scores.iter().filter(|s| s.direction == Direction::LowerBetter).count(),
            2
        );
        let b = evaluate_all(&scores, &x, &tm, &strat, &cfg).unwrap();
        assert_eq!(a.score_vector(), b.score_vector());
        // on the additive model with s ~ c.x, saliency metrics are perfect
        assert!((a.score(MetricId::Fc).unwrap() - 1.0).abs() < 1e-9);
        assert!((a.score(MetricId::Mc).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn permutation_metrics_invariant_under_monotone_transform() {
        let coeffs = [0.05, 0.12, 0.08, 0.03];
        let model = additive(&coeffs);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.5, 0.8, 0.2, 0.9]).unwrap();
        let strat = zero_strat(4);
        let cfg = EvalConfig::default();
        let scores: Vec<Real> = vec![0.1, 0.7, 0.4, 0.2];
        let transformed: Vec<Real> = scores.iter().map(|s| (3.0 * *s).tanh() * 0.5 + 0.5).collect();
        let a = evaluate_all(&scores, &x, &tm, &strat, &cfg).unwrap();
        let b = evaluate_all(&transformed, &x, &tm, &strat, &cfg).unwrap();
        for id in [
            MetricId::Del,
            MetricId::Ins,
            MetricId::Neg,
            MetricId::Pos,
            MetricId::Rp,
            MetricId::Irof,
            MetricId::Mc, // spearman-based
        ] {
            assert!(
                (a.score(id).unwrap() - b.score(id).unwrap()).abs() < 1e-12,
                "{id} changed under monotone transform"
            );
        }
    }
}

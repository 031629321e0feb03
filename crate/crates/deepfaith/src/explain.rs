//! Baseline saliency methods used to build supervised signals and as
//! benchmark competitors, plus an exact Shapley oracle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::metrics::{delta, EffectConfig};
use crate::model::TargetedModel;
use crate::perturb::{remove, IndexSet, RemovalStrategy};
use crate::Real;

/// Per-element contribution scores in `[0, 1]^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyExplanation {
    pub method_tag: String,
    pub scores: Vec<Real>,
    pub normalization_tag: String,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
}

impl SaliencyExplanation {
    pub fn new(method_tag: impl Into<String>, scores: Vec<Real>) -> Result<Self> {
        for (i, s) in scores.iter().enumerate() {
            if !s.is_finite() || !(0.0..=1.0).contains(s) {
                return Err(Error::OutOfRange {
                    name: "score",
                    value: if s.is_finite() { *s } else { i as f64 },
                });
            }
        }
        Ok(Self {
            method_tag: method_tag.into(),
            scores,
            normalization_tag: "none".into(),
            seed: None,
            config: serde_json::Value::Null,
        })
    }

    fn from_raw(method_tag: impl Into<String>, raw: &[Real]) -> Self {
        Self {
            method_tag: method_tag.into(),
            scores: minmax_normalize(raw),
            normalization_tag: "minmax".into(),
            seed: None,
            config: serde_json::Value::Null,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// Min-max squash to `[0, 1]`; constant vectors map to all-0.5.
pub fn minmax_normalize(raw: &[Real]) -> Vec<Real> {
    let min = raw.iter().copied().fold(Real::INFINITY, Real::min);
    let max = raw.iter().copied().fold(Real::NEG_INFINITY, Real::max);
    if max - min <= Real::EPSILON * max.abs().max(1.0) {
        return vec![0.5; raw.len()];
    }
    raw.iter().map(|v| (v - min) / (max - min)).collect()
}

/// Single-element removal effects.
pub fn occlusion(
    x: &Instance,
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    eff: &EffectConfig,
) -> Result<SaliencyExplanation> {
    let y0 = tm.f_scalar(x)?;
    let raw: Vec<Real> = (0..x.n())
        .map(|i| {
            let y = tm.f_scalar(&remove(x, &IndexSet::singleton(i), strat)?)?;
            delta(y0, y, eff)
        })
        .collect::<Result<_>>()?;
    Ok(SaliencyExplanation::from_raw("occlusion", &raw))
}

/// Group-removal effects: each group's effect is assigned to all of its
/// members. Singleton groups reduce to occlusion.
pub fn feature_ablation(
    x: &Instance,
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    eff: &EffectConfig,
    groups: &[Vec<usize>],
) -> Result<SaliencyExplanation> {
    let n = x.n();
    let mut seen = vec![false; n];
    for g in groups {
        for &i in g {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            if seen[i] {
                return Err(Error::Invalid(format!("index {i} in more than one group")));
            }
            seen[i] = true;
        }
    }
    if !seen.iter().all(|&s| s) {
        return Err(Error::Invalid("groups do not cover all elements".into()));
    }
    let y0 = tm.f_scalar(x)?;
    let mut raw = vec![0.0; n];
    for g in groups {
        let set = IndexSet::new(g.clone(), n)?;
        let y = tm.f_scalar(&remove(x, &set, strat)?)?;
        let effect = delta(y0, y, eff)?;
        for &i in g {
            raw[i] = effect;
        }
    }
    Ok(SaliencyExplanation::from_raw("feature_ablation", &raw))
}

/// Per-element L2 norm of the input gradient.
pub fn saliency_grad(x: &Instance, tm: &TargetedModel) -> Result<SaliencyExplanation> {
    let grad = tm.input_gradient(x)?;
    let d = x.d();
    let raw: Vec<Real> = (0..x.n())
        .map(|i| {
            grad[i * d..(i + 1) * d]
                .iter()
                .map(|g| g * g)
                .sum::<Real>()
                .sqrt()
        })
        .collect();
    Ok(SaliencyExplanation::from_raw("saliency", &raw))
}

/// Per-element integrated-gradients attributions (block-summed, not
/// normalized). Midpoint rule along the straight path from the baseline, so
/// the completeness identity holds to quadrature accuracy.
pub fn ig_attributions(
    x: &Instance,
    tm: &TargetedModel,
    baseline: &Instance,
    steps: usize,
) -> Result<Vec<Real>> {
    if steps < 1 {
        return Err(Error::OutOfRange {
            name: "steps",
            value: steps as f64,
        });
    }
    if !baseline.same_shape(x) {
        return Err(Error::ShapeMismatch("baseline shape differs".into()));
    }
    let flat = x.values().len();
    let mut mean_grad = vec![0.0; flat];
    let mut point = x.clone();
    for k in 0..steps {
        let t = (k as Real + 0.5) / steps as Real;
        for (p, (xv, bv)) in point
            .values_mut()
            .iter_mut()
            .zip(x.values().iter().zip(baseline.values()))
        {
            *p = bv + t * (xv - bv);
        }
        let g = tm.input_gradient(&point)?;
        for (m, gi) in mean_grad.iter_mut().zip(&g) {
            *m += gi / steps as Real;
        }
    }
    let d = x.d();
    Ok((0..x.n())
        .map(|i| {
            (0..d)
                .map(|j| {
                    let f = i * d + j;
                    (x.values()[f] - baseline.values()[f]) * mean_grad[f]
                })
                .sum()
        })
        .collect())
}

pub fn integrated_gradients(
    x: &Instance,
    tm: &TargetedModel,
    baseline: &Instance,
    steps: usize,
) -> Result<SaliencyExplanation> {
    let raw = ig_attributions(x, tm, baseline, steps)?;
    Ok(SaliencyExplanation::from_raw("integrated_gradients", &raw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub num_masks: usize,
    /// Exponential kernel width; defaults to `0.75 * sqrt(n)` when zero.
    pub kernel_width: Real,
    pub ridge: Real,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            num_masks: 256,
            kernel_width: 0.0,
            ridge: 1e-3,
            seed: 0,
        }
    }
}

/// Ridge-regularized weighted linear surrogate on binary keep/remove masks.
pub fn lime(
    x: &Instance,
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    cfg: &LimeConfig,
) -> Result<SaliencyExplanation> {
    use rand::{Rng, SeedableRng};
    let n = x.n();
    if cfg.num_masks < n + 2 {
        return Err(Error::TooFewValues {
            min: n + 2,
            got: cfg.num_masks,
        });
    }
    let width = if cfg.kernel_width > 0.0 {
        cfg.kernel_width
    } else {
        0.75 * (n as Real).sqrt()
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows: Vec<Vec<Real>> = Vec::with_capacity(cfg.num_masks);
    let mut targets: Vec<Real> = Vec::with_capacity(cfg.num_masks);
    let mut weights: Vec<Real> = Vec::with_capacity(cfg.num_masks);
    for _ in 0..cfg.num_masks {
        let kept: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let removed: Vec<usize> = (0..n).filter(|&i| !kept[i]).collect();
        let dist2 = removed.len() as Real;
        let set = IndexSet::new(removed, n)?;
        targets.push(tm.f_scalar(&remove(x, &set, strat)?)?);
        weights.push((-dist2 / (width * width)).exp());
        let mut row = Vec::with_capacity(n + 1);
        row.push(1.0); // intercept
        row.extend(kept.iter().map(|&k| if k { 1.0 } else { 0.0 }));
        rows.push(row);
    }
    // weighted ridge normal equations; bump the ridge on singular draws
    let p = n + 1;
    let mut xtwx = DMatrix::<Real>::zeros(p, p);
    let mut xtwy = DVector::<Real>::zeros(p);
    for ((row, &w), &y) in rows.iter().zip(&weights).zip(&targets) {
        for a in 0..p {
            xtwy[a] += w * row[a] * y;
            for b in 0..p {
                xtwx[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    let mut ridge = cfg.ridge.max(1e-12);
    for _attempt in 0..8 {
        let mut system = xtwx.clone();
        for i in 1..p {
            system[(i, i)] += ridge;
        }
        if let Some(solution) = system.lu().solve(&xtwy) {
            let coeffs: Vec<Real> = solution.iter().skip(1).copied().collect();
            if coeffs.iter().all(|c| c.is_finite()) {
                let mut expl = SaliencyExplanation::from_raw("lime", &coeffs);
                expl.seed = Some(cfg.seed);
                expl.config = serde_json::to_value(cfg)?;
                return Ok(expl);
            }
        }
        ridge *= 10.0;
    }
    Err(Error::Singular(format!(
        "lime surrogate stayed singular up to ridge {ridge}"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelShapConfig {
    /// Coalition samples when `n` is too large for full enumeration.
    pub budget: usize,
    pub seed: u64,
}

impl Default for KernelShapConfig {
    fn default() -> Self {
        Self {
            budget: 2048,
            seed: 0,
        }
    }
}

/// Coalition value: `v(I) = f(x with everything outside I removed)`.
fn coalition_value(
    x: &Instance,
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    present: &IndexSet,
) -> Result<Real> {
    tm.f_scalar(&remove(x, &present.complement(x.n()), strat)?)
}

fn binomial(n: usize, k: usize) -> Real {
    let mut out = 1.0;
    for i in 0..k.min(n - k) {
        out = out * (n - i) as Real / (i + 1) as Real;
    }
    out
}

/// Shapley kernel weight for a coalition of size `k` out of `n`.
fn shapley_kernel_weight(n: usize, k: usize) -> Real {
    (n - 1) as Real / (binomial(n, k) * (k * (n - k)) as Real)
}

pub struct ShapResult {
    /// Raw attributions; sums to `v([n]) - v(empty)` by the efficiency
    /// constraint.
    pub raw: Vec<Real>,
    pub explanation: SaliencyExplanation,
}

/// Kernel SHAP: weighted least squares over coalitions with the Shapley
/// kernel and the efficiency constraint enforced exactly. Full enumeration
/// when `n <= 12`, seeded sampling otherwise.
pub fn kernel_shap(
    x: &Instance,
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    cfg: &KernelShapConfig,
) -> Result<ShapResult> {
    use rand::{Rng, SeedableRng};
    let n = x.n();
    if n < 2 {
        return Err(Error::TooFewValues { min: 2, got: n });
    }
    let v_empty = coalition_value(x, tm, strat, &IndexSet::empty())?;
    let v_full = coalition_value(x, tm, strat, &IndexSet::full(n))?;

    let coalitions: Vec<IndexSet> = if n <= 12 {
        (1u32..(1 << n) - 1)
            .map(|m| IndexSet::from_bitmask(m, n))
            .collect()
    } else {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
        (0..cfg.budget)
            .map(|_| {
                let k = rng.gen_range(1..n);
                let mut idx: Vec<usize> = (0..n).collect();
                for i in (1..n).rev() {
                    let j = rng.gen_range(0..=i);
                    idx.swap(i, j);
                }
                idx.truncate(k);
                IndexSet::new(idx, n)
            })
            .collect::<Result<_>>()?
    };

    // KKT system for the efficiency-constrained weighted least squares
    let p = n + 1;
    let mut system = DMatrix::<Real>::zeros(p, p);
    let mut rhs = DVector::<Real>::zeros(p);
    for set in &coalitions {
        let w = shapley_kernel_weight(n, set.len());
        let y = coalition_value(x, tm, strat, set)? - v_empty;
        for &a in set.indices() {
            rhs[a] += 2.0 * w * y;
            for &b in set.indices() {
                system[(a, b)] += 2.0 * w;
            }
        }
    }
    for i in 0..n {
        system[(i, n)] = 1.0;
        system[(n, i)] = 1.0;
    }
    rhs[n] = v_full - v_empty;
    let lu = system.clone().lu();
    let solution = lu.solve(&rhs).ok_or_else(|| {
        let norm = system.norm();
        Error::Singular(format!("kernel shap KKT system singular (norm {norm:.3e})"))
    })?;
    let raw: Vec<Real> = solution.iter().take(n).copied().collect();
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("kernel shap produced non-finite values".into()));
    }
    let mut explanation = SaliencyExplanation::from_raw("kernel_shap", &raw);
    explanation.seed = Some(cfg.seed);
    explanation.config = serde_json::to_value(cfg)?;
    Ok(ShapResult { raw, explanation })
}

/// Exact Shapley values by full coalition enumeration (`n <= 12`).
pub fn exact_shapley(
    x: &Instance,
    tm: &TargetedModel,
    strat: &RemovalStrategy,
) -> Result<Vec<Real>> {
    let n = x.n();
    if n > 12 {
        return Err(Error::OutOfRange {
            name: "n (exact shapley)",
            value: n as f64,
        });
    }
    let size = 1usize << n;
    let mut values = vec![0.0; size];
    for (mask, value) in values.iter_mut().enumerate() {
        *value = coalition_value(x, tm, strat, &IndexSet::from_bitmask(mask as u32, n))?;
    }
    let mut factorial = vec![1.0; n + 1];
    for i in 1..=n {
        factorial[i] = factorial[i - 1] * i as Real;
    }
    let mut phi = vec![0.0; n];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in 0..size {
            if mask & bit != 0 {
                continue;
            }
            let s = (mask as u32).count_ones() as usize;
            let weight = factorial[s] * factorial[n - s - 1] / factorial[n];
            *phi_i += weight * (values[mask | bit] - values[mask]);
        }
    }
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AdditiveProbModel, MlpModel, TargetedModel, UniformModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_strat(n: usize) -> RemovalStrategy {
        RemovalStrategy::zero_baseline(n, 1)
    }

    fn additive(coeffs: &[Real]) -> AdditiveProbModel {
        AdditiveProbModel {
            intercept: 0.5,
            coeffs: coeffs.to_vec(),
        }
    }

    #[test]
    fn occlusion_constant_model() {
        let model = UniformModel { classes: 2 };
        let tm = TargetedModel::new(&model, 0).unwrap();
        let x = Instance::from_row(vec![1.0, 2.0, 3.0]).unwrap();
        let e = occlusion(&x, &tm, &zero_strat(3), &EffectConfig::default()).unwrap();
        assert_eq!(e.scores, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn occlusion_orders_like_additive_effects() {
        let coeffs = [0.05, 0.15, 0.1];
        let model = additive(&coeffs);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.9, 0.4, 0.7]).unwrap();
        let e = occlusion(&x, &tm, &zero_strat(3), &EffectConfig::default()).unwrap();
        let expected = crate::math::argsort_desc(
            &x.values().iter().zip(&coeffs).map(|(v, c)| v * c).collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(crate::math::argsort_desc(&e.scores).unwrap(), expected);
    }

    #[test]
    fn occlusion_single_element() {
        let model = additive(&[0.2]);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![1.0]).unwrap();
        let e = occlusion(&x, &tm, &zero_strat(1), &EffectConfig::default()).unwrap();
        assert_eq!(e.scores, vec![0.5]);
    }

    #[test]
    fn feature_ablation_singletons_match_occlusion() {
        let coeffs = [0.05, 0.15, 0.1];
        let model = additive(&coeffs);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.9, 0.4, 0.7]).unwrap();
        let strat = zero_strat(3);
        let eff = EffectConfig::default();
        let groups: Vec<Vec<usize>> = (0..3).map(|i| vec![i]).collect();
        let a = feature_ablation(&x, &tm, &strat, &eff, &groups).unwrap();
        let b = occlusion(&x, &tm, &strat, &eff).unwrap();
        assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn feature_ablation_one_group_is_uniform() {
        let model = additive(&[0.1, 0.2]);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.5, 0.5]).unwrap();
        let e = feature_ablation(
            &x,
            &tm,
            &zero_strat(2),
            &EffectConfig::default(),
            &[vec![0, 1]],
        )
        .unwrap();
        assert_eq!(e.scores, vec![0.5, 0.5]);
    }

    #[test]
    fn feature_ablation_group_order() {
        let coeffs = [0.02, 0.2, 0.05, 0.01];
        let model = additive(&coeffs);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let e = feature_ablation(
            &x,
            &tm,
            &zero_strat(4),
            &EffectConfig::default(),
            &[vec![0, 1], vec![2, 3]],
        )
        .unwrap();
        // group {0,1} has effect 0.22 > group {2,3} effect 0.06
        assert!(e.scores[0] > e.scores[2]);
        assert_eq!(e.scores[0], e.scores[1]);
    }

    #[test]
    fn feature_ablation_rejects_non_partition() {
        let model = additive(&[0.1, 0.2]);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.5, 0.5]).unwrap();
        let strat = zero_strat(2);
        let eff = EffectConfig::default();
        assert!(feature_ablation(&x, &tm, &strat, &eff, &[vec![0]]).is_err());
        assert!(feature_ablation(&x, &tm, &strat, &eff, &[vec![0, 1], vec![1]]).is_err());
    }

    #[test]
    fn saliency_constant_model() {
        let model = UniformModel { classes: 2 };
        let tm = TargetedModel::new(&model, 0).unwrap();
        let x = Instance::from_row(vec![1.0, 2.0]).unwrap();
        let e = saliency_grad(&x, &tm).unwrap();
        assert_eq!(e.scores, vec![0.5, 0.5]);
    }

    #[test]
    fn saliency_linear_softmax_ordering() {
        let mut m = MlpModel::linear(3, 1, 2);
        let w0 = [0.5, -0.2, 0.1];
        let w1 = [0.3, 0.4, -0.6];
        m.set_linear_weights(0, &w0);
        m.set_linear_weights(1, &w1);
        let tm = TargetedModel::new(&m, 1).unwrap();
        let x = Instance::from_row(vec![0.2, 0.7, -0.3]).unwrap();
        let e = saliency_grad(&x, &tm).unwrap();
        let diffs: Vec<Real> = (0..3).map(|i| (w1[i] - w0[i]).abs()).collect();
        assert_eq!(
            crate::math::argsort_desc(&e.scores).unwrap(),
            crate::math::argsort_desc(&diffs).unwrap()
        );
    }

    #[test]
    fn saliency_fd_and_analytic_agree_in_argsort() {
        let m = MlpModel::new(5, 1, vec![8], 2, crate::model::Activation::Tanh, 21);
        let tm = TargetedModel::new(&m, 1).unwrap();
        let x = Instance::from_row(vec![0.4, -0.2, 0.9, 0.1, -0.5]).unwrap();
        let analytic = saliency_grad(&x, &tm).unwrap();
        let fd_grad = tm.fd_gradient(&x, 1e-4).unwrap();
        let fd_norms: Vec<Real> = fd_grad.iter().map(|g| g.abs()).collect();
        assert_eq!(
            crate::math::argsort_desc(&analytic.scores).unwrap(),
            crate::math::argsort_desc(&fd_norms).unwrap()
        );
    }

    #[test]
    fn ig_degenerate_at_baseline() {
        let model = additive(&[0.1, 0.2]);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.3, 0.4]).unwrap();
        let e = integrated_gradients(&x, &tm, &x, 16).unwrap();
        assert_eq!(e.scores, vec![0.5, 0.5]);
    }

    #[test]
    fn ig_completeness_on_mlp() {
        let m = MlpModel::new(6, 1, vec![10], 2, crate::model::Activation::Tanh, 4);
        let tm = TargetedModel::new(&m, 1).unwrap();
        let baseline = Instance::from_row(vec![0.0; 6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let x = Instance::from_row((0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let attr = ig_attributions(&x, &tm, &baseline, 256).unwrap();
            let total: Real = attr.iter().sum();
            let expected = tm.f_scalar(&x).unwrap() - tm.f_scalar(&baseline).unwrap();
            assert!((total - expected).abs() < 1e-3, "completeness gap {}", (total - expected).abs());
        }
    }

    #[test]
    fn ig_linear_model_closed_form() {
        let coeffs = [0.05, 0.15, 0.1];
        let model = additive(&coeffs);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let baseline = Instance::from_row(vec![0.1, 0.2, 0.3]).unwrap();
        let x = Instance::from_row(vec![0.9, 0.4, 0.7]).unwrap();
        for steps in [1, 4, 64] {
            let attr = ig_attributions(&x, &tm, &baseline, steps).unwrap();
            for i in 0..3 {
                let expected = coeffs[i] * (x.values()[i] - baseline.values()[i]);
                assert!((attr[i] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lime_deterministic_and_recovers_additive_order() {
        let coeffs = [0.05, 0.15, 0.1, 0.02];
        let model = additive(&coeffs);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.9, 0.4, 0.7, 0.8]).unwrap();
        let strat = zero_strat(4);
        let cfg = LimeConfig {
            num_masks: 256,
            seed: 3,
            ..Default::default()
        };
        let a = lime(&x, &tm, &strat, &cfg).unwrap();
        let b = lime(&x, &tm, &strat, &cfg).unwrap();
        assert_eq!(a.scores, b.scores);

        let target = crate::math::argsort_desc(
            &x.values().iter().zip(&coeffs).map(|(v, c)| v * c).collect::<Vec<_>>(),
        )
        .unwrap();
        let mut hits = 0;
        for seed in 0..100 {
            let cfg = LimeConfig {
                num_masks: 256,
                seed,
                ..Default::default()
            };
            let e = lime(&x, &tm, &strat, &cfg).unwrap();
            if crate::math::argsort_desc(&e.scores).unwrap() == target {
                hits += 1;
            }
        }
        assert!(hits >= 95, "lime recovered the order in {hits}/100 runs");
    }

    #[test]
    fn lime_mask_budget_guard() {
        let model = additive(&[0.1, 0.2, 0.3]);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.5, 0.5, 0.5]).unwrap();
        let cfg = LimeConfig {
            num_masks: 3,
            ..Default::default()
        };
        assert!(lime(&x, &tm, &zero_strat(3), &cfg).is_err());
    }

    #[test]
    fn exact_shapley_additive_closed_form() {
        let coeffs = [0.05, 0.15, 0.1, 0.0];
        let model = additive(&coeffs);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.9, 0.4, 0.7, 0.8]).unwrap();
        let phi = exact_shapley(&x, &tm, &zero_strat(4)).unwrap();
        for i in 0..4 {
            let expected = coeffs[i] * x.values()[i];
            assert!((phi[i] - expected).abs() < 1e-12, "phi[{i}] = {}", phi[i]);
        }
        // dummy axiom: zero coefficient gives zero attribution
        assert!(phi[3].abs() < 1e-12);
    }

    #[test]
    fn exact_shapley_efficiency_on_mlp() {
        let m = MlpModel::new(5, 1, vec![7], 2, crate::model::Activation::Tanh, 33);
        let tm = TargetedModel::new(&m, 1).unwrap();
        let x = Instance::from_row(vec![0.4, -0.7, 0.2, 0.9, -0.1]).unwrap();
        let strat = zero_strat(5);
        let phi = exact_shapley(&x, &tm, &strat).unwrap();
        let v_full = tm.f_scalar(&x).unwrap();
        let v_empty = tm
            .f_scalar(&remove(&x, &IndexSet::full(5), &strat).unwrap())
            .unwrap();
        let total: Real = phi.iter().sum();
        assert!((total - (v_full - v_empty)).abs() < 1e-12);
    }

    #[test]
    fn exact_shapley_size_guard() {
        let model = additive(&vec![0.01; 13]);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.1; 13]).unwrap();
        assert!(exact_shapley(&x, &tm, &zero_strat(13)).is_err());
    }

    #[test]
    fn kernel_shap_matches_exact_shapley_on_mlps() {
        for seed in 0..5u64 {
            let m = MlpModel::new(6, 1, vec![8], 2, crate::model::Activation::Tanh, seed);
            let tm = TargetedModel::new(&m, 1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let x = Instance::from_row((0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let strat = zero_strat(6);
            let exact = exact_shapley(&x, &tm, &strat).unwrap();
            let ks = kernel_shap(&x, &tm, &strat, &KernelShapConfig::default()).unwrap();
            for (a, b) in exact.iter().zip(&ks.raw) {
                assert!((a - b).abs() < 1e-6, "exact {a} vs kernel {b}");
            }
        }
    }

    #[test]
    fn kernel_shap_symmetry() {
        // symmetric model, symmetric input -> equal attributions
        let model = additive(&[0.1, 0.1]);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.6, 0.6]).unwrap();
        let ks = kernel_shap(&x, &tm, &zero_strat(2), &KernelShapConfig::default()).unwrap();
        assert!((ks.raw[0] - ks.raw[1]).abs() < 1e-10);
    }

    #[test]
    fn kernel_shap_efficiency() {
        let m = MlpModel::new(5, 1, vec![6], 2, crate::model::Activation::Tanh, 2);
        let tm = TargetedModel::new(&m, 1).unwrap();
        let x = Instance::from_row(vec![0.3, -0.4, 0.8, 0.0, 0.5]).unwrap();
        let strat = zero_strat(5);
        let ks = kernel_shap(&x, &tm, &strat, &KernelShapConfig::default()).unwrap();
        let v_full = tm.f_scalar(&x).unwrap();
        let v_empty = tm
            .f_scalar(&remove(&x, &IndexSet::full(5), &strat).unwrap())
            .unwrap();
        let total: Real = ks.raw.iter().sum();
        assert!((total - (v_full - v_empty)).abs() < 1e-6);
    }

    #[test]
    fn explainers_agree_on_additive_argsort() {
        let coeffs = [0.05, 0.15, 0.1, 0.02];
        let model = additive(&coeffs);
        let tm = TargetedModel::new(&model, 1).unwrap();
        let x = Instance::from_row(vec![0.9, 0.4, 0.7, 0.8]).unwrap();
        let strat = zero_strat(4);
        let eff = EffectConfig::default();
        let target = crate::math::argsort_desc(
            &x.values().iter().zip(&coeffs).map(|(v, c)| v * c).collect::<Vec<_>>(),
        )
        .unwrap();
        let baseline = Instance::from_row(vec![0.0; 4]).unwrap();
        let candidates: Vec<Vec<Real>> = vec![
            occlusion(&x, &tm, &strat, &eff).unwrap().scores,
            integrated_gradients(&x, &tm, &baseline, 64).unwrap().scores,
            minmax_normalize(&exact_shapley(&x, &tm, &strat).unwrap()),
        ];
        for scores in candidates {
            assert_eq!(crate::math::argsort_desc(&scores).unwrap(), target);
        }
    }

    #[test]
    fn explanation_serializes() {
        let e = SaliencyExplanation::from_raw("occlusion", &[0.1, 0.9]).with_seed(7);
        let json = serde_json::to_string(&e).unwrap();
        let back: SaliencyExplanation = serde_json::from_str(&json).unwrap();
        assert_eq!(e, back);
    }
}

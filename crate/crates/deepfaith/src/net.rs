//! Trainable saliency explainer: per-element encoder, a dense mixing
//! layer over elements, and a sigmoid head, trained on a scheduled blend
//! of a pattern-consistency loss (match supervising saliency signals) and
//! a local-correlation loss (correlate local score sums with measured
//! perturbation effects).

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::explain::SaliencyExplanation;
use crate::metrics::{delta, EffectConfig};
use crate::model::TargetedModel;
use crate::perturb::{remove, IndexSet, RemovalStrategy};
use crate::signals::SignalPair;
use crate::Real;

pub const EXPLAINER_CHECKPOINT_VERSION: u32 = 1;

/// Similarity used inside the pattern-consistency loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcSimilarity {
    Pearson,
    Cosine,
}

/// Subset scheme for the local-correlation loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LcSubsets {
    /// All 2^n index sets; requires n <= 16.
    Exact,
    /// M distinct index sets drawn uniformly from the powerset, resampled
    /// each epoch.
    Sampled { m: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerTrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: Real,
    pub momentum: Real,
    /// Schedule midpoint in epochs; defaults to 0.6 * epochs when None.
    pub alpha_mid: Option<Real>,
    /// Schedule width in epochs; defaults to 0.08 * epochs when None.
    pub alpha_width: Option<Real>,
    pub lc_subsets: LcSubsets,
    pub pc_similarity: PcSimilarity,
    /// Pins the loss blend to a constant instead of the schedule; 1.0
    /// trains on pattern consistency only, 0.0 on local correlation only.
    pub alpha_fixed: Option<Real>,
    /// Per-parameter adaptive step scaling (second-moment normalization)
    /// instead of plain momentum descent.
    pub adaptive: bool,
    pub seed: u64,
}

impl Default for ExplainerTrainConfig {
    fn default() -> Self {
        Self {
            hidden: 8,
            epochs: 120,
            batch_size: 8,
            lr: 0.2,
            momentum: 0.9,
            alpha_mid: None,
            alpha_width: None,
            lc_subsets: LcSubsets::Exact,
            pc_similarity: PcSimilarity::Pearson,
            alpha_fixed: None,
            adaptive: false,
            seed: 0,
        }
    }
}

impl ExplainerTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Invalid(
                "hidden, epochs, and batch_size must be positive".into(),
            ));
        }
        if self.alpha_width() <= 0.0 {
            return Err(Error::OutOfRange {
                name: "alpha_width",
                value: self.alpha_width(),
            });
        }
        if let Some(a) = self.alpha_fixed {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::OutOfRange {
                    name: "alpha_fixed",
                    value: a,
                });
            }
        }
        if let LcSubsets::Sampled { m } = self.lc_subsets {
            if m < 2 {
                return Err(Error::TooFewValues { min: 2, got: m });
            }
        }
        Ok(())
    }

    pub fn alpha_mid(&self) -> Real {
        self.alpha_mid.unwrap_or(0.6 * self.epochs as Real)
    }

    pub fn alpha_width(&self) -> Real {
        self.alpha_width.unwrap_or(0.08 * self.epochs as Real)
    }
}

/// Loss-blend weight: starts near 1 (pattern consistency dominates) and
/// decays through a logistic ramp centered at `alpha_mid`.
pub fn alpha(epoch: usize, cfg: &ExplainerTrainConfig) -> Real {
    if let Some(a) = cfg.alpha_fixed {
        return a;
    }
    let z = (epoch as Real - cfg.alpha_mid()) / cfg.alpha_width();
    1.0 - 1.0 / (1.0 + (-z).exp())
}

/// φ: x -> [0,1]^n. Parameters live in one flat vector so gradient
/// checking can walk every coordinate.
///
/// Layout: encoder weights (hidden x d), encoder bias (hidden), mixing
/// matrix over elements (n x n), hidden mixing weights (hidden x hidden),
/// mixing bias (hidden), head weights (hidden), head bias (1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerNet {
    pub version: u32,
    pub n: usize,
    pub d: usize,
    pub hidden: usize,
    pub theta: Vec<Real>,
}

struct ForwardCache {
    x: DMatrix<Real>,
    e: DMatrix<Real>,
    f: DMatrix<Real>,
    m: DMatrix<Real>,
    y: DVector<Real>,
}

impl ExplainerNet {
    pub fn num_params(n: usize, d: usize, hidden: usize) -> usize {
        hidden * d + hidden + n * n + hidden * hidden + hidden + hidden + 1
    }

    pub fn new(n: usize, d: usize, hidden: usize, seed: u64) -> Result<Self> {
        if n == 0 || d == 0 || hidden == 0 {
            return Err(Error::Invalid("net dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = Self::num_params(n, d, hidden);
        let mut theta = vec![0.0; total];
        let scales = [
            (0, hidden * d, 1.0 / (d as Real).sqrt()),
            (
                hidden * d + hidden + n * n,
                hidden * hidden,
                1.0 / (hidden as Real).sqrt(),
            ),
            (
                hidden * d + hidden + n * n + hidden * hidden + hidden,
                hidden,
                1.0 / (hidden as Real).sqrt(),
            ),
        ];
        for (start, len, scale) in scales {
            for t in theta[start..start + len].iter_mut() {
                *t = rng.gen_range(-scale..scale);
            }
        }
        // mixing matrix starts at identity plus small noise so early
        // training behaves like an elementwise net
        let a_start = hidden * d + hidden;
        for i in 0..n {
            for j in 0..n {
                let noise: Real = rng.gen_range(-0.05..0.05);
                theta[a_start + i * n + j] = if i == j { 1.0 + noise } else { noise };
            }
        }
        Ok(Self {
            version: EXPLAINER_CHECKPOINT_VERSION,
            n,
            d,
            hidden,
            theta,
        })
    }

    fn offsets(&self) -> (usize, usize, usize, usize, usize, usize) {
        let (n, d, h) = (self.n, self.d, self.hidden);
        let o_be = h * d;
        let o_a = o_be + h;
        let o_wm = o_a + n * n;
        let o_bm = o_wm + h * h;
        let o_wh = o_bm + h;
        let o_bh = o_wh + h;
        (o_be, o_a, o_wm, o_bm, o_wh, o_bh)
    }

    fn unpack(
        &self,
    ) -> (
        DMatrix<Real>,
        DVector<Real>,
        DMatrix<Real>,
        DMatrix<Real>,
        DVector<Real>,
        DVector<Real>,
        Real,
    ) {
        let (n, d, h) = (self.n, self.d, self.hidden);
        let (o_be, o_a, o_wm, o_bm, o_wh, o_bh) = self.offsets();
        let w_e = DMatrix::from_row_slice(h, d, &self.theta[..o_be]);
        let b_e = DVector::from_row_slice(&self.theta[o_be..o_a]);
        let a = DMatrix::from_row_slice(n, n, &self.theta[o_a..o_wm]);
        let w_m = DMatrix::from_row_slice(h, h, &self.theta[o_wm..o_bm]);
        let b_m = DVector::from_row_slice(&self.theta[o_bm..o_wh]);
        let w_h = DVector::from_row_slice(&self.theta[o_wh..o_bh]);
        let b_h = self.theta[o_bh];
        (w_e, b_e, a, w_m, b_m, w_h, b_h)
    }

    fn forward_cached(&self, x: &Instance) -> Result<ForwardCache> {
        if x.n() != self.n || x.d() != self.d {
            return Err(Error::ShapeMismatch(format!(
                "net expects {}x{}, instance is {}x{}",
                self.n,
                self.d,
                x.n(),
                x.d()
            )));
        }
        let (w_e, b_e, a, w_m, b_m, w_h, b_h) = self.unpack();
        let xm = DMatrix::from_row_slice(self.n, self.d, x.values());
        let mut e = &xm * w_e.transpose();
        for i in 0..self.n {
            for j in 0..self.hidden {
                e[(i, j)] = (e[(i, j)] + b_e[j]).tanh();
            }
        }
        let f = &e * w_m.transpose();
        let mut m = &a * &f;
        for i in 0..self.n {
            for j in 0..self.hidden {
                m[(i, j)] = (m[(i, j)] + b_m[j]).tanh();
            }
        }
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let s = m.row(i).transpose().dot(&w_h) + b_h;
            y[i] = 1.0 / (1.0 + (-s).exp());
        }
        Ok(ForwardCache { x: xm, e, f, m, y })
    }

    pub fn forward(&self, x: &Instance) -> Result<SaliencyExplanation> {
        let cache = self.forward_cached(x)?;
        SaliencyExplanation::new("explainer_net", cache.y.iter().copied().collect())
    }

    pub fn scores(&self, x: &Instance) -> Result<Vec<Real>> {
        Ok(self.forward_cached(x)?.y.iter().copied().collect())
    }

    /// Accumulates dL/dθ into `grad` given dL/dy for one instance.
    fn backward(&self, cache: &ForwardCache, g_y: &DVector<Real>, grad: &mut [Real]) {
        let (n, h) = (self.n, self.hidden);
        let (o_be, o_a, o_wm, o_bm, o_wh, o_bh) = self.offsets();
        let (_, _, a, w_m, _, w_h, _) = self.unpack();

        let mut g_s = DVector::zeros(n);
        for i in 0..n {
            g_s[i] = g_y[i] * cache.y[i] * (1.0 - cache.y[i]);
        }
        for j in 0..h {
            let mut acc = 0.0;
            for i in 0..n {
                acc += g_s[i] * cache.m[(i, j)];
            }
            grad[o_wh + j] += acc;
        }
        grad[o_bh] += g_s.sum();

        let mut g_p = DMatrix::zeros(n, h);
        for i in 0..n {
            for j in 0..h {
                let g_m = g_s[i] * w_h[j];
                g_p[(i, j)] = g_m * (1.0 - cache.m[(i, j)] * cache.m[(i, j)]);
            }
        }
        for j in 0..h {
            grad[o_bm + j] += g_p.column(j).sum();
        }
        let g_a = &g_p * cache.f.transpose();
        for i in 0..n {
            for j in 0..n {
                grad[o_a + i * n + j] += g_a[(i, j)];
            }
        }
        let g_f = a.transpose() * &g_p;
        let g_wm = g_f.transpose() * &cache.e;
        for i in 0..h {
            for j in 0..h {
                grad[o_wm + i * h + j] += g_wm[(i, j)];
            }
        }
        let g_e = &g_f * &w_m;
        let mut g_q = DMatrix::zeros(n, h);
        for i in 0..n {
            for j in 0..h {
                g_q[(i, j)] = g_e[(i, j)] * (1.0 - cache.e[(i, j)] * cache.e[(i, j)]);
            }
        }
        for j in 0..h {
            grad[o_be + j] += g_q.column(j).sum();
        }
        let g_we = g_q.transpose() * &cache.x;
        for i in 0..h {
            for j in 0..self.d {
                grad[i * self.d + j] += g_we[(i, j)];
            }
        }
    }
}

/// Similarity value plus its gradient in the first argument. Degenerate
/// inputs (zero variance or zero norm) return (0, zero grad).
fn similarity_grad(y: &DVector<Real>, s: &[Real], kind: PcSimilarity) -> (Real, DVector<Real>) {
    let n = y.len();
    match kind {
        PcSimilarity::Pearson => {
            let my = y.sum() / n as Real;
            let ms = s.iter().sum::<Real>() / n as Real;
            let yc: DVector<Real> = y.map(|v| v - my);
            let sc = DVector::from_iterator(n, s.iter().map(|v| v - ms));
            let ny = yc.norm();
            let ns = sc.norm();
            if ny < 1e-12 || ns < 1e-12 {
                return (0.0, DVector::zeros(n));
            }
            let r = yc.dot(&sc) / (ny * ns);
            let grad = sc.map(|v| v / (ny * ns)) - yc.map(|v| r * v / (ny * ny));
            (r, grad)
        }
        PcSimilarity::Cosine => {
            let ny = y.norm();
            let sv = DVector::from_row_slice(s);
            let ns = sv.norm();
            if ny < 1e-12 || ns < 1e-12 {
                return (0.0, DVector::zeros(n));
            }
            let r = y.dot(&sv) / (ny * ns);
            let grad = sv.map(|v| v / (ny * ns)) - y.map(|v| r * v / (ny * ny));
            (r, grad)
        }
    }
}

/// Mean over pairs of 1 − similarity(φ(x), s), with dL/dθ.
pub fn loss_pc_grad(
    net: &ExplainerNet,
    pairs: &[SignalPair],
    kind: PcSimilarity,
) -> Result<(Real, Vec<Real>)> {
    if pairs.is_empty() {
        return Err(Error::Empty);
    }
    let mut grad = vec![0.0; net.theta.len()];
    let mut loss = 0.0;
    let scale = 1.0 / pairs.len() as Real;
    for pair in pairs {
        let cache = net.forward_cached(&pair.instance)?;
        let (r, dr_dy) = similarity_grad(&cache.y, &pair.saliency.scores, kind);
        loss += (1.0 - r) * scale;
        let g_y = dr_dy.map(|v| -v * scale);
        net.backward(&cache, &g_y, &mut grad);
    }
    Ok((loss, grad))
}

pub fn loss_pc(net: &ExplainerNet, pairs: &[SignalPair], kind: PcSimilarity) -> Result<Real> {
    Ok(loss_pc_grad(net, pairs, kind)?.0)
}

/// Precomputed perturbation probes for one instance: index sets and the
/// measured effect Δ of removing each. The Δ values are constants with
/// respect to θ, so they are computed once and the gradient flows only
/// through the local score sums.
#[derive(Debug, Clone)]
pub struct LcProbe {
    pub instance: Instance,
    pub subsets: Vec<IndexSet>,
    pub deltas: Vec<Real>,
}

/// All 2^n subsets (exact mode) or `m` distinct uniformly drawn subsets.
pub fn lc_subsets_for(n: usize, mode: LcSubsets, seed: u64) -> Result<Vec<IndexSet>> {
    match mode {
        LcSubsets::Exact => {
            if n > 16 {
                return Err(Error::Unsupported(format!(
                    "exact subset enumeration needs n <= 16, got {n}"
                )));
            }
            Ok((0..(1u32 << n)).map(|m| IndexSet::from_bitmask(m, n)).collect())
        }
        LcSubsets::Sampled { m } => {
            if n > 30 {
                return Err(Error::Unsupported(format!(
                    "sampled subsets need n <= 30, got {n}"
                )));
            }
            let cap = 1u64 << n;
            let m = m.min(cap as usize);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut seen = BTreeSet::new();
            let mut out = Vec::with_capacity(m);
            while out.len() < m {
                let mask = rng.gen_range(0..cap) as u32;
                if seen.insert(mask) {
                    out.push(IndexSet::from_bitmask(mask, n));
                }
            }
            Ok(out)
        }
    }
}

pub fn build_lc_probe(
    x: &Instance,
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    eff: &EffectConfig,
    subsets: Vec<IndexSet>,
) -> Result<LcProbe> {
    let y0 = tm.f_scalar(x)?;
    let mut deltas = Vec::with_capacity(subsets.len());
    for set in &subsets {
        let xp = remove(x, set, strat)?;
        deltas.push(delta(y0, tm.f_scalar(&xp)?, eff)?);
    }
    Ok(LcProbe {
        instance: x.clone(),
        subsets,
        deltas,
    })
}

/// Negative mean correlation between local score sums and the probe Δs,
/// with dL/dθ. Degenerate correlations contribute 0.
pub fn loss_lc_grad(net: &ExplainerNet, probes: &[LcProbe]) -> Result<(Real, Vec<Real>)> {
    if probes.is_empty() {
        return Err(Error::Empty);
    }
    let mut grad = vec![0.0; net.theta.len()];
    let mut loss = 0.0;
    let scale = 1.0 / probes.len() as Real;
    for probe in probes {
        if probe.subsets.len() < 2 {
            return Err(Error::TooFewValues {
                min: 2,
                got: probe.subsets.len(),
            });
        }
        let cache = net.forward_cached(&probe.instance)?;
        let m = probe.subsets.len();
        let mut sums = DVector::zeros(m);
        for (j, set) in probe.subsets.iter().enumerate() {
            sums[j] = set.indices().iter().map(|&i| cache.y[i]).sum();
        }
        let (r, dr_du) = similarity_grad(&sums, &probe.deltas, PcSimilarity::Pearson);
        loss += -r * scale;
        // chain through u_j = sum_{i in I_j} y_i
        let mut g_y = DVector::zeros(net.n);
        for (j, set) in probe.subsets.iter().enumerate() {
            for &i in set.indices() {
                g_y[i] += -dr_du[j] * scale;
            }
        }
        net.backward(&cache, &g_y, &mut grad);
    }
    Ok((loss, grad))
}

pub fn loss_lc(net: &ExplainerNet, probes: &[LcProbe]) -> Result<Real> {
    Ok(loss_lc_grad(net, probes)?.0)
}

pub fn loss_obj(loss_pc: Real, loss_lc: Real, alpha: Real) -> Real {
    alpha * loss_pc + (1.0 - alpha) * loss_lc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    PatternConsistency,
    LocalCorrelation,
}

/// Max error between analytic and central-difference gradients over every
/// parameter, relative to the gradient's overall scale (h = 1e-5; the
/// denominator is the largest magnitude seen in either gradient, floored
/// at 1e-8). Normalizing by the vector scale rather than per component
/// keeps finite-difference noise on near-zero components from dominating.
pub fn gradcheck(
    net: &ExplainerNet,
    kind: LossKind,
    pairs: &[SignalPair],
    probes: &[LcProbe],
    pc_kind: PcSimilarity,
) -> Result<Real> {
    let value = |net: &ExplainerNet| -> Result<(Real, Vec<Real>)> {
        match kind {
            LossKind::PatternConsistency => loss_pc_grad(net, pairs, pc_kind),
            LossKind::LocalCorrelation => loss_lc_grad(net, probes),
        }
    };
    let (_, analytic) = value(net)?;
    let h = 1e-5;
    let mut worst_abs: Real = 0.0;
    let mut scale: Real = 1e-8;
    let mut probe_net = net.clone();
    for k in 0..net.theta.len() {
        let orig = probe_net.theta[k];
        probe_net.theta[k] = orig + h;
        let plus = value(&probe_net)?.0;
        probe_net.theta[k] = orig - h;
        let minus = value(&probe_net)?.0;
        probe_net.theta[k] = orig;
        let fd = (plus - minus) / (2.0 * h);
        worst_abs = worst_abs.max((analytic[k] - fd).abs());
        scale = scale.max(analytic[k].abs()).max(fd.abs());
    }
    Ok(worst_abs / scale)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub alpha: Real,
    pub loss_pc: Real,
    pub loss_lc: Real,
    pub loss_obj: Real,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
    /// Epoch at which a non-finite loss aborted training, if any; the
    /// returned net is the last finite checkpoint.
    pub diverged_at: Option<usize>,
}

impl TrainLog {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut w = std::io::BufWriter::new(file);
        let mut emit = |line: String| -> Result<()> {
            writeln!(w, "{line}").map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })
        };
        emit("epoch,alpha,loss_pc,loss_lc,loss_obj".into())?;
        for r in &self.rows {
            emit(format!(
                "{},{},{},{},{}",
                r.epoch, r.alpha, r.loss_pc, r.loss_lc, r.loss_obj
            ))?;
        }
        Ok(())
    }
}

/// Mini-batch gradient descent with momentum on the α-scheduled blend of
/// the two losses. In exact subset mode the Δ probes are computed once; in
/// sampled mode they are redrawn each epoch from (seed, epoch).
pub fn train_explainer(
    pairs: &[SignalPair],
    tm: &TargetedModel,
    strat: &RemovalStrategy,
    eff: &EffectConfig,
    cfg: &ExplainerTrainConfig,
) -> Result<(ExplainerNet, TrainLog)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty);
    }
    if pairs.len() < cfg.batch_size {
        return Err(Error::TooFewValues {
            min: cfg.batch_size,
            got: pairs.len(),
        });
    }
    let n = pairs[0].instance.n();
    let d = pairs[0].instance.d();
    for p in pairs {
        if p.instance.n() != n || p.instance.d() != d {
            return Err(Error::ShapeMismatch(
                "signal pairs disagree on instance shape".into(),
            ));
        }
    }
    let mut net = ExplainerNet::new(n, d, cfg.hidden, cfg.seed)?;
    let mut velocity = vec![0.0; net.theta.len()];
    // second-moment accumulator for the adaptive mode
    let mut sq = vec![0.0; net.theta.len()];
    let mut step = 0usize;
    let mut log = TrainLog::default();
    let mut last_good = net.clone();

    let build_probes = |epoch: usize| -> Result<Vec<LcProbe>> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let seed = cfg
                    .seed
                    .wrapping_add(0x517cc1b727220a95)
                    .wrapping_add((epoch as u64) << 20)
                    .wrapping_add(i as u64);
                let subsets = lc_subsets_for(n, cfg.lc_subsets, seed)?;
                build_lc_probe(&p.instance, tm, strat, eff, subsets)
            })
            .collect()
    };
    let mut probes = build_probes(0)?;

    for epoch in 0..cfg.epochs {
        if epoch > 0 && matches!(cfg.lc_subsets, LcSubsets::Sampled { .. }) {
            probes = build_probes(epoch)?;
        }
        let a = alpha(epoch, cfg);
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1).wrapping_add(epoch as u64));
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        for batch in order.chunks(cfg.batch_size) {
            let batch_pairs: Vec<SignalPair> = batch.iter().map(|&i| pairs[i].clone()).collect();
            let batch_probes: Vec<LcProbe> = batch.iter().map(|&i| probes[i].clone()).collect();
            let (_, g_pc) = loss_pc_grad(&net, &batch_pairs, cfg.pc_similarity)?;
            let (_, g_lc) = loss_lc_grad(&net, &batch_probes)?;
            step += 1;
            for k in 0..net.theta.len() {
                let g = a * g_pc[k] + (1.0 - a) * g_lc[k];
                if cfg.adaptive {
                    // momentum + per-parameter second-moment scaling with
                    // bias correction
                    velocity[k] = cfg.momentum * velocity[k] + (1.0 - cfg.momentum) * g;
                    sq[k] = 0.999 * sq[k] + 0.001 * g * g;
                    let v_hat = velocity[k] / (1.0 - cfg.momentum.powi(step as i32));
                    let s_hat = sq[k] / (1.0 - 0.999_f64.powi(step as i32));
                    net.theta[k] -= cfg.lr * v_hat / (s_hat.sqrt() + 1e-8);
                } else {
                    velocity[k] = cfg.momentum * velocity[k] - cfg.lr * g;
                    net.theta[k] += velocity[k];
                }
            }
        }
        let l_pc = loss_pc(&net, pairs, cfg.pc_similarity)?;
        let l_lc = loss_lc(&net, &probes)?;
        let l_obj = loss_obj(l_pc, l_lc, a);
        if !l_obj.is_finite() || net.theta.iter().any(|t| !t.is_finite()) {
            log.diverged_at = Some(epoch);
            return Ok((last_good, log));
        }
        last_good = net.clone();
        log.rows.push(TrainLogRow {
            epoch,
            alpha: a,
            loss_pc: l_pc,
            loss_lc: l_lc,
            loss_obj: l_obj,
        });
    }
    Ok((net, log))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainerCheckpoint {
    pub version: u32,
    pub net: ExplainerNet,
    pub config: ExplainerTrainConfig,
    pub log: TrainLog,
}

impl ExplainerCheckpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let ck: Self = serde_json::from_reader(std::io::BufReader::new(file))?;
        if ck.version != EXPLAINER_CHECKPOINT_VERSION {
            return Err(Error::Unsupported(format!(
                "explainer checkpoint version {} (expected {})",
                ck.version, EXPLAINER_CHECKPOINT_VERSION
            )));
        }
        Ok(ck)
    }
}

//! Removal/insertion operators and index-set samplers consumed by every
//! metric and loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::math::Permutation;
use crate::Real;

/// A distinct, in-range subset of element indices. Stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexSet {
    indices: Vec<usize>,
}

impl IndexSet {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(Error::Invalid(format!("duplicate index {}", w[0])));
            }
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        Ok(Self { indices })
    }

    pub fn empty() -> Self {
        Self { indices: vec![] }
    }

    pub fn full(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
        }
    }

    pub fn singleton(i: usize) -> Self {
        Self { indices: vec![i] }
    }

    pub fn from_bitmask(mask: u32, n: usize) -> Self {
        Self {
            indices: (0..n).filter(|i| mask & (1 << i) != 0).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn complement(&self, n: usize) -> Self {
        Self {
            indices: (0..n).filter(|i| !self.contains(*i)).collect(),
        }
    }
}

/// How removed elements are replaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RemovalStrategy {
    /// Replace removed blocks with the corresponding blocks of a baseline
    /// instance.
    BaselineReplace { baseline: Instance },
    /// Replace each removed scalar with a fixed per-feature value
    /// (typically the per-feature training mean).
    MeanReplace { means: Vec<Real> },
    /// Replace removed scalars with seeded Gaussian noise; the draw depends
    /// only on (seed, flat index), so parallel evaluation order is
    /// irrelevant.
    GaussianNoise { sigma: Real, seed: u64 },
}

impl RemovalStrategy {
    pub fn zero_baseline(n: usize, d: usize) -> Self {
        RemovalStrategy::BaselineReplace {
            baseline: Instance::new(n, d, vec![0.0; n * d]).expect("valid zero baseline"),
        }
    }

    /// The fully-removed instance, used by insertion-style metrics.
    pub fn baseline_of(&self, x: &Instance) -> Result<Instance> {
        remove(x, &IndexSet::full(x.n()), self)
    }

    fn check(&self, x: &Instance) -> Result<()> {
        match self {
            RemovalStrategy::BaselineReplace { baseline } => {
                if !baseline.same_shape(x) {
                    return Err(Error::ShapeMismatch(
                        "baseline shape differs from instance".into(),
                    ));
                }
            }
            RemovalStrategy::MeanReplace { means } => {
                if means.len() != x.values().len() {
                    return Err(Error::ShapeMismatch(format!(
                        "means length {} vs {} values",
                        means.len(),
                        x.values().len()
                    )));
                }
            }
            RemovalStrategy::GaussianNoise { sigma, .. } => {
                if *sigma <= 0.0 {
                    return Err(Error::OutOfRange {
                        name: "sigma",
                        value: *sigma,
                    });
                }
            }
        }
        Ok(())
    }
}

/// `x` with the elements at `set` removed per strategy. Never mutates `x`.
pub fn remove(x: &Instance, set: &IndexSet, strat: &RemovalStrategy) -> Result<Instance> {
    strat.check(x)?;
    if let Some(&i) = set.indices().iter().find(|&&i| i >= x.n()) {
        return Err(Error::IndexOutOfRange { index: i, n: x.n() });
    }
    let d = x.d();
    let mut out = x.clone();
    for &i in set.indices() {
        for j in 0..d {
            let flat = i * d + j;
            out.values_mut()[flat] = match strat {
                RemovalStrategy::BaselineReplace { baseline } => baseline.values()[flat],
                RemovalStrategy::MeanReplace { means } => means[flat],
                RemovalStrategy::GaussianNoise { sigma, seed } => {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15) ^ flat as u64);
                    Normal::new(0.0, *sigma).unwrap().sample(&mut rng)
                }
            };
        }
    }
    Ok(out)
}

/// Baseline with the elements at `set` copied from `x`; the identity
/// `insert(x°, x, I) = remove(x, complement(I))` holds under baseline
/// replacement.
pub fn insert(baseline: &Instance, x: &Instance, set: &IndexSet) -> Result<Instance> {
    if !baseline.same_shape(x) {
        return Err(Error::ShapeMismatch("baseline shape differs".into()));
    }
    if let Some(&i) = set.indices().iter().find(|&&i| i >= x.n()) {
        return Err(Error::IndexOutOfRange { index: i, n: x.n() });
    }
    let d = x.d();
    let mut out = baseline.clone();
    for &i in set.indices() {
        for j in 0..d {
            out.values_mut()[i * d + j] = x.values()[i * d + j];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetMode {
    /// Each index included independently with probability 1/2.
    UniformPowerset,
    /// Every subset of `[n]`, including the empty and full sets.
    AllSubsets,
    /// `{0}, {1}, ..., {n-1}`.
    Singletons,
    /// Cumulative prefixes of a permutation: top-1, top-2, ..., top-n.
    PrefixOf(Permutation),
}

/// Deterministic subset families for the metrics and losses.
pub fn sample_subsets(n: usize, count: usize, seed: u64, mode: &SubsetMode) -> Result<Vec<IndexSet>> {
    match mode {
        SubsetMode::AllSubsets => {
            if n > 16 {
                return Err(Error::OutOfRange {
                    name: "n (all_subsets)",
                    value: n as f64,
                });
            }
            Ok((0u32..(1 << n)).map(|m| IndexSet::from_bitmask(m, n)).collect())
        }
        SubsetMode::Singletons => Ok((0..n).map(IndexSet::singleton).collect()),
        SubsetMode::PrefixOf(perm) => {
            if perm.len() != n {
                return Err(Error::LengthMismatch {
                    left: perm.len(),
                    right: n,
                });
            }
            (1..=n)
                .map(|k| IndexSet::new(perm.prefix(k).to_vec(), n))
                .collect()
        }
        SubsetMode::UniformPowerset => {
            if n > 30 {
                return Err(Error::OutOfRange {
                    name: "n (uniform_powerset)",
                    value: n as f64,
                });
            }
            if count < 1 {
                return Err(Error::OutOfRange {
                    name: "count",
                    value: count as f64,
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..count)
                .map(|_| {
                    let indices = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
                    IndexSet::new(indices, n).unwrap()
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(vals: &[Real]) -> Instance {
        Instance::from_row(vals.to_vec()).unwrap()
    }

    fn zero_strat(n: usize) -> RemovalStrategy {
        RemovalStrategy::zero_baseline(n, 1)
    }

    #[test]
    fn remove_empty_set_is_identity() {
        let x = row(&[1.0, 2.0, 3.0]);
        let out = remove(&x, &IndexSet::empty(), &zero_strat(3)).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn remove_full_set_gives_baseline() {
        let x = row(&[1.0, 2.0, 3.0]);
        let out = remove(&x, &IndexSet::full(3), &zero_strat(3)).unwrap();
        assert_eq!(out.values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn remove_single_index() {
        let x = row(&[1.0, 2.0, 3.0]);
        let out = remove(&x, &IndexSet::singleton(1), &zero_strat(3)).unwrap();
        assert_eq!(out.values(), &[1.0, 0.0, 3.0]);
        assert_eq!(x.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn remove_out_of_range() {
        let x = row(&[1.0, 2.0]);
        let set = IndexSet {
            indices: vec![5],
        };
        assert!(remove(&x, &set, &zero_strat(2)).is_err());
    }

    #[test]
    fn insert_boundaries() {
        let x = row(&[1.0, 2.0, 3.0]);
        let base = row(&[0.0, 0.0, 0.0]);
        assert_eq!(insert(&base, &x, &IndexSet::empty()).unwrap(), base);
        assert_eq!(insert(&base, &x, &IndexSet::full(3)).unwrap(), x);
    }

    #[test]
    fn insert_equals_remove_on_complement() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let n = rng.gen_range(2..8usize);
            let x = row(&(0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>());
            let base = row(&vec![0.0; n]);
            let mask: u32 = rng.gen_range(0..(1 << n));
            let set = IndexSet::from_bitmask(mask, n);
            let strat = RemovalStrategy::BaselineReplace {
                baseline: base.clone(),
            };
            let inserted = insert(&base, &x, &set).unwrap();
            let removed = remove(&x, &set.complement(n), &strat).unwrap();
            assert_eq!(inserted, removed);
        }
    }

    #[test]
    fn disjoint_removals_commute() {
        let x = row(&[1.0, 2.0, 3.0, 4.0]);
        let strat = zero_strat(4);
        let a = IndexSet::new(vec![0, 2], 4).unwrap();
        let b = IndexSet::new(vec![1], 4).unwrap();
        let ab = remove(&remove(&x, &a, &strat).unwrap(), &b, &strat).unwrap();
        let ba = remove(&remove(&x, &b, &strat).unwrap(), &a, &strat).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn gaussian_noise_reproducible() {
        let x = row(&[1.0, 2.0, 3.0]);
        let strat = RemovalStrategy::GaussianNoise {
            sigma: 0.5,
            seed: 99,
        };
        let a = remove(&x, &IndexSet::new(vec![0, 2], 3).unwrap(), &strat).unwrap();
        let b = remove(&x, &IndexSet::new(vec![0, 2], 3).unwrap(), &strat).unwrap();
        assert_eq!(a, b);
        // order independence: removing {0} alone produces the same value at 0
        let c = remove(&x, &IndexSet::singleton(0), &strat).unwrap();
        assert_eq!(a.values()[0], c.values()[0]);
    }

    #[test]
    fn all_subsets_n3() {
        let sets = sample_subsets(3, 0, 0, &SubsetMode::AllSubsets).unwrap();
        assert_eq!(sets.len(), 8);
        assert!(sets.contains(&IndexSet::empty()));
        assert!(sets.contains(&IndexSet::full(3)));
    }

    #[test]
    fn all_subsets_guard() {
        assert!(sample_subsets(17, 0, 0, &SubsetMode::AllSubsets).is_err());
    }

    #[test]
    fn singletons_n4() {
        let sets = sample_subsets(4, 0, 0, &SubsetMode::Singletons).unwrap();
        assert_eq!(
            sets,
            (0..4).map(IndexSet::singleton).collect::<Vec<_>>()
        );
    }

    #[test]
    fn uniform_powerset_mean_size() {
        let sets = sample_subsets(4, 4000, 123, &SubsetMode::UniformPowerset).unwrap();
        let mean = sets.iter().map(|s| s.len() as f64).sum::<f64>() / 4000.0;
        assert!((mean - 2.0).abs() < 0.1, "mean subset size {mean}");
    }

    #[test]
    fn uniform_powerset_deterministic() {
        let a = sample_subsets(6, 50, 5, &SubsetMode::UniformPowerset).unwrap();
        let b = sample_subsets(6, 50, 5, &SubsetMode::UniformPowerset).unwrap();
        assert_eq!(a, b);
    }
}

//! Scalar-generic numeric primitives: correlations with tie handling,
//! quantiles, and the two explanation-form conversions.

use std::fmt;
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating-point scalar the numeric core is generic over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + AddAssign + Sum<Self> + fmt::Debug + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

fn check_pair<F: Scalar>(a: &[F], b: &[F]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::TooFewValues {
            min: 2,
            got: a.len(),
        });
    }
    Ok(())
}

/// Pearson correlation coefficient. Zero variance on either side yields
/// exactly 0 so degenerate explanations score as uninformative.
pub fn pearson<F: Scalar>(a: &[F], b: &[F]) -> Result<F> {
    check_pair(a, b)?;
    let n = F::from_usize(a.len()).unwrap();
    let mean_a = a.iter().copied().sum::<F>() / n;
    let mean_b = b.iter().copied().sum::<F>() / n;
    let mut cov = F::zero();
    let mut var_a = F::zero();
    let mut var_b = F::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == F::zero() || var_b == F::zero() {
        return Ok(F::zero());
    }
    let r = cov / (var_a * var_b).sqrt();
    // clamp numeric overshoot
    Ok(r.max(-F::one()).min(F::one()))
}

/// Fractional ranks (1-based), ties get the mean of their rank range.
pub fn fractional_ranks<F: Scalar>(values: &[F]) -> Vec<F> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![F::zero(); n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // ranks start+1 ..= end, averaged
        let mean_rank = F::from_usize(start + 1 + end).unwrap() / F::from_usize(2).unwrap();
        for &i in &idx[start..end] {
            ranks[i] = mean_rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation: Pearson of fractional ranks.
pub fn spearman<F: Scalar>(a: &[F], b: &[F]) -> Result<F> {
    check_pair(a, b)?;
    pearson(&fractional_ranks(a), &fractional_ranks(b))
}

/// Linear-interpolation quantile of the sorted values, `p` in `[0, 1]`.
pub fn quantile<F: Scalar>(values: &[F], p: F) -> Result<F> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    if p < F::zero() || p > F::one() {
        return Err(Error::OutOfRange {
            name: "p",
            value: p.to_f64().unwrap_or(f64::NAN),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = sorted.len();
    if n == 1 {
        return Ok(sorted[0]);
    }
    let pos = p * F::from_usize(n - 1).unwrap();
    let lo = pos.floor().to_usize().unwrap().min(n - 2);
    let frac = pos - F::from_usize(lo).unwrap();
    Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

/// An ordering of `n` elements by non-increasing importance. Indices are
/// 0-based internally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n {
                return Err(Error::InvalidPermutation(format!(
                    "index {i} out of range for n = {n}"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidPermutation(format!("duplicate index {i}")));
            }
            seen[i] = true;
        }
        Ok(Self { order })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// The reversed ordering (least important first).
    pub fn reversed(&self) -> Self {
        let mut order = self.order.clone();
        order.reverse();
        Self { order }
    }

    /// The first `k` indices as a set.
    pub fn prefix(&self, k: usize) -> &[usize] {
        &self.order[..k.min(self.order.len())]
    }

    /// All `n!` permutations of `n` elements, lexicographic. Guarded for
    /// brute-force use only.
    pub fn enumerate(n: usize) -> Result<Vec<Permutation>> {
        if n == 0 || n > 8 {
            return Err(Error::OutOfRange {
                name: "n",
                value: n as f64,
            });
        }
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(n);
        let mut used = vec![false; n];
        fn rec(n: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Permutation>) {
            if cur.len() == n {
                out.push(Permutation { order: cur.clone() });
                return;
            }
            for i in 0..n {
                if !used[i] {
                    used[i] = true;
                    cur.push(i);
                    rec(n, cur, used, out);
                    cur.pop();
                    used[i] = false;
                }
            }
        }
        rec(n, &mut cur, &mut used, &mut out);
        Ok(out)
    }
}

/// Descending argsort of a saliency vector; ties break by ascending index.
pub fn argsort_desc<F: Scalar>(scores: &[F]) -> Result<Permutation> {
    if scores.is_empty() {
        return Err(Error::Empty);
    }
    for (i, s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("score at index {i}")));
        }
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .unwrap()
            .then(i.cmp(&j))
    });
    Ok(Permutation { order })
}

/// Converts a permutation into a rank-based saliency vector: the element at
/// position `i` of the ordering receives score `(n - i) / n`, so scores lie
/// in `(0, 1]` and argsort recovers the permutation.
pub fn perm_to_saliency<F: Scalar>(perm: &Permutation) -> Vec<F> {
    let n = perm.len();
    let nf = F::from_usize(n).unwrap();
    let mut scores = vec![F::zero(); n];
    for (i, &elem) in perm.order().iter().enumerate() {
        scores[elem] = F::from_usize(n - i).unwrap() / nf;
    }
    scores
}

/// Cosine similarity with the degenerate convention: two zero-norm vectors
/// are identical (1), a zero-norm against a nonzero vector scores 0.
pub fn cosine<F: Scalar>(a: &[F], b: &[F]) -> Result<F> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let dot = a.iter().zip(b).map(|(&x, &y)| x * y).sum::<F>();
    let na = a.iter().map(|&x| x * x).sum::<F>().sqrt();
    let nb = b.iter().map(|&x| x * x).sum::<F>().sqrt();
    if na == F::zero() && nb == F::zero() {
        return Ok(F::one());
    }
    if na == F::zero() || nb == F::zero() {
        return Ok(F::zero());
    }
    Ok(dot / (na * nb))
}

//! Multilinear Fourier analysis over finite product spaces.
//!
//! A multilinear function is expanded in the orthonormal basis
//! `χ_S(x) = ∏_{i∈S} (x_i − E X_i)/sd(X_i)`. Coefficients are indexed by the
//! bitmask of `S` (bit `i` ↔ coordinate `i`).

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::product_space::{check_cap, enumeration_cap, ProductDomain};
use crate::{EXACT_TOL, USER_TOL};

/// Largest `n` for which coefficients are stored densely.
pub const DENSE_MAX_N: usize = 26;

/// Values of a function on every point of a [`ProductDomain`].
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionTable {
    domain: Arc<ProductDomain>,
    values: Vec<f64>,
}

impl FunctionTable {
    pub fn new(domain: Arc<ProductDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.size() {
            return Err(Error::domain(format!(
                "table has {} values but the domain has {} points",
                values.len(),
                domain.size()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("table value at index {i} is not finite")));
        }
        Ok(FunctionTable { domain, values })
    }

    /// Tabulates `f` at every point of `domain`.
    pub fn from_fn(domain: Arc<ProductDomain>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..domain.size()).map(|i| f(&domain.point(i))).collect();
        FunctionTable { domain, values }
    }

    pub fn domain(&self) -> &Arc<ProductDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.domain.n()
    }

    /// Value at a point given by coordinate values.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        Ok(self.values[self.domain.locate(point)?])
    }

    pub fn mean(&self) -> f64 {
        self.expect(|v| v)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|v| (v - m) * (v - m)).max(0.0)
    }

    /// `E[φ(f)]` under the product law.
    pub fn expect(&self, phi: impl Fn(f64) -> f64) -> f64 {
        self.domain
            .point_probs()
            .iter()
            .zip(&self.values)
            .map(|(p, &v)| p * phi(v))
            .sum()
    }

    /// `E[f·g]` for two tables on the same domain.
    pub fn inner(&self, other: &FunctionTable) -> f64 {
        self.domain
            .point_probs()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(p, (a, b))| p * a * b)
            .sum()
    }

    /// Pointwise `φ(f)`.
    pub fn map(&self, phi: impl Fn(f64) -> f64) -> FunctionTable {
        FunctionTable {
            domain: self.domain.clone(),
            values: self.values.iter().map(|&v| phi(v)).collect(),
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &FunctionTable, b: f64) -> FunctionTable {
        FunctionTable {
            domain: self.domain.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    /// True when some fiber along coordinate `i` is non-constant beyond
    /// `tol` (relative to the table's largest magnitude).
    pub fn depends_on(&self, i: usize, tol: f64) -> bool {
        let scale = self.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let stride = self.domain.strides()[i];
        let k = self.domain.coord(i).len();
        (0..self.values.len())
            .filter(|&idx| self.domain.digit(idx, i) == 0)
            .any(|base| (1..k).any(|a| (self.values[base + a * stride] - self.values[base]).abs() > tol * scale))
    }

    /// Relabels coordinates: coordinate `j` of the result is coordinate
    /// `perm[j]` of `self`.
    pub fn permute_coordinates(&self, perm: &[usize]) -> Result<FunctionTable> {
        let n = self.n();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::domain("not a permutation of the coordinates"));
        }
        let coords = perm.iter().map(|&p| self.domain.coord(p).clone()).collect();
        let domain = Arc::new(ProductDomain::new(coords)?);
        let mut values = vec![0.0; self.values.len()];
        let mut old = vec![0; n];
        for (idx, v) in values.iter_mut().enumerate() {
            for (j, &p) in perm.iter().enumerate() {
                old[p] = domain.digit(idx, j);
            }
            *v = self.values[self.domain.index(&old)];
        }
        Ok(FunctionTable { domain, values })
    }
}

/// Fourier coefficients, dense up to [`DENSE_MAX_N`] coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    Dense(Vec<f64>),
    Sparse(HashMap<u64, f64>),
}

/// The expansion `f = Σ_S f̂(S) χ_S`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierExpansion {
    domain: Arc<ProductDomain>,
    coeffs: Coefficients,
}

/// One nonzero coefficient, for serialization.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CoefficientEntry {
    pub set: Vec<usize>,
    pub value: f64,
}

/// Mask iteration helper: coordinates in `mask`.
pub fn mask_members(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask >> i & 1 == 1).collect()
}

/// Expands `f` in the orthonormal multilinear basis.
///
/// Each coordinate axis is projected onto `span{1, x̃_i}`; on binary
/// supports this is an in-place butterfly over the table, so the uniform ±1
/// cube costs `O(N log N)`. When some support has more than two points the
/// result is checked by reconstructing `f`; a residual above `1e-6`
/// (relative to `max |f|`) means `f` is not multilinear.
pub fn expand(f: &FunctionTable) -> Result<FourierExpansion> {
    let domain = f.domain.clone();
    let n = domain.n();
    if n > DENSE_MAX_N {
        return Err(Error::Capacity {
            states: 1u128 << n,
            cap: 1 << DENSE_MAX_N,
        });
    }
    check_cap(domain.size() as u128, enumeration_cap())?;
    let coeffs = if domain.is_binary() {
        let mut v = f.values.clone();
        butterfly(&domain, &mut v);
        v
    } else {
        let c = project_axes(&domain, &f.values);
        let recon = lift_axes(&domain, &c);
        let scale = f.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let (index, residual) = recon
            .iter()
            .zip(&f.values)
            .map(|(r, v)| (r - v).abs())
            .enumerate()
            .fold((0, 0.0), |best, (i, r)| if r > best.1 { (i, r) } else { best });
        if residual > USER_TOL * scale {
            return Err(Error::NotMultilinear { index, residual });
        }
        c
    };
    Ok(FourierExpansion {
        domain,
        coeffs: Coefficients::Dense(coeffs),
    })
}

fn basis_values(domain: &ProductDomain, i: usize) -> (Vec<f64>, Vec<f64>) {
    let c = domain.coord(i);
    let xt = c.support().iter().map(|&x| c.normalize(x)).collect();
    (c.probs().to_vec(), xt)
}

fn butterfly(domain: &ProductDomain, v: &mut [f64]) {
    for i in 0..domain.n() {
        let (p, xt) = basis_values(domain, i);
        let (w0, w1) = (p[0] * xt[0], p[1] * xt[1]);
        let h = 1usize << i;
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x0, x1) = (*a, *b);
                *a = p[0] * x0 + p[1] * x1;
                *b = w0 * x0 + w1 * x1;
            }
        }
    }
}

/// Reduces every axis from `k_i` points to the coefficients of `{1, x̃_i}`.
fn project_axes(domain: &ProductDomain, values: &[f64]) -> Vec<f64> {
    let mut cur = values.to_vec();
    let mut stride = 1;
    for i in 0..domain.n() {
        let (p, xt) = basis_values(domain, i);
        let k = p.len();
        let blocks = cur.len() / (stride * k);
        let mut next = vec![0.0; blocks * 2 * stride];
        for o in 0..blocks {
            for j in 0..stride {
                let (mut c0, mut c1) = (0.0, 0.0);
                for a in 0..k {
                    let v = cur[o * k * stride + a * stride + j];
                    c0 += p[a] * v;
                    c1 += p[a] * xt[a] * v;
                }
                next[o * 2 * stride + j] = c0;
                next[o * 2 * stride + stride + j] = c1;
            }
        }
        cur = next;
        stride *= 2;
    }
    cur
}

/// Inverse of [`project_axes`]: evaluates `Σ_S c_S χ_S` on the full domain.
fn lift_axes(domain: &ProductDomain, coeffs: &[f64]) -> Vec<f64> {
    let n = domain.n();
    let mut cur = coeffs.to_vec();
    // Axes are lifted from the last to the first so that the strides of the
    // remaining binary axes stay powers of two.
    for i in (0..n).rev() {
        let (_, xt) = basis_values(domain, i);
        let k = xt.len();
        let stride = 1usize << i;
        let blocks = cur.len() / (2 * stride);
        let mut next = vec![0.0; blocks * k * stride];
        for o in 0..blocks {
            for j in 0..stride {
                let c0 = cur[o * 2 * stride + j];
                let c1 = cur[o * 2 * stride + stride + j];
                for a in 0..k {
                    next[o * k * stride + a * stride + j] = c0 + c1 * xt[a];
                }
            }
        }
        cur = next;
    }
    cur
}

impl FourierExpansion {
    /// Builds an expansion from explicit coefficients.
    pub fn from_coefficients(domain: Arc<ProductDomain>, coeffs: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        let n = domain.n();
        let mut map = HashMap::new();
        for (mask, v) in coeffs {
            if n < 64 && mask >> n != 0 {
                return Err(Error::domain(format!("subset mask {mask:#b} exceeds {n} coordinates")));
            }
            *map.entry(mask).or_insert(0.0) += v;
        }
        let coeffs = if n <= DENSE_MAX_N {
            let mut dense = vec![0.0; 1 << n];
            for (m, v) in map {
                dense[m as usize] = v;
            }
            Coefficients::Dense(dense)
        } else {
            Coefficients::Sparse(map)
        };
        Ok(FourierExpansion { domain, coeffs })
    }

    pub fn domain(&self) -> &Arc<ProductDomain> {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.domain.n()
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    /// `f̂(S)` for the subset with bitmask `mask`.
    pub fn coefficient(&self, mask: u64) -> f64 {
        match &self.coeffs {
            Coefficients::Dense(v) => v.get(mask as usize).copied().unwrap_or(0.0),
            Coefficients::Sparse(m) => m.get(&mask).copied().unwrap_or(0.0),
        }
    }

    /// All `(mask, f̂(S))` pairs with a nonzero coefficient, by mask.
    pub fn nonzero(&self) -> Vec<(u64, f64)> {
        let mut out: Vec<(u64, f64)> = match &self.coeffs {
            Coefficients::Dense(v) => v
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(m, c)| (m as u64, *c))
                .collect(),
            Coefficients::Sparse(m) => m.iter().filter(|(_, c)| **c != 0.0).map(|(m, c)| (*m, *c)).collect(),
        };
        out.sort_by_key(|(m, _)| *m);
        out
    }

    /// Nonzero coefficients with `|f̂(S)| > tol`, as subsets.
    pub fn entries(&self, tol: f64) -> Vec<CoefficientEntry> {
        self.nonzero()
            .into_iter()
            .filter(|(_, v)| v.abs() > tol)
            .map(|(m, value)| CoefficientEntry {
                set: mask_members(m),
                value,
            })
            .collect()
    }

    fn weighted_sum(&self, weight: impl Fn(u64) -> f64) -> f64 {
        match &self.coeffs {
            Coefficients::Dense(v) => v.iter().enumerate().map(|(m, c)| weight(m as u64) * c * c).sum(),
            Coefficients::Sparse(map) => map.iter().map(|(m, c)| weight(*m) * c * c).sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.coefficient(0)
    }

    /// `E[f²] = Σ_S f̂(S)²`.
    pub fn second_moment(&self) -> f64 {
        self.weighted_sum(|_| 1.0)
    }

    /// `Var f = Σ_{S≠∅} f̂(S)²`.
    pub fn variance(&self) -> f64 {
        self.weighted_sum(|m| if m == 0 { 0.0 } else { 1.0 })
    }

    /// `Σ_{|S|=k} f̂(S)²` for `k = 0..=n`.
    pub fn degree_profile(&self) -> Vec<f64> {
        let mut prof = vec![0.0; self.n() + 1];
        for (m, c) in self.nonzero() {
            prof[m.count_ones() as usize] += c * c;
        }
        prof
    }

    /// `W(D) = Σ_{1≤|S|≤D} f̂(S)²` for `D = 0..=n` (unnormalized).
    pub fn cumulative_low_degree_mass(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.degree_profile()
            .iter()
            .enumerate()
            .map(|(k, w)| {
                if k > 0 {
                    acc += w;
                }
                acc
            })
            .collect()
    }

    /// Largest `|S|` with `|f̂(S)| > tol`.
    pub fn degree(&self, tol: f64) -> usize {
        self.nonzero()
            .iter()
            .filter(|(_, c)| c.abs() > tol)
            .map(|(m, _)| m.count_ones() as usize)
            .max()
            .unwrap_or(0)
    }

    /// `d(f, Lin)`: the fraction of variance at degree ≥ 2, or 0 for
    /// constant `f`.
    pub fn distance_to_lin(&self) -> f64 {
        let var = self.variance();
        if var <= 0.0 {
            return 0.0;
        }
        self.weighted_sum(|m| if m.count_ones() >= 2 { 1.0 } else { 0.0 }) / var
    }

    /// `(1/Var f) Σ_{S≠∅} (∏_{i∈S} ρ_i) f̂(S)²`, which equals
    /// `Corr(f(X), f(Y))` whenever `Corr(X_i, Y_i) = ρ_i` and the pairs are
    /// independent with matching first and second moments.
    pub fn stability(&self, rhos: &[f64]) -> Result<f64> {
        let n = self.n();
        if rhos.len() != n {
            return Err(Error::Arity {
                expected: n,
                got: rhos.len(),
            });
        }
        let var = self.variance();
        if var <= 0.0 {
            return Ok(0.0);
        }
        let total = match &self.coeffs {
            Coefficients::Dense(v) => {
                let mut prod = vec![1.0; v.len()];
                let mut s = 0.0;
                for m in 1..v.len() {
                    let low = m.trailing_zeros() as usize;
                    prod[m] = prod[m & (m - 1)] * rhos[low];
                    s += prod[m] * v[m] * v[m];
                }
                s
            }
            Coefficients::Sparse(map) => map
                .iter()
                .filter(|(m, _)| **m != 0)
                .map(|(m, c)| mask_members(*m).iter().map(|&i| rhos[i]).product::<f64>() * c * c)
                .sum(),
        };
        Ok(total / var)
    }

    /// Stability with the same ρ on every coordinate.
    pub fn stability_uniform(&self, rho: f64) -> f64 {
        self.stability(&vec![rho; self.n()]).expect("arity matches")
    }

    /// Maximum correlation of `f` with a multilinear function of degree at
    /// most `d`: `sqrt(Σ_{1≤|S|≤d} f̂(S)² / Var f)`.
    pub fn low_degree_correlation(&self, d: usize) -> Result<f64> {
        if d < 1 || d > self.n() {
            return Err(Error::domain(format!("degree {d} outside 1..={}", self.n())));
        }
        let var = self.variance();
        if var <= 0.0 {
            return Ok(0.0);
        }
        let mass = self.weighted_sum(|m| {
            let k = m.count_ones() as usize;
            if k >= 1 && k <= d {
                1.0
            } else {
                0.0
            }
        });
        Ok((mass / var).sqrt().min(1.0))
    }

    /// Checks `M ≤ ρ^{-D/2} sqrt(Stab_ρ(f))`.
    pub fn check_low_degree_bound(&self, d: usize, rho: f64) -> Result<LowDegreeReport> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::domain(format!("rho = {rho} must lie in (0, 1)")));
        }
        let m = self.low_degree_correlation(d)?;
        let stab = self.stability_uniform(rho).max(0.0);
        let bound = rho.powf(-(d as f64) / 2.0) * stab.sqrt();
        let slack = bound - m;
        Ok(LowDegreeReport {
            degree: d,
            rho,
            m,
            stability: stab,
            bound,
            slack,
            holds: slack >= -EXACT_TOL,
            tolerance: EXACT_TOL,
        })
    }

    /// Checks the single-component bound `Stab ≤ (1−ε)ρ + ερ²` with
    /// `ε = d(f, Lin)` and a common ρ on every coordinate.
    pub fn check_lemma_multilinear(&self, rho: f64) -> Result<LemmaReport> {
        self.check_lemma_multilinear_hetero(&vec![rho; self.n()])
    }

    /// As [`check_lemma_multilinear`](Self::check_lemma_multilinear) with
    /// per-coordinate correlations; the bound uses `ρ = max_i ρ_i`.
    pub fn check_lemma_multilinear_hetero(&self, rhos: &[f64]) -> Result<LemmaReport> {
        if let Some(r) = rhos.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::domain(format!("rho = {r} is outside [0, 1]")));
        }
        let stability = self.stability(rhos)?;
        let rho = rhos.iter().copied().fold(0.0, f64::max);
        let epsilon = self.distance_to_lin();
        let bound = (1.0 - epsilon) * rho + epsilon * rho * rho;
        let uniform = rhos.iter().all(|&r| r == rho);
        let floor = (uniform && self.degree(EXACT_TOL) <= 2).then_some((1.0 - epsilon) * rho);
        Ok(LemmaReport {
            rho,
            stability,
            epsilon,
            bound,
            slack: bound - stability,
            holds: stability <= bound + EXACT_TOL,
            floor,
            tolerance: EXACT_TOL,
        })
    }

    /// Evaluates `Σ_S f̂(S) χ_S` on every point of the domain.
    pub fn reconstruct(&self) -> Result<FunctionTable> {
        let n = self.n();
        if n > DENSE_MAX_N {
            return Err(Error::Capacity {
                states: 1u128 << n,
                cap: 1 << DENSE_MAX_N,
            });
        }
        let dense: Vec<f64> = (0..1u64 << n).map(|m| self.coefficient(m)).collect();
        FunctionTable::new(self.domain.clone(), lift_axes(&self.domain, &dense))
    }
}

/// Result of [`FourierExpansion::check_low_degree_bound`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowDegreeReport {
    pub degree: usize,
    pub rho: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub stability: f64,
    pub bound: f64,
    pub slack: f64,
    pub holds: bool,
    pub tolerance: f64,
}

/// Result of [`FourierExpansion::check_lemma_multilinear`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub rho: f64,
    pub stability: f64,
    pub epsilon: f64,
    pub bound: f64,
    pub slack: f64,
    pub holds: bool,
    /// `(1−ε)ρ`, reported for uniform ρ and degree ≤ 2.
    pub floor: Option<f64>,
    pub tolerance: f64,
}

//! Finite product probability spaces and coordinatewise couplings.
//!
//! A [`ProductSpace`] is the product of `n` independent [`CorrelatedPair`]s
//! `(X_i, Y_i)`. Its x-side and y-side marginal products are exposed as
//! [`ProductDomain`]s, which index function tables.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamRng, BLOCK_SIZE};

/// Default cap on the number of joint states visited by exact enumeration.
pub const DEFAULT_CAP: u64 = 1 << 26;

/// Environment variable overriding [`DEFAULT_CAP`].
pub const CAP_ENV: &str = "HIERSTAB_CAP";

const PROB_TOL: f64 = 1e-12;

/// The enumeration cap in effect: `HIERSTAB_CAP` when set to a positive
/// integer (or `2^k`), otherwise [`DEFAULT_CAP`].
pub fn enumeration_cap() -> u64 {
    std::env::var(CAP_ENV)
        .ok()
        .and_then(|s| parse_cap(&s))
        .unwrap_or(DEFAULT_CAP)
}

/// Parses a cap written as a positive integer or `2^k`.
pub fn parse_cap(s: &str) -> Option<u64> {
    let s = s.trim();
    if let Some(exp) = s.strip_prefix("2^") {
        let e: u32 = exp.parse().ok()?;
        return 1u64.checked_shl(e);
    }
    s.parse().ok().filter(|&c| c > 0)
}

pub(crate) fn check_cap(states: u128, cap: u64) -> Result<()> {
    if states > cap as u128 {
        Err(Error::Capacity { states, cap })
    } else {
        Ok(())
    }
}

/// Key used to merge real values that agree to 12 decimal places.
pub(crate) fn value_key(v: f64) -> i128 {
    (v * 1e12).round() as i128
}

pub(crate) fn key_value(k: i128) -> f64 {
    k as f64 / 1e12
}

/// A real-valued law with finite support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteDistribution {
    support: Vec<f64>,
    probs: Vec<f64>,
    mean: f64,
    variance: f64,
}

impl FiniteDistribution {
    /// Validates and builds a distribution. The support must be strictly
    /// increasing and every probability positive, summing to one.
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::domain("empty support"));
        }
        if support.len() != probs.len() {
            return Err(Error::domain(format!(
                "support has {} values but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if let Some(v) = support.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite support value {v}")));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("support must be strictly increasing"));
        }
        if let Some(p) = probs.iter().find(|&&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::domain(format!("probability {p} is not positive")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::domain(format!("probabilities sum to {total}, not 1")));
        }
        let mean = support.iter().zip(&probs).map(|(x, p)| x * p).sum::<f64>();
        let variance = support
            .iter()
            .zip(&probs)
            .map(|(x, p)| p * (x - mean).powi(2))
            .sum::<f64>();
        Ok(FiniteDistribution {
            support,
            probs,
            mean,
            variance,
        })
    }

    pub fn uniform(support: Vec<f64>) -> Result<Self> {
        let k = support.len();
        FiniteDistribution::new(support, vec![1.0 / k as f64; k])
    }

    /// The uniform law on `{-1, +1}`.
    pub fn fair_bit() -> Self {
        FiniteDistribution {
            support: vec![-1.0, 1.0],
            probs: vec![0.5, 0.5],
            mean: 0.0,
            variance: 1.0,
        }
    }

    /// Builds the law of a weighted list of values, merging values that agree
    /// to 12 decimal places and dropping zero weights.
    pub fn from_weighted(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut merged = std::collections::BTreeMap::<i128, f64>::new();
        for (v, w) in atoms {
            if w > 0.0 {
                *merged.entry(value_key(v)).or_insert(0.0) += w;
            }
        }
        let total: f64 = merged.values().sum();
        let (support, probs) = merged.into_iter().map(|(k, w)| (key_value(k), w / total)).unzip();
        FiniteDistribution::new(support, probs)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// A single-point law: every correlation involving it is defined as 0.
    pub fn is_degenerate(&self) -> bool {
        self.support.len() == 1
    }

    /// `(x - E X) / sd(X)`, or 0 for a degenerate law.
    pub fn normalize(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (x - self.mean) / self.std_dev()
        }
    }

    /// Position of `x` in the support, matching to 12 decimal places.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let key = value_key(x);
        self.support.iter().position(|&s| value_key(s) == key)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.len() == other.len()
            && self
                .support
                .iter()
                .zip(&other.support)
                .all(|(a, b)| (a - b).abs() <= tol)
            && self.probs.iter().zip(&other.probs).all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// The joint law of one coordinate pair `(X_i, Y_i)`.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelatedPair {
    /// Row-major `|supp X| × |supp Y|` probability matrix.
    joint: Vec<f64>,
    x: FiniteDistribution,
    y: FiniteDistribution,
    pearson: f64,
    degenerate: bool,
    #[serde(skip)]
    cdf: Vec<f64>,
    #[serde(skip)]
    maxcorr: OnceLock<f64>,
}

impl PartialEq for CorrelatedPair {
    fn eq(&self, other: &Self) -> bool {
        self.joint == other.joint && self.x == other.x && self.y == other.y
    }
}

impl CorrelatedPair {
    /// Builds a pair from a joint matrix over the given supports; the
    /// marginals are the row and column sums.
    pub fn from_joint(x_support: Vec<f64>, y_support: Vec<f64>, joint: Vec<Vec<f64>>) -> Result<Self> {
        if joint.len() != x_support.len() || joint.iter().any(|r| r.len() != y_support.len()) {
            return Err(Error::domain(format!(
                "joint matrix shape does not match supports {}×{}",
                x_support.len(),
                y_support.len()
            )));
        }
        let rows: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<f64> = (0..y_support.len()).map(|b| joint.iter().map(|r| r[b]).sum()).collect();
        let x = FiniteDistribution::new(x_support, rows)?;
        let y = FiniteDistribution::new(y_support, cols)?;
        CorrelatedPair::with_marginals(x, y, joint.concat())
    }

    /// Builds a pair from explicit marginals and a row-major joint, checking
    /// that row and column sums reproduce the marginals.
    pub fn with_marginals(x: FiniteDistribution, y: FiniteDistribution, joint: Vec<f64>) -> Result<Self> {
        let (kx, ky) = (x.len(), y.len());
        if joint.len() != kx * ky {
            return Err(Error::domain(format!(
                "joint has {} entries, expected {}",
                joint.len(),
                kx * ky
            )));
        }
        if let Some(p) = joint.iter().find(|&&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::domain(format!("joint entry {p} is negative")));
        }
        let total: f64 = joint.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::domain(format!("joint sums to {total}, not 1")));
        }
        for a in 0..kx {
            let row: f64 = joint[a * ky..(a + 1) * ky].iter().sum();
            if (row - x.probs()[a]).abs() > PROB_TOL {
                return Err(Error::domain(format!(
                    "row {a} sums to {row}, marginal is {}",
                    x.probs()[a]
                )));
            }
        }
        for b in 0..ky {
            let col: f64 = (0..kx).map(|a| joint[a * ky + b]).sum();
            if (col - y.probs()[b]).abs() > PROB_TOL {
                return Err(Error::domain(format!(
                    "column {b} sums to {col}, marginal is {}",
                    y.probs()[b]
                )));
            }
        }
        let degenerate = x.is_degenerate() || y.is_degenerate();
        let pearson = if degenerate {
            0.0
        } else {
            let mut exy = 0.0;
            for a in 0..kx {
                for b in 0..ky {
                    exy += joint[a * ky + b] * x.support()[a] * y.support()[b];
                }
            }
            ((exy - x.mean() * y.mean()) / (x.std_dev() * y.std_dev())).clamp(-1.0, 1.0)
        };
        let mut acc = 0.0;
        let cdf = joint
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(CorrelatedPair {
            joint,
            x,
            y,
            pearson,
            degenerate,
            cdf,
            maxcorr: OnceLock::new(),
        })
    }

    /// The ρ-resampling coupling: `Y = X` with probability ρ, otherwise an
    /// independent copy of `X`.
    pub fn resampling(dist: &FiniteDistribution, rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::domain(format!("rho = {rho} is outside [0, 1]")));
        }
        let k = dist.len();
        let p = dist.probs();
        let mut joint = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                let diag = if a == b { rho * p[a] } else { 0.0 };
                joint[a * k + b] = diag + (1.0 - rho) * p[a] * p[b];
            }
        }
        CorrelatedPair::with_marginals(dist.clone(), dist.clone(), joint)
    }

    /// The product coupling of two laws.
    pub fn independent(x: &FiniteDistribution, y: &FiniteDistribution) -> Result<Self> {
        let joint = x
            .probs()
            .iter()
            .flat_map(|p| y.probs().iter().map(move |q| p * q))
            .collect();
        CorrelatedPair::with_marginals(x.clone(), y.clone(), joint)
    }

    pub fn x(&self) -> &FiniteDistribution {
        &self.x
    }

    pub fn y(&self) -> &FiniteDistribution {
        &self.y
    }

    pub fn joint(&self, a: usize, b: usize) -> f64 {
        self.joint[a * self.y.len() + b]
    }

    /// The row-major joint matrix.
    pub fn joint_flat(&self) -> &[f64] {
        &self.joint
    }

    pub fn joint_rows(&self) -> Vec<Vec<f64>> {
        self.joint.chunks(self.y.len()).map(<[f64]>::to_vec).collect()
    }

    /// `Corr(X_i, Y_i)`, zero when either side is degenerate.
    pub fn pearson(&self) -> f64 {
        self.pearson
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// The pair with the roles of X and Y swapped.
    pub fn transpose(&self) -> Self {
        let (kx, ky) = (self.x.len(), self.y.len());
        let mut joint = vec![0.0; kx * ky];
        for a in 0..kx {
            for b in 0..ky {
                joint[b * kx + a] = self.joint[a * ky + b];
            }
        }
        CorrelatedPair::with_marginals(self.y.clone(), self.x.clone(), joint)
            .expect("transpose of a valid pair is valid")
    }

    /// Maximal (HGR) correlation, computed on first use and cached.
    pub fn maximal_correlation(&self) -> Result<f64> {
        if let Some(v) = self.maxcorr.get() {
            return Ok(*v);
        }
        let v = crate::maxcorr::maximal_correlation(self)?;
        let _ = self.maxcorr.set(v);
        Ok(v)
    }

    /// Draws one `(x index, y index)` atom.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let u: f64 = rng.gen::<f64>() * self.cdf[self.cdf.len() - 1];
        let flat = self.cdf.partition_point(|&c| c <= u).min(self.joint.len() - 1);
        (flat / self.y.len(), flat % self.y.len())
    }
}

/// A product of finite laws, indexing dense function tables in mixed-radix
/// order with coordinate 0 fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductDomain {
    coords: Vec<FiniteDistribution>,
    #[serde(skip)]
    strides: Vec<usize>,
    #[serde(skip)]
    size: usize,
}

impl ProductDomain {
    pub fn new(coords: Vec<FiniteDistribution>) -> Result<Self> {
        let mut strides = Vec::with_capacity(coords.len());
        let mut size: usize = 1;
        for c in &coords {
            strides.push(size);
            size = size.checked_mul(c.len()).ok_or(Error::Capacity {
                states: u128::MAX,
                cap: enumeration_cap(),
            })?;
        }
        Ok(ProductDomain { coords, strides, size })
    }

    /// `n` independent fair ±1 bits.
    pub fn uniform_bits(n: usize) -> Self {
        ProductDomain::new(vec![FiniteDistribution::fair_bit(); n]).expect("2^n fits in usize")
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[FiniteDistribution] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> &FiniteDistribution {
        &self.coords[i]
    }

    pub fn radices(&self) -> Vec<usize> {
        self.coords.iter().map(FiniteDistribution::len).collect()
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Number of points (table length).
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn digit(&self, index: usize, i: usize) -> usize {
        (index / self.strides[i]) % self.coords[i].len()
    }

    pub fn digits(&self, index: usize) -> Vec<usize> {
        (0..self.n()).map(|i| self.digit(index, i)).collect()
    }

    pub fn index(&self, digits: &[usize]) -> usize {
        digits.iter().zip(&self.strides).map(|(d, s)| d * s).sum()
    }

    /// Coordinate values at a table index.
    pub fn point(&self, index: usize) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.coords[i].support()[self.digit(index, i)])
            .collect()
    }

    pub fn prob(&self, index: usize) -> f64 {
        (0..self.n())
            .map(|i| self.coords[i].probs()[self.digit(index, i)])
            .product()
    }

    /// Point probabilities for every table index.
    pub fn point_probs(&self) -> Vec<f64> {
        let mut probs = vec![1.0; self.size];
        for (c, &stride) in self.coords.iter().zip(&self.strides) {
            let k = c.len();
            for (idx, p) in probs.iter_mut().enumerate() {
                *p *= c.probs()[(idx / stride) % k];
            }
        }
        probs
    }

    /// Table index of a point given by coordinate values.
    pub fn locate(&self, values: &[f64]) -> Result<usize> {
        if values.len() != self.n() {
            return Err(Error::Arity {
                expected: self.n(),
                got: values.len(),
            });
        }
        let mut idx = 0;
        for (i, &v) in values.iter().enumerate() {
            let d = self.coords[i]
                .index_of(v)
                .ok_or_else(|| Error::domain(format!("value {v} is not in the support of coordinate {i}")))?;
            idx += d * self.strides[i];
        }
        Ok(idx)
    }

    /// True for `n` fair ±1 bits.
    pub fn is_uniform_bits(&self) -> bool {
        self.coords.iter().all(|c| c == &FiniteDistribution::fair_bit())
    }

    pub fn is_binary(&self) -> bool {
        self.coords.iter().all(|c| c.len() == 2)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.n() == other.n() && self.coords.iter().zip(&other.coords).all(|(a, b)| a.approx_eq(b, tol))
    }
}

/// One joint atom of a product space.
#[derive(Debug, Clone, PartialEq)]
pub struct JointAtom {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub prob: f64,
}

/// Independent coordinate pairs `(X_i, Y_i)`, `i = 0..n`.
#[derive(Debug, Clone)]
pub struct ProductSpace {
    pairs: Vec<CorrelatedPair>,
    x_domain: Arc<ProductDomain>,
    y_domain: Arc<ProductDomain>,
}

impl ProductSpace {
    pub fn new(pairs: Vec<CorrelatedPair>) -> Result<Self> {
        let x_domain = Arc::new(ProductDomain::new(pairs.iter().map(|p| p.x.clone()).collect())?);
        let y_domain = Arc::new(ProductDomain::new(pairs.iter().map(|p| p.y.clone()).collect())?);
        Ok(ProductSpace {
            pairs,
            x_domain,
            y_domain,
        })
    }

    /// Resampling couplings with per-coordinate ρ over the coordinates of `domain`.
    pub fn resampling(domain: &ProductDomain, rhos: &[f64]) -> Result<Self> {
        if rhos.len() != domain.n() {
            return Err(Error::Arity {
                expected: domain.n(),
                got: rhos.len(),
            });
        }
        let pairs = domain
            .coords()
            .iter()
            .zip(rhos)
            .map(|(d, &r)| CorrelatedPair::resampling(d, r))
            .collect::<Result<_>>()?;
        ProductSpace::new(pairs)
    }

    /// `n` fair bits, each ρ-resampled.
    pub fn uniform_bits(n: usize, rho: f64) -> Result<Self> {
        ProductSpace::resampling(&ProductDomain::uniform_bits(n), &vec![rho; n])
    }

    pub fn n(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[CorrelatedPair] {
        &self.pairs
    }

    pub fn pair(&self, i: usize) -> &CorrelatedPair {
        &self.pairs[i]
    }

    pub fn x_domain(&self) -> &Arc<ProductDomain> {
        &self.x_domain
    }

    pub fn y_domain(&self) -> &Arc<ProductDomain> {
        &self.y_domain
    }

    pub fn pearsons(&self) -> Vec<f64> {
        self.pairs.iter().map(CorrelatedPair::pearson).collect()
    }

    /// Number of joint atoms, `∏ |supp X_i|·|supp Y_i|`.
    pub fn joint_state_count(&self) -> u128 {
        self.pairs
            .iter()
            .map(|p| (p.x.len() * p.y.len()) as u128)
            .fold(1u128, |acc, k| acc.saturating_mul(k))
    }

    /// Iterates over every joint atom in mixed-radix order (coordinate 0
    /// fastest; within a coordinate the x index varies fastest).
    pub fn enumerate(&self) -> Result<JointAtoms<'_>> {
        self.enumerate_with_cap(enumeration_cap())
    }

    pub fn enumerate_with_cap(&self, cap: u64) -> Result<JointAtoms<'_>> {
        check_cap(self.joint_state_count(), cap)?;
        Ok(JointAtoms {
            space: self,
            digits: vec![0; self.n()],
            done: false,
        })
    }

    /// Visits every joint atom as `(flat x index, flat y index, probability)`.
    pub(crate) fn for_each_atom(&self, mut visit: impl FnMut(usize, usize, f64)) -> Result<()> {
        check_cap(self.joint_state_count(), enumeration_cap())?;
        let n = self.n();
        let mut digits = vec![0usize; n];
        let xs = self.x_domain.strides();
        let ys = self.y_domain.strides();
        loop {
            let (mut xi, mut yi, mut p) = (0, 0, 1.0);
            for (i, &d) in digits.iter().enumerate() {
                let pair = &self.pairs[i];
                let kx = pair.x.len();
                let (a, b) = (d % kx, d / kx);
                xi += a * xs[i];
                yi += b * ys[i];
                p *= pair.joint(a, b);
            }
            if p > 0.0 {
                visit(xi, yi, p);
            }
            let mut i = 0;
            loop {
                if i == n {
                    return Ok(());
                }
                digits[i] += 1;
                if digits[i] < self.pairs[i].joint.len() {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
        }
    }

    /// Draws one joint sample as index vectors.
    pub fn draw_indices<R: Rng + ?Sized>(&self, rng: &mut R, xs: &mut [usize], ys: &mut [usize]) {
        for (i, pair) in self.pairs.iter().enumerate() {
            let (a, b) = pair.draw(rng);
            xs[i] = a;
            ys[i] = b;
        }
    }

    /// Draws one joint sample as value vectors.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        self.pairs
            .iter()
            .map(|pair| {
                let (a, b) = pair.draw(rng);
                (pair.x.support()[a], pair.y.support()[b])
            })
            .unzip()
    }

    /// `count` i.i.d. joint samples, deterministic in `seed`. Sample `j` is
    /// drawn from stream `j / BLOCK_SIZE`, matching the block layout of
    /// [`crate::rng::run_blocks`].
    pub fn sample(&self, seed: u64, count: usize) -> Samples<'_> {
        Samples {
            space: self,
            seed,
            next: 0,
            count,
            rng: stream_rng(seed, 0),
        }
    }
}

/// Iterator returned by [`ProductSpace::enumerate`].
pub struct JointAtoms<'a> {
    space: &'a ProductSpace,
    digits: Vec<usize>,
    done: bool,
}

impl Iterator for JointAtoms<'_> {
    type Item = JointAtom;

    fn next(&mut self) -> Option<JointAtom> {
        if self.done {
            return None;
        }
        let n = self.space.n();
        let mut atom = JointAtom {
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            prob: 1.0,
        };
        for (i, &d) in self.digits.iter().enumerate() {
            let pair = &self.space.pairs[i];
            let kx = pair.x.len();
            let (a, b) = (d % kx, d / kx);
            atom.x.push(a);
            atom.y.push(b);
            atom.prob *= pair.joint(a, b);
        }
        let mut i = 0;
        loop {
            if i == n {
                self.done = true;
                break;
            }
            self.digits[i] += 1;
            if self.digits[i] < self.space.pairs[i].joint.len() {
                break;
            }
            self.digits[i] = 0;
            i += 1;
        }
        Some(atom)
    }
}

/// Iterator returned by [`ProductSpace::sample`].
pub struct Samples<'a> {
    space: &'a ProductSpace,
    seed: u64,
    next: usize,
    count: usize,
    rng: StreamRng,
}

impl Iterator for Samples<'_> {
    type Item = (Vec<f64>, Vec<f64>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.count {
            return None;
        }
        if self.next > 0 && self.next.is_multiple_of(BLOCK_SIZE) {
            self.rng = stream_rng(self.seed, (self.next / BLOCK_SIZE) as u64);
        }
        self.next += 1;
        Some(self.space.draw(&mut self.rng))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.count - self.next;
        (left, Some(left))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn distribution_validation() {
        assert!(FiniteDistribution::new(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(FiniteDistribution::new(vec![0.0, 1.0], vec![0.5, 0.4]).is_err());
        assert!(FiniteDistribution::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(FiniteDistribution::new(vec![0.0, 1.0], vec![0.5]).is_err());
        let d = FiniteDistribution::new(vec![0.0, 1.0, 2.0], vec![0.25, 0.5, 0.25]).unwrap();
        assert!(close(d.mean(), 1.0, 1e-15));
        assert!(close(d.variance(), 0.5, 1e-15));
    }

    #[test]
    fn degenerate_distribution_has_zero_correlation() {
        let point = FiniteDistribution::new(vec![3.0], vec![1.0]).unwrap();
        assert!(point.is_degenerate());
        let pair = CorrelatedPair::resampling(&point, 0.7).unwrap();
        assert!(pair.is_degenerate());
        assert_eq!(pair.pearson(), 0.0);
    }

    #[test]
    fn resampling_identical_coupling() {
        let pair = CorrelatedPair::resampling(&FiniteDistribution::fair_bit(), 1.0).unwrap();
        assert_eq!(pair.joint_rows(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert!(close(pair.pearson(), 1.0, 1e-15));
    }

    #[test]
    fn resampling_independent_coupling() {
        let pair = CorrelatedPair::resampling(&FiniteDistribution::fair_bit(), 0.0).unwrap();
        assert!(pair.joint_flat().iter().all(|&p| p == 0.25));
        assert_eq!(pair.pearson(), 0.0);
    }

    #[test]
    fn resampling_at_point_six() {
        let pair = CorrelatedPair::resampling(&FiniteDistribution::fair_bit(), 0.6).unwrap();
        let want = [0.4, 0.1, 0.1, 0.4];
        for (g, w) in pair.joint_flat().iter().zip(want) {
            assert!(close(*g, w, 1e-15));
        }
        // Σ a·b·joint(a,b) over {-1,1}².
        let s = [-1.0, 1.0];
        let exy: f64 = (0..2)
            .flat_map(|a| (0..2).map(move |b| (a, b)))
            .map(|(a, b)| s[a] * s[b] * pair.joint(a, b))
            .sum();
        assert!(close(exy, 0.6, 1e-15));
        assert!(close(pair.pearson(), 0.6, 1e-12));
    }

    #[test]
    fn resampling_rejects_bad_rho() {
        let d = FiniteDistribution::fair_bit();
        assert!(matches!(CorrelatedPair::resampling(&d, 1.5), Err(Error::Domain(_))));
        assert!(matches!(CorrelatedPair::resampling(&d, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn explicit_joint_checks_marginals() {
        let x = FiniteDistribution::fair_bit();
        let bad = CorrelatedPair::with_marginals(x.clone(), x.clone(), vec![0.5, 0.1, 0.0, 0.4]);
        assert!(bad.is_err());
        let p = CorrelatedPair::from_joint(
            vec![0.0, 1.0],
            vec![0.0, 1.0, 2.0],
            vec![vec![0.2, 0.1, 0.1], vec![0.1, 0.2, 0.3]],
        )
        .unwrap();
        assert!(close(p.x().probs()[1], 0.6, 1e-15));
        assert!(close(p.y().probs()[2], 0.4, 1e-15));
        let t = p.transpose();
        assert!(close(t.joint(2, 1), 0.3, 1e-15));
        assert!(close(t.pearson(), p.pearson(), 1e-15));
    }

    #[test]
    fn enumerate_single_pair() {
        let space = ProductSpace::uniform_bits(1, 0.3).unwrap();
        let atoms: Vec<_> = space.enumerate().unwrap().collect();
        assert_eq!(atoms.len(), 4);
        assert!(close(atoms.iter().map(|a| a.prob).sum(), 1.0, 1e-15));
    }

    #[test]
    fn enumerate_independent_bits() {
        let space = ProductSpace::uniform_bits(2, 0.0).unwrap();
        let atoms: Vec<_> = space.enumerate().unwrap().collect();
        assert_eq!(atoms.len(), 16);
        assert!(atoms.iter().all(|a| close(a.prob, 1.0 / 16.0, 1e-15)));
        // Coordinate 0 is the fastest digit; within it x varies first.
        assert_eq!(atoms[1].x, vec![1, 0]);
        assert_eq!(atoms[2].y, vec![1, 0]);
        assert_eq!(atoms[4].x, vec![0, 1]);
    }

    #[test]
    fn enumerate_correlated_atom() {
        let space = ProductSpace::uniform_bits(2, 0.6).unwrap();
        let first = space.enumerate().unwrap().next().unwrap();
        assert_eq!(first.x, vec![0, 0]);
        assert_eq!(first.y, vec![0, 0]);
        assert!(close(first.prob, 0.16, 1e-15));
    }

    #[test]
    fn enumerate_respects_cap() {
        let space = ProductSpace::uniform_bits(3, 0.5).unwrap();
        assert!(matches!(
            space.enumerate_with_cap(63),
            Err(Error::Capacity { states: 64, cap: 63 })
        ));
        assert!(space.enumerate_with_cap(64).is_ok());
    }

    #[test]
    fn cap_parsing() {
        assert_eq!(parse_cap("2^10"), Some(1024));
        assert_eq!(parse_cap("500"), Some(500));
        assert_eq!(parse_cap("0"), None);
        assert_eq!(parse_cap("abc"), None);
    }

    #[test]
    fn identical_coupling_samples_agree() {
        let space = ProductSpace::uniform_bits(1, 1.0).unwrap();
        assert!(space.sample(123, 1000).all(|(x, y)| x == y));
    }

    #[test]
    fn sampling_is_deterministic() {
        let space = ProductSpace::uniform_bits(3, 0.4).unwrap();
        let a: Vec<_> = space.sample(5, 5000).collect();
        let b: Vec<_> = space.sample(5, 5000).collect();
        assert_eq!(a, b);
        let c: Vec<_> = space.sample(6, 5000).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn sampled_correlation_matches() {
        let space = ProductSpace::uniform_bits(1, 0.6).unwrap();
        let n = 1_000_000;
        let exy: f64 = space.sample(7, n).map(|(x, y)| x[0] * y[0]).sum::<f64>() / n as f64;
        let sigma = ((1.0 - 0.36) / n as f64).sqrt();
        assert!((exy - 0.6).abs() <= 3.0 * sigma, "E[XY] = {exy}");
    }

    #[test]
    fn sampled_coordinates_are_independent() {
        let space = ProductSpace::uniform_bits(2, 0.8).unwrap();
        let n = 200_000;
        let c: f64 = space.sample(11, n).map(|(x, _)| x[0] * x[1]).sum::<f64>() / n as f64;
        assert!(c.abs() <= 3.0 / (n as f64).sqrt(), "Corr(X1,X2) = {c}");
    }
}

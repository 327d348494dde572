//! Site percolation on the triangular lattice, realized as an `n × n`
//! rhombus: site `(r, c)` touches `(r, c±1)`, `(r±1, c)`, `(r−1, c+1)` and
//! `(r+1, c−1)`. Left and right boundaries are the first and last columns.

use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{expand, FunctionTable};
use crate::product_space::ProductDomain;
use crate::rng::{run_blocks, StreamRng};
use crate::stats::Estimate;

/// Largest site count accepted by [`exact_spectrum_small`].
pub const EXACT_MAX_SITES: usize = 20;

const OFFSETS: [(isize, isize); 6] = [(0, 1), (0, -1), (1, 0), (-1, 0), (-1, 1), (1, -1)];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriangularGrid {
    n: usize,
}

impl TriangularGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("grid side must be positive"));
        }
        Ok(TriangularGrid { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sites(&self) -> usize {
        self.n * self.n
    }

    pub fn site(&self, r: usize, c: usize) -> usize {
        r * self.n + c
    }

    pub fn neighbors(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        let (r, c) = ((s / self.n) as isize, (s % self.n) as isize);
        let n = self.n as isize;
        OFFSETS.iter().filter_map(move |(dr, dc)| {
            let (rr, cc) = (r + dr, c + dc);
            (rr >= 0 && rr < n && cc >= 0 && cc < n).then(|| (rr * n + cc) as usize)
        })
    }

    pub fn left_boundary(&self) -> Vec<usize> {
        (0..self.n).map(|r| self.site(r, 0)).collect()
    }

    pub fn right_boundary(&self) -> Vec<usize> {
        (0..self.n).map(|r| self.site(r, self.n - 1)).collect()
    }

    pub fn words(&self) -> usize {
        self.sites().div_ceil(64)
    }

    fn last_mask(&self) -> u64 {
        match self.sites() % 64 {
            0 => !0,
            k => (1u64 << k) - 1,
        }
    }
}

/// Open/closed states packed 64 sites per word; a set bit is open (+1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    bits: Vec<u64>,
    len: usize,
}

impl Configuration {
    pub fn closed(len: usize) -> Self {
        Configuration {
            bits: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn open(len: usize) -> Self {
        let mut c = Self::closed(len);
        (0..len).for_each(|i| c.set(i, true));
        c
    }

    /// From a `±1` vector, `+1` meaning open.
    pub fn from_signs(signs: &[f64]) -> Result<Self> {
        let mut c = Self::closed(signs.len());
        for (i, s) in signs.iter().enumerate() {
            match *s {
                1.0 => c.set(i, true),
                -1.0 => {}
                v => return Err(Error::domain(format!("site {i} has value {v}, expected ±1"))),
            }
        }
        Ok(c)
    }

    pub fn from_words(bits: Vec<u64>, len: usize) -> Self {
        debug_assert_eq!(bits.len(), len.div_ceil(64));
        Configuration { bits, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, open: bool) {
        if open {
            self.bits[i / 64] |= 1 << (i % 64);
        } else {
            self.bits[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.bits
    }

    pub fn signs(&self) -> Vec<f64> {
        (0..self.len).map(|i| if self.get(i) { 1.0 } else { -1.0 }).collect()
    }
}

/// Disjoint sets with path halving and union by rank; reusable across
/// configurations.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        UnionFind {
            parent: (0..len as u32).collect(),
            rank: vec![0; len],
        }
    }

    pub fn reset(&mut self) {
        self.parent.iter_mut().enumerate().for_each(|(i, p)| *p = i as u32);
        self.rank.iter_mut().for_each(|r| *r = 0);
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let gp = self.parent[self.parent[x] as usize];
            self.parent[x] = gp;
            x = gp as usize;
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb as u32,
            std::cmp::Ordering::Greater => self.parent[rb] = ra as u32,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra as u32;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Crossing test with caller-provided scratch.
pub struct Crosser<'a> {
    grid: &'a TriangularGrid,
    uf: UnionFind,
}

impl<'a> Crosser<'a> {
    pub fn new(grid: &'a TriangularGrid) -> Self {
        Crosser {
            grid,
            uf: UnionFind::new(grid.sites() + 2),
        }
    }

    /// `true` iff open sites connect the left and right columns.
    pub fn crosses(&mut self, config: &Configuration) -> bool {
        let n = self.grid.n;
        let (left, right) = (n * n, n * n + 1);
        self.uf.reset();
        for r in 0..n {
            for c in 0..n {
                let s = r * n + c;
                if !config.get(s) {
                    continue;
                }
                if c == 0 {
                    self.uf.union(s, left);
                }
                if c == n - 1 {
                    self.uf.union(s, right);
                }
                // Forward half of the neighborhood: (r, c+1), (r+1, c), (r+1, c−1).
                if c + 1 < n && config.get(s + 1) {
                    self.uf.union(s, s + 1);
                }
                if r + 1 < n {
                    if config.get(s + n) {
                        self.uf.union(s, s + n);
                    }
                    if c > 0 && config.get(s + n - 1) {
                        self.uf.union(s, s + n - 1);
                    }
                }
            }
        }
        self.uf.find(left) == self.uf.find(right)
    }
}

/// `+1` for a left-right open crossing, `−1` otherwise.
pub fn crossing(grid: &TriangularGrid, config: &Configuration) -> Result<f64> {
    if config.len() != grid.sites() {
        return Err(Error::Arity {
            expected: grid.sites(),
            got: config.len(),
        });
    }
    Ok(if Crosser::new(grid).crosses(config) { 1.0 } else { -1.0 })
}

/// A word of independent Bernoulli(p) bits, with `p` truncated to 32
/// binary digits.
pub fn bernoulli_word(rng: &mut StreamRng, p: f64) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return !0;
    }
    let scaled = (p * (1u64 << 32) as f64) as u64;
    if scaled == 0 {
        return 0;
    }
    // Fold digits from least to most significant: OR for a 1, AND for a 0.
    let mut out = 0u64;
    for k in scaled.trailing_zeros()..32 {
        let r = rng.next_u64();
        out = if scaled >> k & 1 == 1 { out | r } else { out & r };
    }
    out
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} {v} is outside [0, 1]")))
    }
}

pub fn random_configuration(grid: &TriangularGrid, p: f64, rng: &mut StreamRng) -> Configuration {
    let mut bits: Vec<u64> = (0..grid.words()).map(|_| bernoulli_word(rng, p)).collect();
    *bits.last_mut().unwrap() &= grid.last_mask();
    Configuration::from_words(bits, grid.sites())
}

/// Monte Carlo estimate of `P[crossing]` under i.i.d. Bernoulli(p) sites.
pub fn crossing_probability(
    grid: &TriangularGrid,
    p: f64,
    seed: u64,
    samples: usize,
    workers: usize,
) -> Result<Estimate> {
    check_unit("p", p)?;
    if samples == 0 {
        return Err(Error::domain("samples must be positive"));
    }
    let hits: Vec<f64> = run_blocks(seed, samples, workers, |rng, len| {
        let mut cr = Crosser::new(grid);
        (0..len)
            .map(|_| {
                let c = random_configuration(grid, p, rng);
                if cr.crosses(&c) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    Ok(Estimate::mean(&hits))
}

/// Monte Carlo estimate of `E[f(X) f(Y)]` at `p = 1/2`, where each site of
/// `Y` keeps its value in `X` with probability `rho` and is redrawn otherwise.
pub fn crossing_stability(
    grid: &TriangularGrid,
    rho: f64,
    seed: u64,
    samples: usize,
    workers: usize,
) -> Result<Estimate> {
    check_unit("rho", rho)?;
    if samples == 0 {
        return Err(Error::domain("samples must be positive"));
    }
    let words = grid.words();
    let mask = grid.last_mask();
    let products: Vec<f64> = run_blocks(seed, samples, workers, |rng, len| {
        let mut cr = Crosser::new(grid);
        let mut x = vec![0u64; words];
        let mut y = vec![0u64; words];
        (0..len)
            .map(|_| {
                for w in 0..words {
                    let xv = rng.next_u64();
                    let keep = bernoulli_word(rng, rho);
                    let fresh = rng.next_u64();
                    x[w] = xv;
                    y[w] = (xv & keep) | (fresh & !keep);
                }
                x[words - 1] &= mask;
                y[words - 1] &= mask;
                let fx = cr.crosses(&Configuration::from_words(x.clone(), grid.sites()));
                let fy = cr.crosses(&Configuration::from_words(y.clone(), grid.sites()));
                if fx == fy {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    Ok(Estimate::mean(&products))
}

/// Exact Fourier weights of the crossing indicator on a small grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub n: usize,
    pub sites: usize,
    pub mean: f64,
    pub variance: f64,
    /// Entry `k` is `Σ_{|S|=k} f̂(S)²`.
    pub degree_profile: Vec<f64>,
    /// Entry `D` is `W(D) = Σ_{1≤|S|≤D} f̂(S)²`.
    pub cumulative: Vec<f64>,
    /// Entry `D` is `sqrt(W(D))`.
    pub low_degree_mass_sqrt: Vec<f64>,
}

/// The crossing indicator as a table over uniform bits, coordinate `i`
/// being site `i`.
pub fn crossing_table(grid: &TriangularGrid) -> Result<FunctionTable> {
    let sites = grid.sites();
    if sites > EXACT_MAX_SITES {
        return Err(Error::Capacity {
            states: 1u128 << sites.min(127),
            cap: 1 << EXACT_MAX_SITES,
        });
    }
    let domain = Arc::new(ProductDomain::uniform_bits(sites));
    let mut cr = Crosser::new(grid);
    let values = (0..1usize << sites)
        .map(|idx| {
            let c = Configuration::from_words(vec![idx as u64], sites);
            if cr.crosses(&c) {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    FunctionTable::new(domain, values)
}

pub fn exact_spectrum_small(grid: &TriangularGrid) -> Result<SpectrumReport> {
    let table = crossing_table(grid)?;
    let e = expand(&table)?;
    let cumulative = e.cumulative_low_degree_mass();
    Ok(SpectrumReport {
        n: grid.n(),
        sites: grid.sites(),
        mean: e.mean(),
        variance: e.variance(),
        degree_profile: e.degree_profile(),
        low_degree_mass_sqrt: cumulative.iter().map(|w| w.max(0.0).sqrt()).collect(),
        cumulative,
    })
}

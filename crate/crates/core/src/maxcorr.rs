//! Maximal (Hirschfeld–Gebelein–Rényi) correlation, Markov operators and
//! the non-separability of functions on product spaces.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::FunctionTable;
use crate::product_space::{key_value, value_key, CorrelatedPair, FiniteDistribution, ProductSpace};
use crate::rng::{run_blocks, stream_rng};
use crate::stats::Estimate;

/// Supports at or below this size use a dense SVD.
pub const DENSE_SVD_MAX: usize = 64;
/// Residual tolerance on singular triplets.
pub const SV_TOL: f64 = 1e-11;
/// Iteration limit for both spectral routes.
pub const MAX_SWEEPS: usize = 10_000;

/// `E[f(X) | Y]` as a `|supp Y| × |supp X|` stochastic matrix.
#[derive(Debug, Clone)]
pub struct MarkovOperator {
    matrix: Vec<f64>,
    pair: CorrelatedPair,
}

impl MarkovOperator {
    pub fn new(pair: &CorrelatedPair) -> Self {
        let (kx, ky) = (pair.x().len(), pair.y().len());
        let mut matrix = vec![0.0; ky * kx];
        for b in 0..ky {
            let q = pair.y().probs()[b];
            for a in 0..kx {
                matrix[b * kx + a] = pair.joint(a, b) / q;
            }
        }
        MarkovOperator {
            matrix,
            pair: pair.clone(),
        }
    }

    pub fn pair(&self) -> &CorrelatedPair {
        &self.pair
    }

    /// Row `b` holds `P(X = a | Y = b)`.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// `(Tf)(y) = E[f(X) | Y = y]`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let kx = self.pair.x().len();
        self.matrix
            .chunks(kx)
            .map(|row| row.iter().zip(f).map(|(m, v)| m * v).sum())
            .collect()
    }

    /// The adjoint `(T*g)(x) = E[g(Y) | X = x]`.
    pub fn adjoint_apply(&self, g: &[f64]) -> Vec<f64> {
        let (kx, ky) = (self.pair.x().len(), self.pair.y().len());
        (0..kx)
            .map(|a| {
                let p = self.pair.x().probs()[a];
                (0..ky).map(|b| self.pair.joint(a, b) / p * g[b]).sum()
            })
            .collect()
    }

    /// `E[f(X)·g(Y)]` where `g = Tf / ‖Tf‖` is the best unit-norm response
    /// to `f`; for mean-zero unit-variance `f` this is `‖Tf‖₂` and its
    /// supremum over `f` is the maximal correlation.
    pub fn correlation_of(&self, f: &[f64]) -> f64 {
        let tf = self.apply(f);
        let norm = l2(self.pair.y().probs(), &tf);
        if norm == 0.0 {
            return 0.0;
        }
        let mut e = 0.0;
        for (a, fa) in f.iter().enumerate() {
            for (b, tb) in tf.iter().enumerate() {
                e += self.pair.joint(a, b) * fa * tb / norm;
            }
        }
        e
    }
}

fn l2(w: &[f64], f: &[f64]) -> f64 {
    w.iter().zip(f).map(|(p, v)| p * v * v).sum::<f64>().sqrt()
}

fn center(w: &[f64], f: &mut [f64]) {
    let m: f64 = w.iter().zip(f.iter()).map(|(p, v)| p * v).sum();
    f.iter_mut().for_each(|v| *v -= m);
}

/// Maximal correlation of a pair: dense SVD for small supports, power
/// iteration otherwise. Degenerate pairs return 0.
pub fn maximal_correlation(pair: &CorrelatedPair) -> Result<f64> {
    if pair.x().len().max(pair.y().len()) <= DENSE_SVD_MAX {
        maximal_correlation_svd(pair)
    } else {
        maximal_correlation_power(pair)
    }
}

/// Second singular value of `Q_ab = P(a,b) / sqrt(P_X(a) P_Y(b))`.
pub fn maximal_correlation_svd(pair: &CorrelatedPair) -> Result<f64> {
    if pair.is_degenerate() {
        return Ok(0.0);
    }
    let (kx, ky) = (pair.x().len(), pair.y().len());
    let q = DMatrix::from_fn(kx, ky, |a, b| {
        pair.joint(a, b) / (pair.x().probs()[a] * pair.y().probs()[b]).sqrt()
    });
    let svd = q.try_svd(false, false, 1e-15, MAX_SWEEPS).ok_or(Error::Numerical {
        what: "dense SVD".into(),
        residual: f64::NAN,
    })?;
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(sv.get(1).copied().unwrap_or(0.0).clamp(0.0, 1.0))
}

/// Power iteration on `T*T` restricted to mean-zero functions of X, with the
/// trivial constant pair deflated by recentring each sweep.
pub fn maximal_correlation_power(pair: &CorrelatedPair) -> Result<f64> {
    if pair.is_degenerate() {
        return Ok(0.0);
    }
    let op = MarkovOperator::new(pair);
    let px = pair.x().probs();
    let py = pair.y().probs();
    let mut rng = stream_rng(0x6d61_7863, 0);
    let mut f: Vec<f64> = (0..px.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
    center(px, &mut f);
    let norm = l2(px, &f);
    if norm == 0.0 {
        return Ok(0.0);
    }
    f.iter_mut().for_each(|v| *v /= norm);
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let tf = op.apply(&f);
        let sigma = l2(py, &tf);
        if sigma <= 1e-300 {
            return Ok(0.0);
        }
        let mut h = op.adjoint_apply(&tf);
        center(px, &mut h);
        // ‖T*u − σ f‖ with u = Tf/σ.
        residual = h
            .iter()
            .zip(&f)
            .zip(px)
            .map(|((hv, fv), p)| p * (hv / sigma - sigma * fv).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= SV_TOL {
            return Ok(sigma.min(1.0));
        }
        let hn = l2(px, &h);
        if hn == 0.0 {
            return Ok(0.0);
        }
        f = h.into_iter().map(|v| v / hn).collect();
    }
    Err(Error::Numerical {
        what: "maximal correlation power iteration".into(),
        residual,
    })
}

fn check_domains(f: &FunctionTable, g: &FunctionTable, space: &ProductSpace) -> Result<()> {
    if !f.domain().approx_eq(space.x_domain(), 1e-12) {
        return Err(Error::domain("f is not defined on the x-side of the space"));
    }
    if !g.domain().approx_eq(space.y_domain(), 1e-12) {
        return Err(Error::domain("g is not defined on the y-side of the space"));
    }
    Ok(())
}

fn pair_from_counts(counts: BTreeMap<(i128, i128), f64>) -> Result<CorrelatedPair> {
    let mut xs: Vec<i128> = counts.keys().map(|k| k.0).collect();
    let mut ys: Vec<i128> = counts.keys().map(|k| k.1).collect();
    xs.sort_unstable();
    xs.dedup();
    ys.sort_unstable();
    ys.dedup();
    let total: f64 = counts.values().sum();
    let mut joint = vec![vec![0.0; ys.len()]; xs.len()];
    for ((kx, ky), w) in counts {
        let a = xs.binary_search(&kx).unwrap();
        let b = ys.binary_search(&ky).unwrap();
        joint[a][b] = w / total;
    }
    CorrelatedPair::from_joint(
        xs.into_iter().map(key_value).collect(),
        ys.into_iter().map(key_value).collect(),
        joint,
    )
}

/// The joint law of `(f(X), g(Y))`, with values merged at 12 decimals.
pub fn induced_pair(f: &FunctionTable, g: &FunctionTable, space: &ProductSpace) -> Result<CorrelatedPair> {
    check_domains(f, g, space)?;
    let fk: Vec<i128> = f.values().iter().map(|&v| value_key(v)).collect();
    let gk: Vec<i128> = g.values().iter().map(|&v| value_key(v)).collect();
    let mut counts = BTreeMap::new();
    space.for_each_atom(|xi, yi, p| {
        *counts.entry((fk[xi], gk[yi])).or_insert(0.0) += p;
    })?;
    pair_from_counts(counts)
}

/// Monte Carlo estimate of an induced pair for spaces beyond the
/// enumeration cap.
#[derive(Debug, Clone)]
pub struct InducedPairEstimate {
    /// Empirical joint law from all samples.
    pub pair: CorrelatedPair,
    /// Maximal correlation of the empirical law; the standard error comes
    /// from [`MC_BATCHES`] equal batches.
    pub maxcorr: Estimate,
}

pub const MC_BATCHES: usize = 16;

pub fn induced_pair_mc(
    f: &FunctionTable,
    g: &FunctionTable,
    space: &ProductSpace,
    seed: u64,
    samples: usize,
    workers: usize,
) -> Result<InducedPairEstimate> {
    check_domains(f, g, space)?;
    if samples < MC_BATCHES {
        return Err(Error::domain(format!("need at least {MC_BATCHES} samples")));
    }
    let xd = space.x_domain().clone();
    let yd = space.y_domain().clone();
    let n = space.n();
    let keys: Vec<Vec<(i128, i128)>> = run_blocks(seed, samples, workers, |rng, len| {
        let (mut xs, mut ys) = (vec![0; n], vec![0; n]);
        (0..len)
            .map(|_| {
                space.draw_indices(rng, &mut xs, &mut ys);
                (
                    value_key(f.values()[xd.index(&xs)]),
                    value_key(g.values()[yd.index(&ys)]),
                )
            })
            .collect()
    });
    let all: Vec<(i128, i128)> = keys.into_iter().flatten().collect();
    let tally = |chunk: &[(i128, i128)]| {
        let mut c = BTreeMap::new();
        for k in chunk {
            *c.entry(*k).or_insert(0.0) += 1.0;
        }
        c
    };
    let pair = pair_from_counts(tally(&all))?;
    let point = pair.maximal_correlation()?;
    let batch = all.len() / MC_BATCHES;
    let mut vals = Vec::with_capacity(MC_BATCHES);
    for b in 0..MC_BATCHES {
        let p = pair_from_counts(tally(&all[b * batch..(b + 1) * batch]))?;
        vals.push(p.maximal_correlation()?);
    }
    let spread = Estimate::mean(&vals);
    Ok(InducedPairEstimate {
        pair,
        maxcorr: Estimate::new(point, spread.std_error, samples),
    })
}

/// Non-separability of `f`: `ε` with `Corr(L²(f(X)), L²(X₁)+…+L²(Xₙ)) = sqrt(1 − ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonSeparabilityReport {
    pub epsilon: f64,
    pub corr_to_separable: f64,
    /// The extremal `g` on the range of `f`, normalized to mean 0 and
    /// variance 1, keyed by output value.
    #[serde(with = "witness_map")]
    pub witness: Vec<(f64, f64)>,
    #[serde(default)]
    pub degenerate: bool,
}

mod witness_map {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(w: &[(f64, f64)], s: S) -> Result<S::Ok, S::Error> {
        // Keys are value strings; insertion order is already by value.
        let m: Vec<(String, f64)> = w.iter().map(|(v, g)| (format!("{v}"), *g)).collect();
        let map: serde_json::Map<String, serde_json::Value> =
            m.into_iter().map(|(k, g)| (k, serde_json::Value::from(g))).collect();
        map.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(f64, f64)>, D::Error> {
        let m = BTreeMap::<String, f64>::deserialize(d)?;
        let mut out = m
            .into_iter()
            .map(|(k, g)| k.parse::<f64>().map(|v| (v, g)).map_err(D::Error::custom))
            .collect::<Result<Vec<_>, _>>()?;
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(out)
    }
}

/// Solves `sup Σ_i ‖G_{i}‖²` over `g ∈ L²(f(X))` with `E g = 0`, `E g² = 1`,
/// where `G_{i}` is the first-order Efron–Stein component of `g∘f`.
pub fn non_separability(f: &FunctionTable) -> Result<NonSeparabilityReport> {
    let domain = f.domain();
    let probs = domain.point_probs();
    let law = FiniteDistribution::from_weighted(f.values().iter().copied().zip(probs.iter().copied()))?;
    let k = law.len();
    if k == 1 {
        return Ok(NonSeparabilityReport {
            epsilon: 0.0,
            corr_to_separable: 0.0,
            witness: vec![(law.support()[0], 0.0)],
            degenerate: true,
        });
    }
    let level: Vec<usize> = f
        .values()
        .iter()
        .map(|&v| law.index_of(v).expect("value is in its own range"))
        .collect();
    let pi = law.probs();
    let mut a_mat = DMatrix::<f64>::zeros(k, k);
    for i in 0..domain.n() {
        let c = domain.coord(i);
        // joint[a][j] = P(X_i = a, f = r_j)
        let mut joint = vec![vec![0.0; k]; c.len()];
        for (idx, (&p, &j)) in probs.iter().zip(&level).enumerate() {
            joint[domain.digit(idx, i)][j] += p;
        }
        for (a, row) in joint.iter().enumerate() {
            let pa = c.probs()[a];
            for j in 0..k {
                for l in 0..k {
                    a_mat[(j, l)] += row[j] * row[l] / pa;
                }
            }
        }
    }
    let s: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
    let b = DMatrix::from_fn(k, k, |j, l| a_mat[(j, l)] / (s[j] * s[l]));
    let proj = DMatrix::from_fn(k, k, |j, l| if j == l { 1.0 } else { 0.0 } - s[j] * s[l]);
    let c = &proj * b * &proj;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let (top, lambda) =
        eig.eigenvalues.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        );
    let lambda = lambda.clamp(0.0, 1.0);
    let h = eig.eigenvectors.column(top);
    let mut g: Vec<f64> = (0..k).map(|j| h[j] / s[j]).collect();
    center(pi, &mut g);
    let norm = l2(pi, &g);
    if norm > 0.0 {
        g.iter_mut().for_each(|v| *v /= norm);
    }
    if let Some(first) = g.iter().find(|v| v.abs() > 1e-12) {
        if *first < 0.0 {
            g.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(NonSeparabilityReport {
        epsilon: 1.0 - lambda,
        corr_to_separable: lambda.sqrt(),
        witness: law.support().iter().copied().zip(g).collect(),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boolean::named_table;
    use crate::fourier::expand;
    use crate::product_space::ProductDomain;
    use std::sync::Arc;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn resampling_coupling_has_maxcorr_rho() {
        let d = FiniteDistribution::new(vec![-1.0, 0.5, 2.0, 3.0], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        for rho in [0.0, 0.25, 0.6, 1.0] {
            let p = CorrelatedPair::resampling(&d, rho).unwrap();
            assert!(close(maximal_correlation_svd(&p).unwrap(), rho, 1e-12));
            assert!(close(maximal_correlation_power(&p).unwrap(), rho, 1e-10));
        }
    }

    #[test]
    fn independent_joint_is_zero() {
        let x = FiniteDistribution::uniform(vec![0.0, 1.0, 2.0]).unwrap();
        let y = FiniteDistribution::new(vec![0.0, 1.0], vec![0.3, 0.7]).unwrap();
        let p = CorrelatedPair::independent(&x, &y).unwrap();
        assert!(maximal_correlation_svd(&p).unwrap() < 1e-12);
        assert!(maximal_correlation_power(&p).unwrap() < 1e-12);
    }

    #[test]
    fn binary_symmetric_channel() {
        // 2×2 closed form: Q = [[(1+ρ)/2, (1−ρ)/2], [(1−ρ)/2, (1+ρ)/2]] has
        // singular values 1 and ρ.
        for rho in [0.1, 0.5, 0.9] {
            let flip = (1.0 - rho) / 2.0;
            let p = CorrelatedPair::from_joint(
                vec![-1.0, 1.0],
                vec![-1.0, 1.0],
                vec![
                    vec![(1.0 - flip) / 2.0, flip / 2.0],
                    vec![flip / 2.0, (1.0 - flip) / 2.0],
                ],
            )
            .unwrap();
            assert!(close(maximal_correlation_svd(&p).unwrap(), rho, 1e-12));
            assert!(close(maximal_correlation_power(&p).unwrap(), rho, 1e-10));
        }
    }

    #[test]
    fn degenerate_pair_is_zero() {
        let x = FiniteDistribution::new(vec![1.0], vec![1.0]).unwrap();
        let y = FiniteDistribution::fair_bit();
        let p = CorrelatedPair::independent(&x, &y).unwrap();
        assert_eq!(maximal_correlation(&p).unwrap(), 0.0);
    }

    #[test]
    fn markov_operator_is_stochastic() {
        let p = CorrelatedPair::from_joint(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0],
            vec![vec![0.2, 0.1], vec![0.05, 0.25], vec![0.3, 0.1]],
        )
        .unwrap();
        let t = MarkovOperator::new(&p);
        for v in t.apply(&[1.0, 1.0, 1.0]) {
            assert!(close(v, 1.0, 1e-12));
        }
        let rho = maximal_correlation_svd(&p).unwrap();
        assert!(rho <= 1.0 + 1e-9);
        // The pearson correlation of the identity functions is below maxcorr.
        assert!(p.pearson().abs() <= rho + 1e-12);
        // Correlation of any normalized mean-zero f is at most maxcorr.
        let mut f = vec![1.0, -2.0, 0.5];
        center(p.x().probs(), &mut f);
        let nf = l2(p.x().probs(), &f);
        f.iter_mut().for_each(|v| *v /= nf);
        assert!(t.correlation_of(&f) <= rho + 1e-12);
    }

    #[test]
    fn transpose_invariance() {
        let p = CorrelatedPair::from_joint(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0],
            vec![vec![0.2, 0.1], vec![0.05, 0.25], vec![0.3, 0.1]],
        )
        .unwrap();
        let a = maximal_correlation_svd(&p).unwrap();
        let b = maximal_correlation_svd(&p.transpose()).unwrap();
        assert!(close(a, b, 1e-12));
        assert!(close(a, maximal_correlation_power(&p).unwrap(), 1e-9));
    }

    #[test]
    fn induced_pair_of_identity_is_original() {
        let space = ProductSpace::uniform_bits(1, 0.35).unwrap();
        let id = named_table("dictator", 1).unwrap();
        let p = induced_pair(&id, &id, &space).unwrap();
        assert_eq!(p.joint_flat(), space.pair(0).joint_flat());
    }

    #[test]
    fn induced_pair_of_maj3_is_stability() {
        let maj = named_table("maj3", 3).unwrap();
        let e = expand(&maj).unwrap();
        for rho in [0.2, 0.5, 0.9] {
            let space = ProductSpace::uniform_bits(3, rho).unwrap();
            let p = induced_pair(&maj, &maj, &space).unwrap();
            let want = 0.75 * rho + 0.25 * rho.powi(3);
            assert!(close(p.maximal_correlation().unwrap(), want, 1e-12));
            assert!(close(e.stability_uniform(rho), want, 1e-12));
        }
    }

    #[test]
    fn induced_pair_of_parity2() {
        let par = named_table("parity", 2).unwrap();
        let space = ProductSpace::uniform_bits(2, 0.7).unwrap();
        let p = induced_pair(&par, &par, &space).unwrap();
        assert!(close(p.maximal_correlation().unwrap(), 0.49, 1e-12));
    }

    #[test]
    fn induced_pair_mc_tracks_exact() {
        let maj = named_table("maj3", 3).unwrap();
        let space = ProductSpace::uniform_bits(3, 0.6).unwrap();
        let est = induced_pair_mc(&maj, &maj, &space, 3, 200_000, 1).unwrap();
        let exact = 0.75 * 0.6 + 0.25 * 0.216;
        assert!((est.maxcorr.estimate - exact).abs() <= 4.0 * est.maxcorr.std_error + 1e-3);
    }

    #[test]
    fn non_separability_examples() {
        let maj = non_separability(&named_table("maj3", 3).unwrap()).unwrap();
        assert!(close(maj.epsilon, 0.25, 1e-12));
        assert!(close(maj.corr_to_separable.powi(2) + maj.epsilon, 1.0, 1e-12));
        let dict = non_separability(&named_table("dictator", 3).unwrap()).unwrap();
        assert!(close(dict.epsilon, 0.0, 1e-12));
        let par = non_separability(&named_table("parity", 2).unwrap()).unwrap();
        assert!(close(par.epsilon, 1.0, 1e-12));
        // Witness is normalized with a positive first nonzero entry.
        let w: Vec<f64> = maj.witness.iter().map(|x| x.1).collect();
        assert!(w[0] > 0.0);
        assert!(close(w.iter().map(|v| v * v).sum::<f64>() / 2.0, 1.0, 1e-12));
    }

    #[test]
    fn separable_function_on_mixed_supports() {
        let c = FiniteDistribution::uniform(vec![0.0, 1.0, 2.0]).unwrap();
        let d = Arc::new(ProductDomain::new(vec![c.clone(), c]).unwrap());
        let f = FunctionTable::from_fn(d.clone(), |x| x[0] * x[0] + (x[1] - 1.0).abs());
        assert!(non_separability(&f).unwrap().epsilon < 1e-12);
        let constant = FunctionTable::from_fn(d, |_| 4.0);
        let r = non_separability(&constant).unwrap();
        assert!(r.degenerate && r.epsilon == 0.0);
    }

    #[test]
    fn report_roundtrips_through_json() {
        let r = non_separability(&named_table("maj3", 3).unwrap()).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"witness\":{\"-1\":"));
        let back: NonSeparabilityReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}

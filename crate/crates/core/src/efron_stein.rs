//! Efron–Stein decomposition on finite product spaces.
//!
//! Components are stored as full-size tables over the original domain,
//! indexed by subset bitmask.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::FunctionTable;
use crate::product_space::{check_cap, enumeration_cap, ProductDomain, ProductSpace};

/// Largest `n` accepted by [`decompose`].
pub const MAX_N: usize = 20;

#[derive(Debug, Clone)]
pub struct ESDecomposition {
    domain: Arc<ProductDomain>,
    components: Vec<FunctionTable>,
}

/// `E_i t`: average out coordinate `i`, keeping the full table shape.
pub(crate) fn average_out(domain: &ProductDomain, values: &[f64], i: usize) -> Vec<f64> {
    let stride = domain.strides()[i];
    let c = domain.coord(i);
    let k = c.len();
    let mut out = vec![0.0; values.len()];
    let block = stride * k;
    for base in (0..values.len()).step_by(block) {
        for j in 0..stride {
            let m: f64 = (0..k).map(|a| c.probs()[a] * values[base + a * stride + j]).sum();
            for a in 0..k {
                out[base + a * stride + j] = m;
            }
        }
    }
    out
}

/// Decomposes `f = Σ_S f_S` with `f_S = Π_{i∈S}(I − E_i) Π_{i∉S} E_i f`,
/// the product form of the Möbius sum `Σ_{T⊆S} (−1)^{|S∖T|} E[f | X_T]`.
pub fn decompose(f: &FunctionTable) -> Result<ESDecomposition> {
    decompose_with_cap(f, enumeration_cap())
}

pub fn decompose_with_cap(f: &FunctionTable, cap: u64) -> Result<ESDecomposition> {
    let domain = f.domain().clone();
    let n = domain.n();
    if n > MAX_N {
        return Err(Error::Capacity {
            states: 1u128 << n.min(127),
            cap,
        });
    }
    check_cap((1u128 << n) * domain.size() as u128, cap)?;
    // tables[mask] after processing coordinates 0..i holds the partial
    // product for the bits of mask below i.
    let mut tables: Vec<Vec<f64>> = vec![f.values().to_vec()];
    for i in 0..n {
        let next: Vec<(Vec<f64>, Vec<f64>)> = tables
            .into_par_iter()
            .map(|t| {
                let e = average_out(&domain, &t, i);
                let d: Vec<f64> = t.iter().zip(&e).map(|(a, b)| a - b).collect();
                (e, d)
            })
            .collect();
        // Bit i set means i ∈ S, so the difference goes to the upper half.
        let (lo, hi): (Vec<_>, Vec<_>) = next.into_iter().unzip();
        tables = lo.into_iter().chain(hi).collect();
    }
    let components = tables
        .into_iter()
        .map(|v| FunctionTable::new(domain.clone(), v))
        .collect::<Result<Vec<_>>>()?;
    Ok(ESDecomposition { domain, components })
}

/// Maximal residuals of the defining properties.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ESVerification {
    pub reconstruction: f64,
    pub slice_constancy: f64,
    pub conditional_vanishing: f64,
    /// `None` when the pairwise check exceeds [`ORTHOGONALITY_BUDGET`].
    pub orthogonality: Option<f64>,
    pub holds: bool,
}

/// Limit on `4^n · N` for the explicit pairwise orthogonality check.
pub const ORTHOGONALITY_BUDGET: u128 = 1 << 30;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionEntry {
    pub mask: u64,
    pub norm: f64,
    pub t_norm: f64,
    pub bound: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionReport {
    pub rhos: Vec<f64>,
    pub entries: Vec<ContractionEntry>,
    pub min_slack: f64,
    pub holds: bool,
}

impl ESDecomposition {
    pub fn domain(&self) -> &Arc<ProductDomain> {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.domain.n()
    }

    pub fn components(&self) -> &[FunctionTable] {
        &self.components
    }

    pub fn component(&self, mask: u64) -> &FunctionTable {
        &self.components[mask as usize]
    }

    pub fn norm_sq(&self, mask: u64) -> f64 {
        self.component(mask).expect(|v| v * v)
    }

    pub fn norms_sq(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.expect(|v| v * v)).collect()
    }

    pub fn variance(&self) -> f64 {
        self.norms_sq().iter().skip(1).sum()
    }

    /// `Σ_{1≤|S|≤dmax} ‖f_S‖² / Var f`, or 0 for constant `f`.
    pub fn es_degree_mass(&self, dmax: usize) -> f64 {
        let norms = self.norms_sq();
        let var: f64 = norms.iter().skip(1).sum();
        if var <= 0.0 {
            return 0.0;
        }
        let low: f64 = norms
            .iter()
            .enumerate()
            .filter(|(m, _)| *m != 0 && (m.count_ones() as usize) <= dmax)
            .map(|(_, v)| v)
            .sum();
        (low / var).clamp(0.0, 1.0)
    }

    /// Largest `|S|` with `‖f_S‖² > tol`.
    pub fn es_degree(&self, tol: f64) -> usize {
        self.norms_sq()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > tol)
            .map(|(m, _)| m.count_ones() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn reconstruct(&self) -> FunctionTable {
        let mut acc = vec![0.0; self.domain.size()];
        for c in &self.components {
            acc.iter_mut().zip(c.values()).for_each(|(a, v)| *a += v);
        }
        FunctionTable::new(self.domain.clone(), acc).expect("sum of finite tables")
    }

    pub fn verify(&self, f: &FunctionTable, tol: f64) -> ESVerification {
        let n = self.n();
        let reconstruction = self
            .reconstruct()
            .values()
            .iter()
            .zip(f.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = f.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut slice = 0.0f64;
        let mut vanish = 0.0f64;
        for (mask, c) in self.components.iter().enumerate() {
            for i in 0..n {
                let e = average_out(&self.domain, c.values(), i);
                let r = c
                    .values()
                    .iter()
                    .zip(&e)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if mask >> i & 1 == 1 {
                    vanish = vanish.max(e.iter().fold(0.0, |m, v| m.max(v.abs())));
                } else {
                    slice = slice.max(r / scale);
                }
            }
        }
        let pairs = (self.components.len() as u128).pow(2) * self.domain.size() as u128;
        let orthogonality = (pairs <= ORTHOGONALITY_BUDGET).then(|| {
            (0..self.components.len())
                .into_par_iter()
                .map(|s| {
                    (s + 1..self.components.len())
                        .map(|t| self.components[s].inner(&self.components[t]).abs())
                        .fold(0.0, f64::max)
                })
                .reduce(|| 0.0, f64::max)
        });
        let holds = reconstruction <= tol && slice <= tol && vanish <= tol && orthogonality.is_none_or(|o| o <= tol);
        ESVerification {
            reconstruction,
            slice_constancy: slice,
            conditional_vanishing: vanish,
            orthogonality,
            holds,
        }
    }

    /// Checks `‖T f_S‖₂ ≤ Π_{i∈S} ρ_i ‖f_S‖₂` with `T f_S = E[f_S(X) | Y]`
    /// summed directly over joint atoms.
    pub fn markov_contract_check(&self, space: &ProductSpace) -> Result<ContractionReport> {
        if !self.domain.approx_eq(space.x_domain(), 1e-12) {
            return Err(Error::domain("decomposition is not over the x-side of the space"));
        }
        let rhos = space
            .pairs()
            .iter()
            .map(|p| p.maximal_correlation())
            .collect::<Result<Vec<_>>>()?;
        let ny = space.y_domain().size();
        let m = self.components.len();
        let mut num = vec![0.0; m * ny];
        let mut den = vec![0.0; ny];
        space.for_each_atom(|x, y, p| {
            den[y] += p;
            for (s, c) in self.components.iter().enumerate() {
                num[s * ny + y] += p * c.values()[x];
            }
        })?;
        let mut entries = Vec::with_capacity(m);
        for s in 0..m {
            let t_sq: f64 = (0..ny)
                .filter(|&y| den[y] > 0.0)
                .map(|y| {
                    let v = num[s * ny + y] / den[y];
                    den[y] * v * v
                })
                .sum();
            let norm = self.norm_sq(s as u64).sqrt();
            let factor: f64 = (0..self.n()).filter(|i| s >> i & 1 == 1).map(|i| rhos[i]).product();
            let bound = factor * norm;
            let t_norm = t_sq.sqrt();
            entries.push(ContractionEntry {
                mask: s as u64,
                norm,
                t_norm,
                bound,
                slack: bound - t_norm,
            });
        }
        let min_slack = entries.iter().map(|e| e.slack).fold(f64::INFINITY, f64::min);
        Ok(ContractionReport {
            rhos,
            holds: min_slack >= -1e-9,
            entries,
            min_slack,
        })
    }

    /// `{"<mask>": {"norm_sq": v}}`, adding `"values"` when `full` is set.
    pub fn to_json(&self, full: bool) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (mask, c) in self.components.iter().enumerate() {
            let mut entry = serde_json::Map::new();
            entry.insert("norm_sq".into(), c.expect(|v| v * v).into());
            if full {
                entry.insert("values".into(), c.values().to_vec().into());
            }
            map.insert(mask.to_string(), entry.into());
        }
        map.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boolean::named_table;
    use crate::fourier::{expand, mask_members};
    use crate::product_space::{CorrelatedPair, FiniteDistribution};

    /// `E[f | X_T]` by explicit fiber averaging.
    fn conditional(f: &FunctionTable, t: u64) -> Vec<f64> {
        let d = f.domain();
        let probs = d.point_probs();
        let key = |idx: usize| -> Vec<usize> {
            let digits = d.digits(idx);
            (0..d.n())
                .map(|i| if t >> i & 1 == 1 { digits[i] } else { usize::MAX })
                .collect()
        };
        (0..d.size())
            .map(|x| {
                let kx = key(x);
                let (mut num, mut den) = (0.0, 0.0);
                for (z, (p, v)) in probs.iter().zip(f.values()).enumerate() {
                    if key(z) == kx {
                        num += p * v;
                        den += p;
                    }
                }
                num / den
            })
            .collect()
    }

    fn mobius(f: &FunctionTable, s: u64) -> Vec<f64> {
        let mut out = vec![0.0; f.domain().size()];
        let mut t = s;
        loop {
            let sign = if (s & !t).count_ones().is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            for (o, v) in out.iter_mut().zip(conditional(f, t)) {
                *o += sign * v;
            }
            if t == 0 {
                break;
            }
            t = (t - 1) & s;
        }
        out
    }

    fn mixed_domain() -> Arc<ProductDomain> {
        Arc::new(
            ProductDomain::new(vec![
                FiniteDistribution::new(vec![0.0, 1.0, 2.0], vec![0.2, 0.5, 0.3]).unwrap(),
                FiniteDistribution::new(vec![-1.0, 1.0], vec![0.4, 0.6]).unwrap(),
                FiniteDistribution::uniform(vec![0.0, 1.0, 5.0]).unwrap(),
            ])
            .unwrap(),
        )
    }

    #[test]
    fn matches_mobius_oracle() {
        let d = mixed_domain();
        let f = FunctionTable::from_fn(d, |x| (x[0] * x[1]).sin() + x[2] * x[0].powi(2) - x[1] * x[2]);
        let es = decompose(&f).unwrap();
        for s in 0..8u64 {
            let want = mobius(&f, s);
            for (a, b) in es.component(s).values().iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "mask {s}");
            }
        }
        let v = es.verify(&f, 1e-9);
        assert!(v.holds, "{v:?}");
        assert!((es.variance() - f.variance()).abs() < 1e-10);
    }

    #[test]
    fn multilinear_matches_fourier() {
        let maj = named_table("maj3", 3).unwrap();
        let es = decompose(&maj).unwrap();
        let fe = expand(&maj).unwrap();
        for s in 0..8u64 {
            let c = fe.coefficient(s);
            let members = mask_members(s);
            for (idx, v) in es.component(s).values().iter().enumerate() {
                let x = maj.domain().point(idx);
                let chi: f64 = members.iter().map(|&i| x[i]).product();
                assert!((v - c * chi).abs() < 1e-12);
            }
        }
        for d in 1..=3 {
            let m = fe.low_degree_correlation(d).unwrap();
            assert!((es.es_degree_mass(d) - m * m).abs() < 1e-9);
        }
    }

    #[test]
    fn separable_has_no_interactions() {
        let c = FiniteDistribution::uniform(vec![0.0, 1.0, 2.0]).unwrap();
        let d = Arc::new(ProductDomain::new(vec![c.clone(), c]).unwrap());
        let f = FunctionTable::from_fn(d, |x| (x[0] - 1.0) + (x[1] * x[1] - 5.0 / 3.0));
        let es = decompose(&f).unwrap();
        assert!(es.norm_sq(0) < 1e-20);
        assert!(es.norm_sq(3) < 1e-20);
        assert!((es.es_degree_mass(1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_on_three_points_matches_least_squares() {
        let c = FiniteDistribution::uniform(vec![0.0, 1.0, 2.0]).unwrap();
        let d = Arc::new(ProductDomain::new(vec![c.clone(), c]).unwrap());
        let f = FunctionTable::from_fn(d.clone(), |x| x[0] * x[1]);
        let es = decompose(&f).unwrap();
        // Least squares onto span{1, 1[x1=a], 1[x2=b]} by normal equations.
        let mut basis: Vec<Vec<f64>> = vec![vec![1.0; 9]];
        for i in 0..2 {
            for a in 0..2 {
                basis.push((0..9).map(|idx| if d.digit(idx, i) == a { 1.0 } else { 0.0 }).collect());
            }
        }
        let k = basis.len();
        let w = 1.0 / 9.0;
        let gram = nalgebra::DMatrix::from_fn(k, k, |r, s| (0..9).map(|x| w * basis[r][x] * basis[s][x]).sum::<f64>());
        let rhs = nalgebra::DVector::from_fn(k, |r, _| (0..9).map(|x| w * basis[r][x] * f.values()[x]).sum::<f64>());
        let coef = gram.lu().solve(&rhs).unwrap();
        let resid: f64 = (0..9)
            .map(|x| {
                let fit: f64 = (0..k).map(|r| coef[r] * basis[r][x]).sum();
                w * (f.values()[x] - fit).powi(2)
            })
            .sum();
        assert!((es.norm_sq(3) - resid).abs() < 1e-12);
        assert!((resid - 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn parity_mass_sits_on_top() {
        let es = decompose(&named_table("parity", 4).unwrap()).unwrap();
        assert!(es.es_degree_mass(3).abs() < 1e-12);
        assert!((es.es_degree_mass(4) - 1.0).abs() < 1e-12);
        assert_eq!(es.es_degree(1e-12), 4);
    }

    #[test]
    fn resampling_contracts_exactly() {
        let maj = named_table("maj3", 3).unwrap();
        let space = ProductSpace::uniform_bits(3, 0.6).unwrap();
        let r = decompose(&maj).unwrap().markov_contract_check(&space).unwrap();
        assert!(r.holds);
        for e in &r.entries {
            let k = e.mask.count_ones() as i32;
            assert!((e.t_norm - 0.6f64.powi(k) * e.norm).abs() < 1e-12);
        }
        let indep = ProductSpace::uniform_bits(3, 0.0).unwrap();
        let r = decompose(&maj).unwrap().markov_contract_check(&indep).unwrap();
        assert!(r.entries.iter().skip(1).all(|e| e.t_norm < 1e-12));
    }

    #[test]
    fn asymmetric_joint_contracts() {
        // Search a one-parameter family for a joint with maxcorr 0.7.
        let make = |t: f64| {
            CorrelatedPair::from_joint(
                vec![-1.0, 1.0],
                vec![0.0, 1.0],
                vec![vec![0.3 - t, t], vec![0.1 + t, 0.6 - t]],
            )
            .unwrap()
        };
        let (mut lo, mut hi) = (0.0, 0.1);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if make(mid).maximal_correlation().unwrap() > 0.7 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let pair = make(0.5 * (lo + hi));
        assert!((pair.maximal_correlation().unwrap() - 0.7).abs() < 1e-9);
        let space = ProductSpace::new(vec![pair.clone(), pair]).unwrap();
        let d = space.x_domain().clone();
        let f = FunctionTable::from_fn(d, |x| x[0] * x[1] + 0.3 * x[0]);
        let r = decompose(&f).unwrap().markov_contract_check(&space).unwrap();
        let top = &r.entries[3];
        assert!(top.norm > 0.1);
        assert!(top.t_norm <= 0.49 * top.norm + 1e-9);
        assert!(r.holds);
    }

    #[test]
    fn capacity_is_enforced() {
        let f = named_table("parity", 6).unwrap();
        assert!(matches!(decompose_with_cap(&f, 100), Err(Error::Capacity { .. })));
    }

    #[test]
    fn json_export() {
        let es = decompose(&named_table("parity", 2).unwrap()).unwrap();
        let j = es.to_json(false);
        assert!((j["3"]["norm_sq"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!(j["3"].get("values").is_none());
        assert_eq!(es.to_json(true)["3"]["values"].as_array().unwrap().len(), 4);
    }
}

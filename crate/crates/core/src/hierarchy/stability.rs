use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::certify::{component_table, output_law};
use super::{Hierarchy, HierarchyNode, Kind};
use crate::error::{Error, Result};
use crate::fourier::{expand, FunctionTable};
use crate::maxcorr::induced_pair;
use crate::product_space::{
    check_cap, enumeration_cap, CorrelatedPair, FiniteDistribution, ProductDomain, ProductSpace,
};
use crate::rng::run_blocks;
use crate::stats::Estimate;

pub const MIN_MC_SAMPLES: usize = 1000;

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::domain(format!("rho {rho} is outside [0, 1]")))
    }
}

fn finite_leaf(h: &Hierarchy, i: usize) -> Result<&FiniteDistribution> {
    h.leaves()[i]
        .finite()
        .ok_or_else(|| Error::domain(format!("input {i} is continuous; use the Monte Carlo estimator")))
}

struct Wire {
    value: f64,
    law: FiniteDistribution,
}

fn joint(h: &Hierarchy, node: &HierarchyNode, rho: f64) -> Result<CorrelatedPair> {
    match node {
        HierarchyNode::Leaf(i) => CorrelatedPair::resampling(finite_leaf(h, *i)?, rho),
        HierarchyNode::Internal {
            component, children, ..
        } => {
            let pairs = children.iter().map(|c| joint(h, c, rho)).collect::<Result<Vec<_>>>()?;
            let space = ProductSpace::new(pairs)?;
            let fx = component_table(component, space.x_domain().coords())?;
            let fy = component_table(component, space.y_domain().coords())?;
            let fx = FunctionTable::new(space.x_domain().clone(), fx.values().to_vec())?;
            let fy = FunctionTable::new(space.y_domain().clone(), fy.values().to_vec())?;
            induced_pair(&fx, &fy, &space)
        }
    }
}

fn wire(h: &Hierarchy, node: &HierarchyNode, rho: f64) -> Result<Wire> {
    match node {
        HierarchyNode::Leaf(i) => Ok(Wire {
            value: rho,
            law: finite_leaf(h, *i)?.clone(),
        }),
        HierarchyNode::Internal {
            component,
            children,
            kind: Kind::Multilinear,
            ..
        } => {
            let ws = children.iter().map(|c| wire(h, c, rho)).collect::<Result<Vec<_>>>()?;
            let laws: Vec<FiniteDistribution> = ws.iter().map(|w| w.law.clone()).collect();
            let values: Vec<f64> = ws.iter().map(|w| w.value).collect();
            let table = component_table(component, &laws)?;
            let value = expand(&table)?.stability(&values)?;
            Ok(Wire {
                value,
                law: output_law(&table)?,
            })
        }
        HierarchyNode::Internal {
            kind: Kind::General, ..
        } => {
            let pair = joint(h, node, rho)?;
            Ok(Wire {
                value: pair.maximal_correlation()?,
                law: pair.x().clone(),
            })
        }
    }
}

/// Propagates wire correlations bottom-up. Multilinear nodes apply the
/// product formula `Σ_S (Π_{i∈S} ρ_i) f̂(S)² / Var` to their children's
/// values; general nodes return the maximal correlation of the exact joint
/// law of their output pair.
pub fn stability_recursive(h: &Hierarchy, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(wire(h, h.root(), rho)?.value)
}

/// The composed function as one table over all inputs.
pub fn composed_table(h: &Hierarchy) -> Result<FunctionTable> {
    let laws = (0..h.n())
        .map(|i| finite_leaf(h, i).cloned())
        .collect::<Result<Vec<_>>>()?;
    let states: u128 = laws.iter().map(|d| d.len() as u128).product();
    check_cap(states, enumeration_cap())?;
    let domain = Arc::new(ProductDomain::new(laws)?);
    let values = (0..domain.size())
        .map(|idx| h.root().eval_unchecked(&domain.point(idx)))
        .collect::<Result<Vec<_>>>()?;
    FunctionTable::new(domain, values)
}

/// `Corr(f(X), f(Y))` under per-input `rho`-resampling, from the Fourier
/// expansion of the composed table when it is multilinear and by joint
/// enumeration otherwise.
pub fn stability_exact(h: &Hierarchy, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let table = composed_table(h)?;
    match expand(&table) {
        Ok(e) => Ok(e.stability_uniform(rho)),
        Err(Error::NotMultilinear { .. }) => {
            let var = table.variance();
            if var <= 0.0 {
                return Ok(0.0);
            }
            let mean = table.mean();
            let space = ProductSpace::resampling(table.domain(), &vec![rho; h.n()])?;
            let mut e = 0.0;
            space.for_each_atom(|x, y, p| e += p * table.values()[x] * table.values()[y])?;
            Ok((e - mean * mean) / var)
        }
        Err(e) => Err(e),
    }
}

/// Lower bound `ρ·W₁/Var` on the stability of a hierarchy over finite
/// inputs, where `W₁ = Σ_i E[f·x̃_i]²` is the degree-one mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeOneFloor {
    pub rho: f64,
    pub degree_one_mass: f64,
    pub variance: f64,
    pub floor: f64,
}

/// For each leaf `i` below `node`, `u_i(w) = E[x̃_i · 1{h = w}]` over the
/// node's output values `w`; returned with the node's output law.
fn leaf_moments(h: &Hierarchy, node: &HierarchyNode) -> Result<(FiniteDistribution, Vec<Vec<f64>>)> {
    match node {
        HierarchyNode::Leaf(i) => {
            let law = finite_leaf(h, *i)?.clone();
            let u = law
                .support()
                .iter()
                .zip(law.probs())
                .map(|(v, p)| law.normalize(*v) * p)
                .collect();
            Ok((law, vec![u]))
        }
        HierarchyNode::Internal {
            component, children, ..
        } => {
            let parts = children
                .iter()
                .map(|c| leaf_moments(h, c))
                .collect::<Result<Vec<_>>>()?;
            let laws: Vec<FiniteDistribution> = parts.iter().map(|p| p.0.clone()).collect();
            let table = component_table(component, &laws)?;
            let out = output_law(&table)?;
            let domain = table.domain();
            let probs = domain.point_probs();
            let level: Vec<usize> = table.values().iter().map(|v| out.index_of(*v).unwrap()).collect();
            let mut moments = Vec::new();
            for (j, (law, us)) in parts.iter().enumerate() {
                // cond[v][w] = P(c = w | H_j = v)
                let mut cond = vec![vec![0.0; out.len()]; law.len()];
                for (idx, p) in probs.iter().enumerate() {
                    let v = domain.digit(idx, j);
                    cond[v][level[idx]] += p / law.probs()[v];
                }
                for u in us {
                    moments.push(
                        (0..out.len())
                            .map(|w| u.iter().zip(&cond).map(|(uv, row)| uv * row[w]).sum())
                            .collect(),
                    );
                }
            }
            Ok((out, moments))
        }
    }
}

pub fn floor_degree_one(h: &Hierarchy, rho: f64) -> Result<DegreeOneFloor> {
    check_rho(rho)?;
    let (law, moments) = leaf_moments(h, h.root())?;
    let degree_one_mass: f64 = moments
        .iter()
        .map(|u| u.iter().zip(law.support()).map(|(m, w)| m * w).sum::<f64>().powi(2))
        .sum();
    let variance = law.variance();
    let floor = if variance > 0.0 {
        rho * degree_one_mass / variance
    } else {
        0.0
    };
    Ok(DegreeOneFloor {
        rho,
        degree_one_mass,
        variance,
        floor,
    })
}

/// Monte Carlo estimate of `Corr(f(X), f(Y))` with per-input resampling.
/// Blocks of samples use independent streams, so the result does not depend
/// on `workers`.
pub fn stability_mc(h: &Hierarchy, rho: f64, seed: u64, samples: usize, workers: usize) -> Result<Estimate> {
    check_rho(rho)?;
    if samples < MIN_MC_SAMPLES {
        return Err(Error::domain(format!("need at least {MIN_MC_SAMPLES} samples")));
    }
    let n = h.n();
    let blocks = run_blocks(seed, samples, workers, |rng, len| -> Result<Vec<(f64, f64)>> {
        let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
        (0..len)
            .map(|_| {
                for (i, law) in h.leaves().iter().enumerate() {
                    (x[i], y[i]) = law.sample_pair(rho, rng);
                }
                Ok((h.root().eval_unchecked(&x)?, h.root().eval_unchecked(&y)?))
            })
            .collect()
    });
    let mut pairs = Vec::with_capacity(samples);
    for b in blocks {
        pairs.extend(b?);
    }
    Ok(Estimate::correlation(&pairs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: f64) -> f64 {
        0.75 * s + 0.25 * s.powi(3)
    }

    #[test]
    fn recursive_maj3_matches_exact() {
        let h = Hierarchy::recursive_maj3(2).unwrap();
        let rec = stability_recursive(&h, 0.8).unwrap();
        assert!((r(0.8) - 0.728).abs() < 1e-15);
        assert!((rec - r(r(0.8))).abs() < 1e-12);
        assert!((stability_exact(&h, 0.8).unwrap() - rec).abs() < 1e-10);
        let g = h.with_kind(Kind::General);
        assert!((stability_recursive(&g, 0.8).unwrap() - rec).abs() < 1e-10);
    }

    #[test]
    fn parity_tree_is_rho_to_leaves() {
        let h = Hierarchy::parity_tree(3).unwrap();
        for rho in [0.3, 0.9] {
            assert!((stability_recursive(&h, rho).unwrap() - rho.powi(8)).abs() < 1e-12);
            assert!((stability_exact(&h, rho).unwrap() - rho.powi(8)).abs() < 1e-12);
        }
    }

    #[test]
    fn full_correlation_is_preserved() {
        for h in [
            Hierarchy::recursive_maj3(2).unwrap(),
            Hierarchy::maj_plus_first(2, 0.5).unwrap(),
        ] {
            assert!((stability_recursive(&h, 1.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn maj_plus_first_exact_matches_enumeration() {
        let h = Hierarchy::maj_plus_first(2, 0.5).unwrap();
        let rho: f64 = 0.9;
        // Cov = ρ + 20ρ·(1/4) + 100·r²(ρ) with Var = 101 + 20/4.
        let want = (rho + 5.0 * rho + 100.0 * r(r(rho))) / 106.0;
        assert!((stability_exact(&h, rho).unwrap() - want).abs() < 1e-12);
        // The wire through g carries b2 = x1 exactly, so the top maxcorr is 1·ρ at least.
        assert!(stability_recursive(&h, rho).unwrap() >= rho - 1e-12);
    }

    #[test]
    fn degree_one_floor_matches_fourier() {
        let h = Hierarchy::maj_plus_first(2, 0.5).unwrap();
        let f = floor_degree_one(&h, 0.9).unwrap();
        let e = expand(&composed_table(&h).unwrap()).unwrap();
        let w1 = e.degree_profile()[1];
        assert!((f.degree_one_mass - w1).abs() < 1e-10);
        assert!((f.variance - e.variance()).abs() < 1e-10);
        let h3 = Hierarchy::maj_plus_first(3, 0.5).unwrap();
        let f3 = floor_degree_one(&h3, 0.9).unwrap();
        assert!((f3.variance - 103.5).abs() < 1e-10);
        assert!((f3.degree_one_mass - 45.6875).abs() < 1e-10);
    }

    #[test]
    fn mc_is_worker_independent_and_covers() {
        let h = Hierarchy::recursive_maj3(2).unwrap();
        let a = stability_mc(&h, 0.8, 7, 20_000, 1).unwrap();
        let b = stability_mc(&h, 0.8, 7, 20_000, 3).unwrap();
        assert_eq!(a, b);
        assert!((a.estimate - r(r(0.8))).abs() <= 3.0 * a.std_error);
        let z = stability_mc(&h, 0.0, 7, 20_000, 1).unwrap();
        assert!(z.estimate.abs() <= 4.0 * z.std_error);
        assert!(stability_mc(&h, 0.8, 7, 10, 1).is_err());
    }

    #[test]
    fn continuous_inputs_need_mc() {
        let h = Hierarchy::cos_arccos(2, 0.5).unwrap();
        assert!(matches!(stability_recursive(&h, 0.5), Err(Error::Domain(_))));
        let est = stability_mc(&h, 0.5, 1, 5000, 1).unwrap();
        assert!((est.estimate - 0.5).abs() <= 4.0 * est.std_error);
    }
}

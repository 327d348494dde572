use std::sync::Arc;

use hierstab::efron_stein::decompose;
use hierstab::fourier::{expand, FourierExpansion, FunctionTable};
use hierstab::hierarchy::{
    decay_bounds, decay_iterate, inspect, stability_exact, stability_mc, stability_recursive, Builtin, Component,
    Hierarchy, HierarchyNode, Kind, LeafLaw, TableComponent,
};
use hierstab::maxcorr::{induced_pair, maximal_correlation_power, maximal_correlation_svd, non_separability};
use hierstab::percolation::{crossing, Configuration, TriangularGrid};
use hierstab::{CorrelatedPair, FiniteDistribution, ProductDomain, ProductSpace};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn distribution(max_k: usize) -> impl Strategy<Value = FiniteDistribution> {
    (2..=max_k)
        .prop_flat_map(|k| {
            (
                prop::collection::btree_set(-40i32..40, k),
                prop::collection::vec(0.05f64..1.0, k),
            )
        })
        .prop_map(|(support, w)| {
            let total: f64 = w.iter().sum();
            let support = support.into_iter().map(|v| v as f64 / 8.0).collect();
            let mut probs: Vec<f64> = w.iter().map(|x| x / total).collect();
            let k = probs.len();
            probs[k - 1] = 1.0 - probs[..k - 1].iter().sum::<f64>();
            FiniteDistribution::new(support, probs).unwrap()
        })
}

fn domain(max_n: usize, max_k: usize) -> impl Strategy<Value = Arc<ProductDomain>> {
    prop::collection::vec(distribution(max_k), 1..=max_n).prop_map(|c| Arc::new(ProductDomain::new(c).unwrap()))
}

fn table(max_n: usize, max_k: usize) -> impl Strategy<Value = FunctionTable> {
    domain(max_n, max_k).prop_flat_map(|d| {
        let size = d.size();
        prop::collection::vec(-4.0f64..4.0, size).prop_map(move |v| FunctionTable::new(d.clone(), v).unwrap())
    })
}

fn multilinear(max_n: usize) -> impl Strategy<Value = FunctionTable> {
    domain(max_n, 3).prop_flat_map(|d| {
        let m = 1usize << d.n();
        prop::collection::vec(-1.0f64..1.0, m).prop_map(move |c| {
            let coeffs = c.into_iter().enumerate().map(|(i, v)| (i as u64, v));
            FourierExpansion::from_coefficients(d.clone(), coeffs)
                .unwrap()
                .reconstruct()
                .unwrap()
        })
    })
}

/// Random joint law on `k × l` points with full support.
fn joint(max_k: usize) -> impl Strategy<Value = CorrelatedPair> {
    (2..=max_k, 2..=max_k)
        .prop_flat_map(|(k, l)| prop::collection::vec(0.01f64..1.0, k * l).prop_map(move |w| (k, l, w)))
        .prop_map(|(k, l, w)| {
            let total: f64 = w.iter().sum();
            let rows = (0..k).map(|a| (0..l).map(|b| w[a * l + b] / total).collect()).collect();
            CorrelatedPair::from_joint(
                (0..k).map(|v| v as f64).collect(),
                (0..l).map(|v| v as f64).collect(),
                rows,
            )
            .unwrap()
        })
}

/// Random symmetric joint on `k` points, so both sides share one marginal.
fn symmetric_joint(max_k: usize) -> impl Strategy<Value = CorrelatedPair> {
    (2..=max_k)
        .prop_flat_map(|k| prop::collection::vec(0.01f64..1.0, k * k).prop_map(move |w| (k, w)))
        .prop_map(|(k, w)| {
            let sym: Vec<f64> = (0..k * k).map(|i| w[i] + w[(i % k) * k + i / k]).collect();
            let total: f64 = sym.iter().sum();
            let rows = (0..k)
                .map(|a| (0..k).map(|b| sym[a * k + b] / total).collect())
                .collect();
            let s: Vec<f64> = (0..k).map(|v| v as f64).collect();
            CorrelatedPair::from_joint(s.clone(), s, rows).unwrap()
        })
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn fourier_parseval_and_roundtrip(f in multilinear(4)) {
        let e = expand(&f).unwrap();
        let second = f.expect(|v| v * v);
        prop_assert!((e.second_moment() - second).abs() <= 1e-9 * second.max(1.0));
        let back = e.reconstruct().unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn stability_is_monotone_and_bounded(f in multilinear(4), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let e = expand(&f).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (sl, sh) = (e.stability_uniform(lo), e.stability_uniform(hi));
        prop_assert!(sl <= sh + 1e-12);
        prop_assert!(sh <= 1.0 + 1e-12 && sl >= -1e-12);
        prop_assert!(e.check_lemma_multilinear(hi).unwrap().holds);
        if hi > 0.0 {
            for d in 1..=e.n() {
                prop_assert!(e.check_low_degree_bound(d, hi).unwrap().holds);
            }
        }
    }

    #[test]
    fn lemma_with_heterogeneous_rhos(f in multilinear(4), rhos in prop::collection::vec(0.0f64..=1.0, 4)) {
        let e = expand(&f).unwrap();
        let r = e.check_lemma_multilinear_hetero(&rhos[..e.n()]).unwrap();
        prop_assert!(r.holds, "{:?}", r);
    }

    #[test]
    fn es_linearity(
        (f, g) in domain(3, 3).prop_flat_map(|d| {
            let s = d.size();
            (prop::collection::vec(-3.0f64..3.0, s), prop::collection::vec(-3.0f64..3.0, s))
                .prop_map(move |(a, b)| (FunctionTable::new(d.clone(), a).unwrap(), FunctionTable::new(d.clone(), b).unwrap()))
        }),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let combo = decompose(&f.combine(a, &g, b)).unwrap();
        let (df, dg) = (decompose(&f).unwrap(), decompose(&g).unwrap());
        for s in 0..1u64 << f.n() {
            let want = df.component(s).combine(a, dg.component(s), b);
            for (x, y) in combo.component(s).values().iter().zip(want.values()) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn es_verifies_and_sums_to_variance(f in table(3, 3)) {
        let es = decompose(&f).unwrap();
        let v = es.verify(&f, 1e-9);
        prop_assert!(v.holds, "{:?}", v);
        prop_assert!((es.variance() - f.variance()).abs() < 1e-9);
        let full = if f.variance() > 1e-12 { 1.0 } else { 0.0 };
        prop_assert!((es.es_degree_mass(f.n()) - full).abs() < 1e-9);
    }

    #[test]
    fn es_contracts_under_any_coupling(pairs in prop::collection::vec(joint(3), 1..=3), seed in any::<u64>()) {
        let space = ProductSpace::new(pairs).unwrap();
        let d = space.x_domain().clone();
        let values = (0..d.size()).map(|i| ((i as u64).wrapping_mul(seed | 1) % 97) as f64 / 10.0).collect();
        let f = FunctionTable::new(d, values).unwrap();
        let r = decompose(&f).unwrap().markov_contract_check(&space).unwrap();
        prop_assert!(r.holds, "min slack {}", r.min_slack);
    }

    #[test]
    fn maxcorr_routes_agree(p in joint(5)) {
        let a = maximal_correlation_svd(&p).unwrap();
        let b = maximal_correlation_power(&p).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        prop_assert!((a - maximal_correlation_svd(&p.transpose()).unwrap()).abs() < 1e-10);
        prop_assert!(p.pearson().abs() <= a + 1e-12 && a <= 1.0 + 1e-9);
    }

    #[test]
    fn resampling_maxcorr_is_pearson(d in distribution(6), rho in 0.0f64..=1.0) {
        let p = CorrelatedPair::resampling(&d, rho).unwrap();
        prop_assert!((p.maximal_correlation().unwrap() - rho).abs() < 1e-9);
        prop_assert!((p.pearson() - rho).abs() < 1e-9);
    }

    #[test]
    fn non_separability_report_invariants(f in table(3, 3)) {
        let r = non_separability(&f).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.epsilon));
        if !r.degenerate {
            prop_assert!((r.corr_to_separable.powi(2) + r.epsilon - 1.0).abs() < 1e-9);
        }
    }

    /// Independent route through Efron–Stein: the squared correlation of
    /// `h(f)` with separable functions is its degree-one ES mass over its
    /// variance. The witness must attain the report and no `h` may beat it.
    #[test]
    fn non_separability_witness_is_extremal(
        (f, hs) in domain(3, 3).prop_flat_map(|d| {
            let size = d.size();
            (
                prop::collection::vec(0i32..4, size)
                    .prop_map(move |v| FunctionTable::new(d.clone(), v.into_iter().map(f64::from).collect()).unwrap()),
                prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 8),
            )
        })
    ) {
        let r = non_separability(&f).unwrap();
        prop_assume!(!r.degenerate);
        let sep_sq = |h: &FunctionTable| {
            let es = decompose(h).unwrap();
            let var = es.variance();
            let one: f64 = (0..h.n()).map(|i| es.norm_sq(1 << i)).sum();
            if var > 1e-12 { Some(one / var) } else { None }
        };
        let lookup = |v: f64| r.witness.iter().find(|w| (w.0 - v).abs() < 1e-9).unwrap().1;
        let attained = sep_sq(&f.map(lookup)).unwrap();
        prop_assert!((attained - r.corr_to_separable.powi(2)).abs() < 1e-9);
        for h in hs {
            if let Some(c) = sep_sq(&f.map(|v| h[v as usize])) {
                prop_assert!(c <= r.corr_to_separable.powi(2) + 1e-9);
            }
        }
    }

    #[test]
    fn decay_chain(eps in 0.05f64..=1.0, frac in 0.05f64..0.95, rho in 0.0f64..0.999, d in 1usize..60) {
        let delta = eps * frac;
        let b = decay_bounds(eps, delta, rho, d).unwrap();
        prop_assert!(b.iterate_bound <= b.closed_form + 1e-12);
        prop_assert!(b.floor <= b.iterate_bound + 1e-12);
        prop_assert!((b.iterate_bound - decay_iterate(eps, rho, d)).abs() == 0.0);
    }

    #[test]
    fn crossing_duality_and_monotonicity(n in 1usize..10, bits in prop::collection::vec(any::<bool>(), 100), flip in 0usize..100) {
        let g = TriangularGrid::new(n).unwrap();
        let sites = g.sites();
        let mut c = Configuration::closed(sites);
        for (i, b) in bits.iter().take(sites).enumerate() { c.set(i, *b); }
        let mut dual = Configuration::closed(sites);
        for r in 0..n {
            for col in 0..n {
                dual.set(g.site(col, r), !c.get(g.site(r, col)));
            }
        }
        prop_assert_eq!(crossing(&g, &c).unwrap(), -crossing(&g, &dual).unwrap());
        let mut up = c.clone();
        up.set(flip % sites, true);
        prop_assert!(crossing(&g, &up).unwrap() >= crossing(&g, &c).unwrap());
    }
}

proptest! {
    #![proptest_config(config(100))]

    /// Data processing and the non-separable bound, with every pair sharing
    /// its marginal between the two sides.
    #[test]
    fn induced_pair_bounds(pairs in prop::collection::vec(symmetric_joint(3), 1..=3), seed in any::<u64>()) {
        let space = ProductSpace::new(pairs).unwrap();
        let d = space.x_domain().clone();
        let values: Vec<f64> = (0..d.size()).map(|i| (((i as u64) ^ seed).wrapping_mul(0x9e37_79b9) % 5) as f64).collect();
        let f = FunctionTable::new(d, values).unwrap();
        let g = FunctionTable::new(space.y_domain().clone(), f.values().to_vec()).unwrap();
        let rho = space.pairs().iter().map(|p| p.maximal_correlation().unwrap()).fold(0.0, f64::max);
        let m = induced_pair(&f, &g, &space).unwrap().maximal_correlation().unwrap();
        prop_assert!(m <= rho + 1e-9);
        let eps = non_separability(&f).unwrap().epsilon;
        prop_assert!(m <= (1.0 - eps) * rho + eps * rho * rho + 1e-9, "m {} eps {} rho {}", m, eps, rho);
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn recursive_matches_exact_on_random_trees(shape in prop::collection::vec(0usize..3, 3), rho in 0.0f64..=1.0) {
        // Root over three subtrees, each a leaf, a Maj3 or a 2-bit parity.
        let mut next = 0;
        let mut children = Vec::new();
        for s in &shape {
            let mut take = |k: usize| { let v: Vec<_> = (next..next + k).map(HierarchyNode::Leaf).collect(); next += k; v };
            children.push(match s {
                0 => take(1).pop().unwrap(),
                1 => HierarchyNode::internal(Component::Builtin(Builtin::Maj), take(3), 0.25, Kind::Multilinear),
                _ => HierarchyNode::internal(Component::Builtin(Builtin::Parity), take(2), 1.0, Kind::Multilinear),
            });
        }
        let root = HierarchyNode::internal(Component::Builtin(Builtin::Maj), children, 0.25, Kind::Multilinear);
        let h = Hierarchy::new(root, vec![LeafLaw::fair_bit(); next]).unwrap();
        let exact = stability_exact(&h, rho).unwrap();
        prop_assert!((stability_recursive(&h, rho).unwrap() - exact).abs() < 1e-10);
        let general = h.clone().with_kind(Kind::General);
        prop_assert!((stability_recursive(&general, rho).unwrap() - exact).abs() < 1e-10);
    }

    #[test]
    fn floor_below_exact_for_recursive_maj3(rho in 0.0f64..=1.0) {
        for d in 1..=2 {
            let h = Hierarchy::recursive_maj3(d).unwrap();
            let exact = stability_exact(&h, rho).unwrap();
            prop_assert!(exact >= 0.75f64.powi(d as i32) * rho - 1e-9);
            prop_assert!(exact <= decay_iterate(0.25, rho, d) + 1e-12);
        }
    }

    #[test]
    fn certify_is_equivariant_under_child_swap(values in prop::collection::vec(-2.0f64..2.0, 4)) {
        let par = |a, b| HierarchyNode::internal(
            Component::Builtin(Builtin::Parity),
            vec![HierarchyNode::Leaf(a), HierarchyNode::Leaf(b)],
            1.0,
            Kind::Multilinear,
        );
        let s = vec![-1.0, 1.0];
        let t = TableComponent::new(vec![s.clone(), s.clone()], values.clone()).unwrap();
        // Swap arguments: entry (a, b) moves to (b, a).
        let swapped = TableComponent::new(vec![s.clone(), s], vec![values[0], values[2], values[1], values[3]]).unwrap();
        let eps = 1e-3;
        let h1 = Hierarchy::new(
            HierarchyNode::internal(Component::Table { table: t }, vec![par(0, 1), par(2, 3)], eps, Kind::General),
            vec![LeafLaw::fair_bit(); 4],
        ).unwrap();
        let h2 = Hierarchy::new(
            HierarchyNode::internal(Component::Table { table: swapped }, vec![par(2, 3), par(0, 1)], eps, Kind::General),
            vec![LeafLaw::fair_bit(); 4],
        ).unwrap();
        let (r1, r2) = (inspect(&h1).unwrap(), inspect(&h2).unwrap());
        let (a, b) = (r1.nodes.last().unwrap(), r2.nodes.last().unwrap());
        prop_assert_eq!(a.passes, b.passes);
        match (a.non_separability, b.non_separability) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x, y),
        }
        match (a.d_lin, b.d_lin) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x, y),
        }
        prop_assert_eq!(r1, inspect(&h1).unwrap());
    }

    #[test]
    fn mc_is_deterministic_across_workers(seed in any::<u64>(), workers in 2usize..4) {
        let h = Hierarchy::recursive_maj3(2).unwrap();
        let a = stability_mc(&h, 0.7, seed, 5000, 1).unwrap();
        let b = stability_mc(&h, 0.7, seed, 5000, workers).unwrap();
        prop_assert_eq!(a, b);
    }
}

use std::path::Path;

use serde::Serialize;

use hierstab::descriptor::{from_json, function_from_spec, FunctionDesc, HierarchyDesc, PairDesc, SpaceDesc};
use hierstab::efron_stein::{decompose, ContractionReport, ESVerification};
use hierstab::fourier::{expand, LemmaReport, LowDegreeReport};
use hierstab::hierarchy::{
    decay_bounds, floor_degree_one, inspect, stability_exact, stability_mc, stability_recursive, CertificationReport,
    DecayBoundReport, DegreeOneFloor, Hierarchy, HierarchyNode, Kind, MIN_MC_SAMPLES,
};
use hierstab::maxcorr::{
    induced_pair, induced_pair_mc, maximal_correlation, maximal_correlation_power, maximal_correlation_svd,
    non_separability, NonSeparabilityReport, DENSE_SVD_MAX,
};
use hierstab::percolation::{
    crossing_stability, exact_spectrum_small, SpectrumReport, TriangularGrid, EXACT_MAX_SITES,
};
use hierstab::product_space::enumeration_cap;
use hierstab::rng::stream_rng;
use hierstab::stats::Estimate;
use hierstab::{Error, FunctionTable, ProductSpace, EXACT_TOL, USER_TOL};
use rand::Rng;

use crate::args::*;
use crate::output::{json, num, opt_num, Artifact, Table};
use crate::CliError;

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(from_json(&text)?)
}

fn json_only(format: Format, command: &str) -> Result<(), CliError> {
    match format {
        Format::Json => Ok(()),
        Format::Csv => Err(CliError::Usage(format!("{command} has no CSV form; use --format json"))),
    }
}

fn check_unit(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{name} {v} is outside [0, 1]")))
    }
}

fn check_samples(samples: usize) -> Result<(), CliError> {
    if samples < MIN_MC_SAMPLES {
        Err(CliError::Usage(format!("--samples must be at least {MIN_MC_SAMPLES}")))
    } else {
        Ok(())
    }
}

#[derive(Serialize)]
struct FunctionSummary {
    n: usize,
    mean: f64,
    variance: f64,
    multilinear: bool,
}

#[derive(Serialize)]
struct AnalyzeReport {
    function: FunctionSummary,
    rho: f64,
    stability: f64,
    d_lin: Option<f64>,
    lemma_bound: Option<f64>,
    lemma: Option<LemmaReport>,
    /// Entry `k` is the squared norm of the degree-`k` part.
    degree_profile: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    low_degree: Option<LowDegreeReport>,
    non_separability: NonSeparabilityReport,
}

fn by_degree(norms: impl IntoIterator<Item = (u64, f64)>, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for (mask, w) in norms {
        out[mask.count_ones() as usize] += w;
    }
    out
}

pub fn analyze(a: &AnalyzeArgs) -> Result<Artifact, CliError> {
    json_only(a.common.format, "analyze")?;
    check_unit("rho", a.rho)?;
    let f = function_from_spec(&a.function)?;
    let summary = |multilinear| FunctionSummary {
        n: f.n(),
        mean: f.mean(),
        variance: f.variance(),
        multilinear,
    };
    let report = match expand(&f) {
        Ok(e) => {
            let lemma = e.check_lemma_multilinear(a.rho)?;
            let low_degree = a.degree.map(|d| e.check_low_degree_bound(d, a.rho)).transpose()?;
            AnalyzeReport {
                function: summary(true),
                rho: a.rho,
                stability: e.stability_uniform(a.rho),
                d_lin: Some(e.distance_to_lin()),
                lemma_bound: Some(lemma.bound),
                lemma: Some(lemma),
                degree_profile: e.degree_profile(),
                low_degree,
                non_separability: non_separability(&f)?,
            }
        }
        Err(Error::NotMultilinear { .. }) => {
            if a.degree.is_some() {
                return Err(CliError::Usage("--degree needs a multilinear function".into()));
            }
            // Resampling stability from the Efron–Stein weights.
            let es = decompose(&f)?;
            let var = es.variance();
            let stability = if var > 0.0 {
                es.norms_sq()
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(mask, w)| a.rho.powi(mask.count_ones() as i32) * w)
                    .sum::<f64>()
                    / var
            } else {
                0.0
            };
            AnalyzeReport {
                function: summary(false),
                rho: a.rho,
                stability,
                d_lin: None,
                lemma_bound: None,
                lemma: None,
                degree_profile: by_degree(es.norms_sq().into_iter().enumerate().map(|(m, w)| (m as u64, w)), f.n()),
                low_degree: None,
                non_separability: non_separability(&f)?,
            }
        }
        Err(e) => return Err(e.into()),
    };
    json(&report)
}

#[derive(Serialize)]
struct StabilityOut {
    method: &'static str,
    value: f64,
    /// Set when general components propagated their maximal correlation,
    /// making `value` an upper bound on the correlation.
    upper_bound: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<Estimate>,
}

#[derive(Serialize)]
struct HierarchyReport {
    hierarchy: HierarchyDesc,
    certification: CertificationReport,
    rho: f64,
    stability: StabilityOut,
    floor: Option<DegreeOneFloor>,
    /// Present when every component is certified and `rho < 1`.
    decay: Option<DecayBoundReport>,
    within_bound: Option<bool>,
}

fn min_declared(node: &HierarchyNode) -> f64 {
    match node {
        HierarchyNode::Leaf(_) => f64::INFINITY,
        HierarchyNode::Internal {
            children,
            declared_epsilon,
            ..
        } => children.iter().map(min_declared).fold(*declared_epsilon, f64::min),
    }
}

fn has_general(node: &HierarchyNode) -> bool {
    match node {
        HierarchyNode::Leaf(_) => false,
        HierarchyNode::Internal { children, kind, .. } => *kind == Kind::General || children.iter().any(has_general),
    }
}

fn builtin_hierarchy(b: BuiltinHierarchy, depth: usize, eps: Option<f64>) -> Result<Hierarchy, CliError> {
    let h = match b {
        BuiltinHierarchy::RecursiveMaj3 => Hierarchy::recursive_maj3(depth)?,
        BuiltinHierarchy::ParityTree => Hierarchy::parity_tree(depth)?,
        BuiltinHierarchy::CosArccos => Hierarchy::cos_arccos(depth, 0.5)?,
        BuiltinHierarchy::MajPlusFirst => Hierarchy::maj_plus_first(depth, 0.5)?,
    };
    Ok(match eps {
        Some(e) => h.with_declared_epsilon(e)?,
        None => h,
    })
}

pub fn hierarchy(a: &HierarchyArgs) -> Result<Artifact, CliError> {
    json_only(a.common.format, "hierarchy")?;
    check_unit("rho", a.rho)?;
    let h = match (&a.input, a.builtin) {
        (Some(path), _) => {
            let mut h = read_json::<HierarchyDesc>(path)?.build()?;
            if let Some(e) = a.eps {
                h = h.with_declared_epsilon(e)?;
            }
            h
        }
        (None, Some(b)) => builtin_hierarchy(b, a.depth, a.eps)?,
        (None, None) => return Err(CliError::Usage("give --input or --builtin".into())),
    };
    let finite = h.leaves().iter().all(|l| l.is_finite());
    let method = match a.method {
        Method::Auto if finite => Method::Recursive,
        Method::Auto => Method::Mc,
        m => m,
    };
    if method == Method::Mc {
        check_samples(a.common.samples)?;
    }

    let certification = inspect(&h)?;
    if !a.inspect {
        if let Some(node) = certification.nodes.iter().find(|n| !n.passes) {
            return Err(Error::Certification {
                node: node.path.clone(),
                declared: node.declared_epsilon,
                certified: node.certified_epsilon.unwrap_or(0.0),
            }
            .into());
        }
    }

    let stability = match method {
        Method::Recursive => StabilityOut {
            method: "recursive",
            value: stability_recursive(&h, a.rho)?,
            upper_bound: has_general(h.root()),
            monte_carlo: None,
        },
        Method::Exact => StabilityOut {
            method: "exact",
            value: stability_exact(&h, a.rho)?,
            upper_bound: false,
            monte_carlo: None,
        },
        _ => {
            let est = stability_mc(&h, a.rho, a.common.seed, a.common.samples, a.common.workers)?;
            StabilityOut {
                method: "monte-carlo",
                value: est.estimate,
                upper_bound: false,
                monte_carlo: Some(est),
            }
        }
    };
    let floor = if finite {
        Some(floor_degree_one(&h, a.rho)?)
    } else {
        None
    };

    let (decay, within_bound) = if certification.certified && a.rho < 1.0 {
        let eps = min_declared(h.root());
        let delta = a.delta.unwrap_or(eps / 2.0);
        let mut d = decay_bounds(eps, delta, a.rho, h.depth())?;
        let within = match stability.monte_carlo {
            Some(est) => {
                d = d.with_measurement(est);
                d.holds()
            }
            None => d.holds() && stability.value <= d.iterate_bound + USER_TOL,
        };
        (Some(d), Some(within))
    } else {
        (None, None)
    };

    json(&HierarchyReport {
        hierarchy: HierarchyDesc::of(&h),
        certification,
        rho: a.rho,
        stability,
        floor,
        decay,
        within_bound,
    })
}

pub fn decay(a: &DecayArgs) -> Result<Artifact, CliError> {
    let depths = parse_range(&a.depths).map_err(CliError::Usage)?;
    let delta = a.delta.unwrap_or(a.eps / 2.0);
    let reports = depths
        .iter()
        .map(|&d| {
            let r = decay_bounds(a.eps, delta, a.rho, d)?;
            Ok(match a.resilient {
                Some(t) => r.with_resilience(t),
                None => r,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    match a.common.format {
        Format::Json => json(&reports),
        Format::Csv => {
            let mut t = Table::new(vec![
                "d",
                "epsilon",
                "delta",
                "rho",
                "alpha",
                "steps_to_alpha",
                "C",
                "iterate_bound",
                "closed_form",
                "floor",
                "doubly_exponential",
                "resilient_bound",
            ]);
            for r in &reports {
                t.push(vec![
                    r.d.to_string(),
                    num(r.epsilon),
                    num(r.delta),
                    num(r.rho),
                    num(r.alpha),
                    r.steps_to_alpha.to_string(),
                    num(r.c),
                    num(r.iterate_bound),
                    num(r.closed_form),
                    num(r.floor),
                    opt_num(r.doubly_exponential),
                    opt_num(r.resilient.as_ref().map(|b| b.bound)),
                ]);
            }
            Ok(Artifact::Csv(t))
        }
    }
}

#[derive(Serialize)]
struct MaxcorrReport {
    pair: PairDesc,
    pearson: f64,
    maximal_correlation: f64,
    /// Second singular value by dense SVD, for supports up to the SVD limit.
    svd: Option<f64>,
    /// Second singular value by power iteration.
    power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    non_separability: Option<NonSeparabilityReport>,
}

fn coupling(f: &FunctionTable, space: Option<&Path>, rho: Option<f64>) -> Result<ProductSpace, CliError> {
    match (space, rho) {
        (Some(path), _) => Ok(read_json::<SpaceDesc>(path)?.build()?),
        (None, Some(rho)) => {
            check_unit("rho", rho)?;
            Ok(ProductSpace::resampling(f.domain(), &vec![rho; f.n()])?)
        }
        (None, None) => Err(CliError::Usage("give --space or --rho to couple the inputs".into())),
    }
}

pub fn maxcorr(a: &MaxcorrArgs) -> Result<Artifact, CliError> {
    json_only(a.common.format, "maxcorr")?;
    let (pair, monte_carlo, nonsep) = match (&a.pair, &a.function) {
        (Some(path), _) => (read_json::<PairDesc>(path)?.build()?, None, None),
        (None, Some(spec)) => {
            let f = function_from_spec(spec)?;
            let g = match &a.g_function {
                Some(spec) => function_from_spec(spec)?,
                None => f.clone(),
            };
            let space = coupling(&f, a.space.as_deref(), a.rho)?;
            let nonsep = Some(non_separability(&f)?);
            if a.mc {
                check_samples(a.common.samples)?;
                let est = induced_pair_mc(&f, &g, &space, a.common.seed, a.common.samples, a.common.workers)?;
                (est.pair, Some(est.maxcorr), nonsep)
            } else {
                (induced_pair(&f, &g, &space)?, None, nonsep)
            }
        }
        (None, None) => return Err(CliError::Usage("give --pair or --fn".into())),
    };
    let svd = if pair.x().len() <= DENSE_SVD_MAX && pair.y().len() <= DENSE_SVD_MAX {
        Some(maximal_correlation_svd(&pair)?)
    } else {
        None
    };
    let power = Some(maximal_correlation_power(&pair)?);
    json(&MaxcorrReport {
        pearson: pair.pearson(),
        maximal_correlation: maximal_correlation(&pair)?,
        svd,
        power,
        monte_carlo,
        non_separability: nonsep,
        pair: PairDesc::of(&pair),
    })
}

#[derive(Serialize)]
struct EsReport {
    function: FunctionDesc,
    variance: f64,
    es_degree: usize,
    degree_profile: Vec<f64>,
    components: serde_json::Value,
    verification: ESVerification,
    #[serde(skip_serializing_if = "Option::is_none")]
    contraction: Option<ContractionReport>,
}

pub fn es(a: &EsArgs) -> Result<Artifact, CliError> {
    json_only(a.common.format, "es")?;
    let f = function_from_spec(&a.function)?;
    let space = match (&a.space, a.rho) {
        (None, None) => None,
        (space, rho) => Some(coupling(&f, space.as_deref(), rho)?),
    };
    let es = decompose(&f)?;
    let contraction = space.map(|s| es.markov_contract_check(&s)).transpose()?;
    json(&EsReport {
        function: FunctionDesc::of(&f),
        variance: es.variance(),
        es_degree: es.es_degree(EXACT_TOL),
        degree_profile: by_degree(es.norms_sq().into_iter().enumerate().map(|(m, w)| (m as u64, w)), f.n()),
        components: es.to_json(a.full),
        verification: es.verify(&f, USER_TOL),
        contraction,
    })
}

/// One row of the percolation table.
#[derive(Serialize)]
struct PercolationRow {
    n: usize,
    rho: f64,
    samples: usize,
    estimate: f64,
    ci_low: f64,
    ci_high: f64,
    seed: u64,
    std_error: f64,
}

pub fn percolation(a: &PercolationArgs) -> Result<Artifact, CliError> {
    let ns = parse_range(&a.n).map_err(CliError::Usage)?;
    let grids = ns
        .iter()
        .map(|&n| TriangularGrid::new(n))
        .collect::<Result<Vec<_>, _>>()?;
    if a.spectrum {
        json_only(a.common.format, "percolation --spectrum")?;
        if let Some(g) = grids.iter().find(|g| g.sites() > EXACT_MAX_SITES) {
            return Err(Error::Capacity {
                states: 1u128 << g.sites(),
                cap: 1 << EXACT_MAX_SITES,
            }
            .into());
        }
        let reports = grids
            .iter()
            .map(exact_spectrum_small)
            .collect::<Result<Vec<SpectrumReport>, _>>()?;
        return json(&reports);
    }
    let rhos = parse_list(&a.rho).map_err(CliError::Usage)?;
    for &rho in &rhos {
        check_unit("rho", rho)?;
    }
    check_samples(a.common.samples)?;
    let c = &a.common;
    let mut rows = Vec::new();
    for g in &grids {
        for &rho in &rhos {
            let est = crossing_stability(g, rho, c.seed, c.samples, c.workers)?;
            rows.push(PercolationRow {
                n: g.n(),
                rho,
                samples: est.samples,
                estimate: est.estimate,
                ci_low: est.ci_low,
                ci_high: est.ci_high,
                seed: c.seed,
                std_error: est.std_error,
            });
        }
    }
    match c.format {
        Format::Json => json(&rows),
        Format::Csv => {
            let mut t = Table::new(vec!["n", "rho", "samples", "estimate", "ci_low", "ci_high", "seed"]);
            for r in &rows {
                t.push(vec![
                    r.n.to_string(),
                    num(r.rho),
                    r.samples.to_string(),
                    num(r.estimate),
                    num(r.ci_low),
                    num(r.ci_high),
                    r.seed.to_string(),
                ]);
            }
            Ok(Artifact::Csv(t))
        }
    }
}

#[derive(Serialize)]
struct DemoReport {
    name: &'static str,
    depth: usize,
    n: usize,
    rho: f64,
    /// Inputs on which the hierarchy was compared with the direct formula.
    evaluations: u64,
    exhaustive: bool,
    max_error: f64,
    certification: CertificationReport,
    stability: StabilityOut,
    /// Recursive propagation with maximal correlation on every wire.
    recursive_upper_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    expected_stability: Option<f64>,
    floor: Option<DegreeOneFloor>,
    above_floor: Option<bool>,
}

fn recursive_majority(x: &[f64]) -> f64 {
    let mut level = x.to_vec();
    while level.len() > 1 {
        level = level.chunks(3).map(|c| (c[0] + c[1] + c[2]).signum()).collect();
    }
    level[0]
}

/// Compares `h` with `direct` on every input in `support^n` when that fits
/// under the enumeration cap, and on `samples` random inputs otherwise.
fn verify_inputs(
    h: &Hierarchy,
    direct: impl Fn(&[f64]) -> f64,
    support: &[f64],
    samples: usize,
    seed: u64,
) -> Result<(u64, bool, f64), CliError> {
    let n = h.n();
    let k = support.len() as u128;
    let total = k.checked_pow(n as u32);
    let mut max_error = 0.0f64;
    let mut x = vec![0.0; n];
    let mut check = |x: &[f64]| -> Result<(), CliError> {
        max_error = max_error.max((h.evaluate(x)? - direct(x)).abs());
        Ok(())
    };
    match total {
        Some(t) if t <= enumeration_cap() as u128 => {
            for idx in 0..t as u64 {
                let mut r = idx;
                for xi in x.iter_mut() {
                    *xi = support[(r % k as u64) as usize];
                    r /= k as u64;
                }
                check(&x)?;
            }
            Ok((t as u64, true, max_error))
        }
        _ => {
            let mut rng = stream_rng(seed, 0);
            for _ in 0..samples {
                for xi in x.iter_mut() {
                    *xi = support[rng.gen_range(0..support.len())];
                }
                check(&x)?;
            }
            Ok((samples as u64, false, max_error))
        }
    }
}

pub fn demo(a: &DemoArgs) -> Result<Artifact, CliError> {
    json_only(a.common.format, "demo")?;
    check_unit("rho", a.rho)?;
    if a.depth == 0 {
        return Err(CliError::Usage("--depth must be at least 1".into()));
    }
    let c = &a.common;
    let report = match a.name {
        DemoName::MajPlusFirst => {
            let h = Hierarchy::maj_plus_first(a.depth, 0.5)?;
            let (evaluations, exhaustive, max_error) = verify_inputs(
                &h,
                |x| x[0] + 10.0 * recursive_majority(x),
                &[-1.0, 1.0],
                c.samples,
                c.seed,
            )?;
            if max_error > 0.0 {
                return Err(Error::Numerical {
                    what: "direct evaluation check".into(),
                    residual: max_error,
                }
                .into());
            }
            let floor = floor_degree_one(&h, a.rho)?;
            let monte_carlo = if c.samples >= MIN_MC_SAMPLES {
                Some(stability_mc(&h, a.rho, c.seed, c.samples, c.workers)?)
            } else {
                None
            };
            let stability = match stability_exact(&h, a.rho) {
                Ok(value) => StabilityOut {
                    method: "exact",
                    value,
                    upper_bound: false,
                    monte_carlo,
                },
                Err(Error::Capacity { .. }) => match monte_carlo {
                    Some(est) => StabilityOut {
                        method: "monte-carlo",
                        value: est.estimate,
                        upper_bound: false,
                        monte_carlo,
                    },
                    None => {
                        return Err(CliError::Usage(format!(
                            "exact stability exceeds the cap; --samples must be at least {MIN_MC_SAMPLES}"
                        )))
                    }
                },
                Err(e) => return Err(e.into()),
            };
            DemoReport {
                name: "maj-plus-first",
                depth: a.depth,
                n: h.n(),
                rho: a.rho,
                evaluations,
                exhaustive,
                max_error,
                certification: inspect(&h)?,
                recursive_upper_bound: Some(stability_recursive(&h, a.rho)?),
                above_floor: Some(stability.value >= floor.floor - EXACT_TOL),
                stability,
                expected_stability: None,
                floor: Some(floor),
            }
        }
        DemoName::CosArccos => {
            check_samples(c.samples)?;
            let h = Hierarchy::cos_arccos(a.depth, 0.5)?;
            let even = a.depth.is_multiple_of(2);
            let direct = |x: &[f64]| {
                if even {
                    x[0]
                } else {
                    (std::f64::consts::PI * x[0]).cos()
                }
            };
            let mut rng = stream_rng(c.seed, 0);
            let mut max_error = 0.0f64;
            let checks = c.samples.min(10_000);
            for _ in 0..checks {
                let x: Vec<f64> = (0..h.n()).map(|_| rng.gen_range(0.0..=1.0)).collect();
                max_error = max_error.max((h.evaluate(&x)? - direct(&x)).abs());
            }
            // arccos loses half the digits near the ends of [−1, 1].
            if max_error > 1e-6 {
                return Err(Error::Numerical {
                    what: "direct evaluation check".into(),
                    residual: max_error,
                }
                .into());
            }
            let est = stability_mc(&h, a.rho, c.seed, c.samples, c.workers)?;
            DemoReport {
                name: "cos-arccos",
                depth: a.depth,
                n: h.n(),
                rho: a.rho,
                evaluations: checks as u64,
                exhaustive: false,
                max_error,
                certification: inspect(&h)?,
                stability: StabilityOut {
                    method: "monte-carlo",
                    value: est.estimate,
                    upper_bound: false,
                    monte_carlo: Some(est),
                },
                recursive_upper_bound: None,
                // The composition returns its first input, which stays rho-correlated.
                expected_stability: even.then_some(a.rho),
                floor: None,
                above_floor: None,
            }
        }
    };
    json(&report)
}

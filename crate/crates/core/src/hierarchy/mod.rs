//! Hierarchical functions: trees of components applied to disjoint blocks
//! of inputs.

mod certify;
mod decay;
mod stability;

pub use certify::{certify, inspect, CertificationReport, NodeReport};
pub use decay::{decay_bounds, decay_iterate, resilient_bound, DecayBoundReport};
pub use stability::{
    composed_table, floor_degree_one, stability_exact, stability_mc, stability_recursive, DegreeOneFloor,
    MIN_MC_SAMPLES,
};

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::boolean::{majority, parity, tribes};
use crate::error::{Error, Result};
use crate::product_space::{value_key, FiniteDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// Certified by distance to linear functions of the Fourier expansion.
    Multilinear,
    /// Certified by non-separability.
    General,
}

/// Law of one input coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum LeafLaw {
    Finite(FiniteDistribution),
    Uniform { low: f64, high: f64 },
    StandardNormal,
}

/// Grid size used when a continuous law must be treated as finite.
pub const DISCRETIZATION_POINTS: usize = 64;

impl LeafLaw {
    pub fn fair_bit() -> Self {
        LeafLaw::Finite(FiniteDistribution::fair_bit())
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, LeafLaw::Finite(_))
    }

    pub fn finite(&self) -> Option<&FiniteDistribution> {
        match self {
            LeafLaw::Finite(d) => Some(d),
            _ => None,
        }
    }

    /// Finite laws as is; continuous laws as a `k`-point midpoint-quantile
    /// grid with equal weights.
    pub fn discretize(&self, k: usize) -> FiniteDistribution {
        match self {
            LeafLaw::Finite(d) => d.clone(),
            LeafLaw::Uniform { low, high } => {
                let pts = (0..k)
                    .map(|j| low + (high - low) * (j as f64 + 0.5) / k as f64)
                    .collect();
                FiniteDistribution::uniform(pts).expect("increasing grid")
            }
            LeafLaw::StandardNormal => {
                let pts = (0..k).map(|j| normal_quantile((j as f64 + 0.5) / k as f64)).collect();
                FiniteDistribution::uniform(pts).expect("increasing grid")
            }
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match self {
            LeafLaw::Finite(d) => d.index_of(x).is_some(),
            LeafLaw::Uniform { low, high } => x >= *low && x <= *high,
            LeafLaw::StandardNormal => x.is_finite(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LeafLaw::Finite(d) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (v, p) in d.support().iter().zip(d.probs()) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *d.support().last().unwrap()
            }
            LeafLaw::Uniform { low, high } => rng.gen_range(*low..=*high),
            LeafLaw::StandardNormal => StandardNormal.sample(rng),
        }
    }

    /// A `rho`-resampled pair: `Y = X` with probability `rho`, otherwise an
    /// independent copy.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rho: f64, rng: &mut R) -> (f64, f64) {
        let x = self.sample(rng);
        let y = if rng.gen::<f64>() < rho { x } else { self.sample(rng) };
        (x, y)
    }
}

/// Acklam's rational approximation, relative error below 1.2e-9.
fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383_577_518_672_69e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Built-in component functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "builtin")]
pub enum Builtin {
    Maj,
    Parity,
    Dictator,
    Tribes {
        width: usize,
    },
    /// `x1 + 10·maj(x1, x2, x3)`.
    FirstPlusTenMaj,
    /// `B2(x1) + 10·maj(B1(x1), B1(x2), B1(x3))` for `x = 10·b1 + b2`.
    B2PlusTenMajB1,
    /// `cos(π·x1)`.
    CosPiFirst,
    /// `arccos(x1)/π`.
    ArccosOverPiFirst,
}

fn b1(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl Builtin {
    pub fn eval(&self, xs: &[f64]) -> f64 {
        match self {
            Builtin::Maj => majority(xs),
            Builtin::Parity => parity(xs),
            Builtin::Dictator => xs[0],
            Builtin::Tribes { width } => tribes(xs, *width),
            Builtin::FirstPlusTenMaj => xs[0] + 10.0 * majority(&xs[..3]),
            Builtin::B2PlusTenMajB1 => {
                let b = [b1(xs[0]), b1(xs[1]), b1(xs[2])];
                (xs[0] - 10.0 * b[0]) + 10.0 * majority(&b)
            }
            Builtin::CosPiFirst => (PI * xs[0]).cos(),
            Builtin::ArccosOverPiFirst => xs[0].clamp(-1.0, 1.0).acos() / PI,
        }
    }

    /// Whether the component is an analytic function of real inputs rather
    /// than a function of finitely many values.
    pub fn is_analytic(&self) -> bool {
        matches!(self, Builtin::CosPiFirst | Builtin::ArccosOverPiFirst)
    }

    fn check_arity(&self, m: usize) -> Result<()> {
        let ok = match self {
            Builtin::Maj => m % 2 == 1,
            Builtin::Tribes { width } => *width >= 1 && m.is_multiple_of(*width),
            Builtin::FirstPlusTenMaj | Builtin::B2PlusTenMajB1 => m >= 3,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Structure(format!("{self:?} does not accept {m} inputs")))
        }
    }
}

/// A component given by its values on a finite grid of inputs; argument 0
/// varies fastest in `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableComponent {
    pub inputs: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl TableComponent {
    pub fn new(inputs: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        let size: usize = inputs.iter().map(Vec::len).product();
        if size != values.len() {
            return Err(Error::Arity {
                expected: size,
                got: values.len(),
            });
        }
        Ok(TableComponent { inputs, values })
    }

    pub fn eval(&self, xs: &[f64]) -> Result<f64> {
        let mut idx = 0;
        let mut stride = 1;
        for (i, (x, support)) in xs.iter().zip(&self.inputs).enumerate() {
            let k = value_key(*x);
            let a = support
                .iter()
                .position(|v| value_key(*v) == k)
                .ok_or_else(|| Error::domain(format!("input {i} value {x} is outside the component table")))?;
            idx += a * stride;
            stride *= support.len();
        }
        Ok(self.values[idx])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Component {
    Builtin(Builtin),
    Table { table: TableComponent },
}

impl Component {
    pub fn eval(&self, xs: &[f64]) -> Result<f64> {
        match self {
            Component::Builtin(b) => Ok(b.eval(xs)),
            Component::Table { table } => table.eval(xs),
        }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self, Component::Builtin(b) if b.is_analytic())
    }

    fn check_arity(&self, m: usize) -> Result<()> {
        match self {
            Component::Builtin(b) => b.check_arity(m),
            Component::Table { table } if table.inputs.len() != m => Err(Error::Arity {
                expected: table.inputs.len(),
                got: m,
            }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HierarchyNode {
    Leaf(usize),
    Internal {
        component: Component,
        children: Vec<HierarchyNode>,
        declared_epsilon: f64,
        kind: Kind,
    },
}

impl HierarchyNode {
    pub fn internal(component: Component, children: Vec<HierarchyNode>, declared_epsilon: f64, kind: Kind) -> Self {
        HierarchyNode::Internal {
            component,
            children,
            declared_epsilon,
            kind,
        }
    }

    /// Leaves are depth 0; an internal node is one more than its shallowest
    /// child.
    pub fn depth(&self) -> usize {
        match self {
            HierarchyNode::Leaf(_) => 0,
            HierarchyNode::Internal { children, .. } => 1 + children.iter().map(|c| c.depth()).min().unwrap_or(0),
        }
    }

    pub fn leaf_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            HierarchyNode::Leaf(i) => out.push(*i),
            HierarchyNode::Internal { children, .. } => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    fn map_internal(&mut self, f: &mut impl FnMut(&mut f64, &mut Kind)) {
        if let HierarchyNode::Internal {
            children,
            declared_epsilon,
            kind,
            ..
        } = self
        {
            f(declared_epsilon, kind);
            children.iter_mut().for_each(|c| c.map_internal(f));
        }
    }

    /// Evaluation without support checks.
    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> Result<f64> {
        match self {
            HierarchyNode::Leaf(i) => Ok(x[*i]),
            HierarchyNode::Internal {
                component, children, ..
            } => {
                let mut args = [0.0; 8];
                if children.len() <= args.len() {
                    for (a, c) in args.iter_mut().zip(children) {
                        *a = c.eval_unchecked(x)?;
                    }
                    component.eval(&args[..children.len()])
                } else {
                    let args = children
                        .iter()
                        .map(|c| c.eval_unchecked(x))
                        .collect::<Result<Vec<_>>>()?;
                    component.eval(&args)
                }
            }
        }
    }
}

/// A validated tree together with the laws of its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    root: HierarchyNode,
    leaves: Vec<LeafLaw>,
}

fn validate(node: &HierarchyNode) -> Result<()> {
    if let HierarchyNode::Internal {
        component,
        children,
        declared_epsilon,
        ..
    } = node
    {
        if children.len() < 2 {
            return Err(Error::Structure("internal nodes need at least two children".into()));
        }
        if !(*declared_epsilon > 0.0 && *declared_epsilon <= 1.0) {
            return Err(Error::domain(format!(
                "declared epsilon {declared_epsilon} is outside (0, 1]"
            )));
        }
        component.check_arity(children.len())?;
        children.iter().try_for_each(validate)?;
    }
    Ok(())
}

impl Hierarchy {
    /// Checks that the leaves partition `0..leaves.len()` and every internal
    /// node has at least two children.
    pub fn new(root: HierarchyNode, leaves: Vec<LeafLaw>) -> Result<Self> {
        if matches!(root, HierarchyNode::Leaf(_)) {
            if root.leaf_indices() != [0] || leaves.len() != 1 {
                return Err(Error::Structure(
                    "a single leaf must be coordinate 0 of one input".into(),
                ));
            }
        } else {
            validate(&root)?;
        }
        let mut seen = vec![false; leaves.len()];
        for i in root.leaf_indices() {
            match seen.get_mut(i) {
                None => return Err(Error::Structure(format!("leaf index {i} is out of range"))),
                Some(true) => return Err(Error::Structure(format!("leaf index {i} is used twice"))),
                Some(s) => *s = true,
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Structure(format!("input {i} is not used by any leaf")));
        }
        Ok(Hierarchy { root, leaves })
    }

    pub fn root(&self) -> &HierarchyNode {
        &self.root
    }

    pub fn leaves(&self) -> &[LeafLaw] {
        &self.leaves
    }

    pub fn n(&self) -> usize {
        self.leaves.len()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn with_kind(mut self, kind: Kind) -> Self {
        self.root.map_internal(&mut |_, k| *k = kind);
        self
    }

    pub fn with_declared_epsilon(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::domain(format!("declared epsilon {eps} is outside (0, 1]")));
        }
        self.root.map_internal(&mut |e, _| *e = eps);
        Ok(self)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n() {
            return Err(Error::Arity {
                expected: self.n(),
                got: x.len(),
            });
        }
        for (i, (v, law)) in x.iter().zip(&self.leaves).enumerate() {
            if !law.contains(*v) {
                return Err(Error::domain(format!("input {i} value {v} is outside its support")));
            }
        }
        self.root.eval_unchecked(x)
    }

    /// Recursive majority of three on `3^depth` fair bits.
    pub fn recursive_maj3(depth: usize) -> Result<Self> {
        uniform_tree(depth, 3, LeafLaw::fair_bit(), 0.25, Kind::Multilinear, &|_| {
            Builtin::Maj
        })
    }

    /// Binary tree of two-bit parities on `2^depth` fair bits.
    pub fn parity_tree(depth: usize) -> Result<Self> {
        uniform_tree(depth, 2, LeafLaw::fair_bit(), 1.0, Kind::Multilinear, &|_| {
            Builtin::Parity
        })
    }

    /// Binary tree alternating `cos(π·x1)` on the bottom layer with
    /// `arccos(x1)/π` above it; even depths return `x1` on `[0, 1]^{2^d}`.
    pub fn cos_arccos(depth: usize, declared_epsilon: f64) -> Result<Self> {
        let leaf = LeafLaw::Uniform { low: 0.0, high: 1.0 };
        uniform_tree(depth, 2, leaf, declared_epsilon, Kind::General, &|level| {
            if level % 2 == 1 {
                Builtin::CosPiFirst
            } else {
                Builtin::ArccosOverPiFirst
            }
        })
    }

    /// Ternary tree with `x1 + 10·maj` on the bottom layer and
    /// `B2(x1) + 10·maj(B1(·))` above; computes the first input plus ten
    /// times the recursive majority.
    pub fn maj_plus_first(depth: usize, declared_epsilon: f64) -> Result<Self> {
        uniform_tree(
            depth,
            3,
            LeafLaw::fair_bit(),
            declared_epsilon,
            Kind::General,
            &|level| {
                if level == 1 {
                    Builtin::FirstPlusTenMaj
                } else {
                    Builtin::B2PlusTenMajB1
                }
            },
        )
    }
}

/// Complete `arity`-ary tree; `component(level)` picks the builtin at a
/// level counted from 1 at the bottom.
pub fn uniform_tree(
    depth: usize,
    arity: usize,
    leaf: LeafLaw,
    declared_epsilon: f64,
    kind: Kind,
    component: &dyn Fn(usize) -> Builtin,
) -> Result<Hierarchy> {
    if depth == 0 {
        return Err(Error::domain("depth must be at least 1"));
    }
    let n = arity
        .checked_pow(depth as u32)
        .filter(|n| *n <= 1 << 30)
        .ok_or_else(|| Error::domain("tree is too large"))?;
    let mut layer: Vec<HierarchyNode> = (0..n).map(HierarchyNode::Leaf).collect();
    for level in 1..=depth {
        layer = layer
            .chunks(arity)
            .map(|c| HierarchyNode::internal(Component::Builtin(component(level)), c.to_vec(), declared_epsilon, kind))
            .collect();
    }
    Hierarchy::new(layer.pop().unwrap(), vec![leaf; n])
}

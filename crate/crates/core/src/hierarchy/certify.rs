use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Component, Hierarchy, HierarchyNode, Kind, DISCRETIZATION_POINTS};
use crate::error::{Error, Result};
use crate::fourier::{expand, FunctionTable};
use crate::maxcorr::non_separability;
use crate::product_space::{check_cap, enumeration_cap, FiniteDistribution, ProductDomain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    /// `root`, `root.0`, `root.0.2`, ...
    pub path: String,
    pub kind: Kind,
    pub arity: usize,
    pub depth: usize,
    pub declared_epsilon: f64,
    /// The measure matching `kind`; absent when it cannot be computed.
    pub certified_epsilon: Option<f64>,
    pub d_lin: Option<f64>,
    pub non_separability: Option<f64>,
    pub output_support: usize,
    /// Some input below this node is continuous and was replaced by a grid.
    pub discretized: bool,
    pub passes: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub n: usize,
    pub depth: usize,
    pub certified: bool,
    pub nodes: Vec<NodeReport>,
}

/// The component as a table over the product of its children's output laws.
pub(super) fn component_table(component: &Component, inputs: &[FiniteDistribution]) -> Result<FunctionTable> {
    let states: u128 = inputs.iter().map(|d| d.len() as u128).product();
    check_cap(states, enumeration_cap())?;
    let domain = Arc::new(ProductDomain::new(inputs.to_vec())?);
    let values = (0..domain.size())
        .map(|idx| component.eval(&domain.point(idx)))
        .collect::<Result<Vec<_>>>()?;
    FunctionTable::new(domain, values)
}

pub(super) fn output_law(table: &FunctionTable) -> Result<FiniteDistribution> {
    let probs = table.domain().point_probs();
    FiniteDistribution::from_weighted(table.values().iter().copied().zip(probs))
}

struct Visit<'a> {
    h: &'a Hierarchy,
    nodes: Vec<NodeReport>,
    first_error: Option<Error>,
}

impl Visit<'_> {
    /// Returns the output law of `node` and whether a grid was used below it.
    fn node(&mut self, node: &HierarchyNode, path: String) -> Result<(FiniteDistribution, bool)> {
        let HierarchyNode::Internal {
            component,
            children,
            declared_epsilon,
            kind,
        } = node
        else {
            let HierarchyNode::Leaf(i) = node else { unreachable!() };
            let law = &self.h.leaves()[*i];
            return Ok((law.discretize(DISCRETIZATION_POINTS), !law.is_finite()));
        };
        let mut inputs = Vec::with_capacity(children.len());
        let mut discretized = false;
        for (j, c) in children.iter().enumerate() {
            let (d, g) = self.node(c, format!("{path}.{j}"))?;
            inputs.push(d);
            discretized |= g;
        }
        let table = component_table(component, &inputs)?;
        let mut note = None;
        let d_lin = match expand(&table) {
            Ok(e) => Some(e.distance_to_lin()),
            Err(e @ Error::NotMultilinear { .. }) => {
                if *kind == Kind::Multilinear {
                    note = Some(e.to_string());
                    self.first_error.get_or_insert(e);
                }
                None
            }
            Err(e) => return Err(e),
        };
        let ns = non_separability(&table)?;
        let certified = match kind {
            Kind::Multilinear => d_lin,
            Kind::General => Some(ns.epsilon),
        };
        let passes = certified.is_some_and(|c| c >= declared_epsilon - 1e-9);
        if let (false, Some(c)) = (passes, certified) {
            self.first_error.get_or_insert(Error::Certification {
                node: path.clone(),
                declared: *declared_epsilon,
                certified: c,
            });
        }
        let out = output_law(&table)?;
        self.nodes.push(NodeReport {
            path,
            kind: *kind,
            arity: children.len(),
            depth: node.depth(),
            declared_epsilon: *declared_epsilon,
            certified_epsilon: certified,
            d_lin,
            non_separability: (!ns.degenerate).then_some(ns.epsilon),
            output_support: out.len(),
            discretized,
            passes,
            note,
        });
        Ok((out, discretized))
    }
}

fn run(h: &Hierarchy) -> Result<(CertificationReport, Option<Error>)> {
    let mut v = Visit {
        h,
        nodes: Vec::new(),
        first_error: None,
    };
    v.node(h.root(), "root".into())?;
    let certified = v.first_error.is_none();
    Ok((
        CertificationReport {
            n: h.n(),
            depth: h.depth(),
            certified,
            nodes: v.nodes,
        },
        v.first_error,
    ))
}

/// Measures every component without failing on certification shortfalls.
/// Nodes are listed children first.
pub fn inspect(h: &Hierarchy) -> Result<CertificationReport> {
    run(h).map(|r| r.0)
}

/// Like [`inspect`] but fails on the first node whose measured ε falls
/// below its declared ε.
pub fn certify(h: &Hierarchy) -> Result<CertificationReport> {
    match run(h)? {
        (report, None) => Ok(report),
        (_, Some(e)) => Err(e),
    }
}

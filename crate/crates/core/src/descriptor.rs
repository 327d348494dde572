//! JSON descriptors for distributions, pairs, functions and hierarchies.
//!
//! Probabilities may be numbers or strings holding a decimal or a fraction
//! such as `"1/3"`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::boolean::named_table;
use crate::error::{Error, Result};
use crate::fourier::FunctionTable;
use crate::hierarchy::{Component, Hierarchy, HierarchyNode, Kind, LeafLaw};
use crate::product_space::{CorrelatedPair, FiniteDistribution, ProductDomain, ProductSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prob {
    Number(f64),
    Text(String),
}

impl Prob {
    pub fn value(&self) -> Result<f64> {
        match self {
            Prob::Number(v) => Ok(*v),
            Prob::Text(s) => parse_prob(s),
        }
    }
}

pub fn parse_prob(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Parse(format!("cannot read probability {s:?}"));
    match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
            );
            if b == 0.0 {
                return Err(bad());
            }
            Ok(a / b)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

fn probs(ps: &[Prob]) -> Result<Vec<f64>> {
    ps.iter().map(Prob::value).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionDesc {
    pub support: Vec<f64>,
    /// Uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<Prob>>,
}

impl DistributionDesc {
    pub fn build(&self) -> Result<FiniteDistribution> {
        match &self.probs {
            None => FiniteDistribution::uniform(self.support.clone()),
            Some(p) => FiniteDistribution::new(self.support.clone(), probs(p)?),
        }
    }

    pub fn of(d: &FiniteDistribution) -> Self {
        DistributionDesc {
            support: d.support().to_vec(),
            probs: Some(d.probs().iter().map(|p| Prob::Number(*p)).collect()),
        }
    }
}

/// A joint law given by its table, or a resampling coupling of one law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairDesc {
    Joint {
        x_support: Vec<f64>,
        y_support: Vec<f64>,
        joint: Vec<Vec<Prob>>,
    },
    Resampling {
        resampling: DistributionDesc,
        rho: f64,
    },
}

impl PairDesc {
    pub fn build(&self) -> Result<CorrelatedPair> {
        match self {
            PairDesc::Joint {
                x_support,
                y_support,
                joint,
            } => CorrelatedPair::from_joint(
                x_support.clone(),
                y_support.clone(),
                joint.iter().map(|r| probs(r)).collect::<Result<_>>()?,
            ),
            PairDesc::Resampling { resampling, rho } => CorrelatedPair::resampling(&resampling.build()?, *rho),
        }
    }

    pub fn of(p: &CorrelatedPair) -> Self {
        PairDesc::Joint {
            x_support: p.x().support().to_vec(),
            y_support: p.y().support().to_vec(),
            joint: p
                .joint_rows()
                .into_iter()
                .map(|r| r.into_iter().map(Prob::Number).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceDesc {
    pub pairs: Vec<PairDesc>,
}

impl SpaceDesc {
    pub fn build(&self) -> Result<ProductSpace> {
        ProductSpace::new(self.pairs.iter().map(PairDesc::build).collect::<Result<_>>()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionDesc {
    /// `maj3`, `maj`, `parity`, `dictator` or `tribes` on `n` fair bits.
    Named { named: String, n: usize },
    /// Values over the product of `coords`, coordinate 0 varying fastest.
    Table {
        coords: Vec<DistributionDesc>,
        values: Vec<f64>,
    },
}

impl FunctionDesc {
    pub fn build(&self) -> Result<FunctionTable> {
        match self {
            FunctionDesc::Named { named, n } => named_table(named, *n),
            FunctionDesc::Table { coords, values } => {
                let d = ProductDomain::new(coords.iter().map(DistributionDesc::build).collect::<Result<_>>()?)?;
                FunctionTable::new(Arc::new(d), values.clone())
            }
        }
    }

    pub fn of(f: &FunctionTable) -> Self {
        FunctionDesc::Table {
            coords: f.domain().coords().iter().map(DistributionDesc::of).collect(),
            values: f.values().to_vec(),
        }
    }
}

/// Parses `named:<name>` with the default arity, `named:<name>:<n>`, or
/// `@<path>` naming a JSON function descriptor.
pub fn function_from_spec(spec: &str) -> Result<FunctionTable> {
    if let Some(rest) = spec.strip_prefix("named:") {
        let (name, n) = match rest.split_once(':') {
            Some((name, n)) => (
                name,
                n.parse().map_err(|_| Error::Parse(format!("bad arity in {spec:?}")))?,
            ),
            None => (rest, default_arity(rest)?),
        };
        return named_table(name, n);
    }
    if let Some(path) = spec.strip_prefix('@') {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{path}: {e}")))?;
        return from_json::<FunctionDesc>(&text)?.build();
    }
    Err(Error::Parse(format!(
        "unrecognized function {spec:?}; use named:<name>[:n] or @<file>"
    )))
}

fn default_arity(name: &str) -> Result<usize> {
    match name {
        "maj3" | "maj" => Ok(3),
        "parity" | "dictator" => Ok(2),
        "tribes" => Ok(4),
        _ => Err(Error::Parse(format!("unknown function {name:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LeafLawDesc {
    Finite(DistributionDesc),
    Uniform { uniform: [f64; 2] },
    Normal { normal: String },
}

impl LeafLawDesc {
    pub fn build(&self) -> Result<LeafLaw> {
        match self {
            LeafLawDesc::Finite(d) => Ok(LeafLaw::Finite(d.build()?)),
            LeafLawDesc::Uniform { uniform: [low, high] } if low < high => {
                Ok(LeafLaw::Uniform { low: *low, high: *high })
            }
            LeafLawDesc::Uniform { .. } => Err(Error::domain("uniform law needs low < high")),
            LeafLawDesc::Normal { normal } if normal == "standard" => Ok(LeafLaw::StandardNormal),
            LeafLawDesc::Normal { normal } => Err(Error::Parse(format!("unknown normal law {normal:?}"))),
        }
    }

    pub fn of(l: &LeafLaw) -> Self {
        match l {
            LeafLaw::Finite(d) => LeafLawDesc::Finite(DistributionDesc::of(d)),
            LeafLaw::Uniform { low, high } => LeafLawDesc::Uniform { uniform: [*low, *high] },
            LeafLaw::StandardNormal => LeafLawDesc::Normal {
                normal: "standard".into(),
            },
        }
    }
}

fn default_kind() -> Kind {
    Kind::Multilinear
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeDesc {
    Leaf {
        leaf: usize,
    },
    Internal {
        component: Component,
        children: Vec<NodeDesc>,
        declared_epsilon: f64,
        #[serde(default = "default_kind")]
        kind: Kind,
    },
}

impl NodeDesc {
    fn build(&self) -> HierarchyNode {
        match self {
            NodeDesc::Leaf { leaf } => HierarchyNode::Leaf(*leaf),
            NodeDesc::Internal {
                component,
                children,
                declared_epsilon,
                kind,
            } => HierarchyNode::internal(
                component.clone(),
                children.iter().map(NodeDesc::build).collect(),
                *declared_epsilon,
                *kind,
            ),
        }
    }

    fn of(n: &HierarchyNode) -> Self {
        match n {
            HierarchyNode::Leaf(i) => NodeDesc::Leaf { leaf: *i },
            HierarchyNode::Internal {
                component,
                children,
                declared_epsilon,
                kind,
            } => NodeDesc::Internal {
                component: component.clone(),
                children: children.iter().map(NodeDesc::of).collect(),
                declared_epsilon: *declared_epsilon,
                kind: *kind,
            },
        }
    }
}

/// `{"leaves": [...], "root": {...}}`; `leaves` may instead be a single law
/// shared by `n` inputs via `{"leaf_law": {...}, "n": 9, "root": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyDesc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaves: Option<Vec<LeafLawDesc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf_law: Option<LeafLawDesc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub root: NodeDesc,
}

impl HierarchyDesc {
    pub fn build(&self) -> Result<Hierarchy> {
        let leaves = match (&self.leaves, &self.leaf_law, self.n) {
            (Some(l), None, _) => l.iter().map(LeafLawDesc::build).collect::<Result<Vec<_>>>()?,
            (None, Some(law), Some(n)) => vec![law.build()?; n],
            _ => {
                return Err(Error::Parse(
                    "give either \"leaves\" or both \"leaf_law\" and \"n\"".into(),
                ))
            }
        };
        Hierarchy::new(self.root.build(), leaves)
    }

    pub fn of(h: &Hierarchy) -> Self {
        HierarchyDesc {
            leaves: Some(h.leaves().iter().map(LeafLawDesc::of).collect()),
            leaf_law: None,
            n: None,
            root: NodeDesc::of(h.root()),
        }
    }
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

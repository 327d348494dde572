use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::Estimate;

/// Bounds on the stability of a depth-`d` hierarchy whose components are
/// all `epsilon`-far from linear (or separable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayBoundReport {
    pub d: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub rho: f64,
    /// `(ε − δ)/ε`: below it `g(x) ≤ (1 − δ)x`.
    pub alpha: f64,
    /// Steps needed to bring `ρ` below `α`: `⌈log_{1+εα}((1−α)/(1−ρ))⌉`, or 0.
    pub steps_to_alpha: usize,
    /// `1/log(1+ε−δ) + 1/log(ε/δ)`, which dominates `steps_to_alpha / log(1/(1−ρ))`.
    #[serde(rename = "C")]
    pub c: f64,
    /// `g^d(ρ)` with `g(x) = (1−ε)x + εx²`.
    pub iterate_bound: f64,
    /// `(1−δ)^{d − C·log(1/(1−ρ))}`.
    pub closed_form: f64,
    /// `(1−ε)^d·ρ`, attained by some hierarchies.
    pub floor: f64,
    /// `ρ^{2^d}` when `ε = 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doubly_exponential: Option<f64>,
    /// `ρ^{(t+1)^d}` for `t`-resilient components.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resilient: Option<ResilientBound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_or_mc: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilientBound {
    pub t: usize,
    pub bound: f64,
}

/// `g^d(ρ)` for `g(x) = (1−ε)x + εx²`.
pub fn decay_iterate(epsilon: f64, rho: f64, d: usize) -> f64 {
    (0..d).fold(rho, |x, _| (1.0 - epsilon) * x + epsilon * x * x)
}

/// `ρ^{(t+1)^d}`.
pub fn resilient_bound(t: usize, rho: f64, d: usize) -> f64 {
    let e = (t as f64 + 1.0).powi(d as i32);
    rho.powf(e)
}

pub fn decay_bounds(epsilon: f64, delta: f64, rho: f64, d: usize) -> Result<DecayBoundReport> {
    if !(delta > 0.0 && delta < epsilon && epsilon <= 1.0) {
        return Err(Error::domain(format!(
            "need 0 < delta < epsilon <= 1, got delta {delta}, epsilon {epsilon}"
        )));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::domain(format!("rho {rho} is outside [0, 1)")));
    }
    if d == 0 {
        return Err(Error::domain("depth must be at least 1"));
    }
    let alpha = (epsilon - delta) / epsilon;
    let steps_to_alpha = if rho > alpha {
        // 1 − g(x) = (1 − x)(1 + εx) ≥ (1 − x)(1 + εα) while x ≥ α.
        ((((1.0 - alpha) / (1.0 - rho)).ln() / (epsilon * alpha).ln_1p()).ceil()).max(0.0) as usize
    } else {
        0
    };
    let c = 1.0 / (epsilon - delta).ln_1p() + 1.0 / (epsilon / delta).ln();
    let log_term = -(-rho).ln_1p();
    let closed_form = (1.0 - delta).powf(d as f64 - c * log_term);
    let doubly_exponential = (epsilon == 1.0).then(|| (0..d).fold(rho, |x, _| x * x));
    Ok(DecayBoundReport {
        d,
        epsilon,
        delta,
        rho,
        alpha,
        steps_to_alpha,
        c,
        iterate_bound: decay_iterate(epsilon, rho, d),
        closed_form,
        floor: (1.0 - epsilon).powi(d as i32) * rho,
        doubly_exponential,
        resilient: None,
        exact_or_mc: None,
    })
}

impl DecayBoundReport {
    pub fn with_resilience(mut self, t: usize) -> Self {
        self.resilient = Some(ResilientBound {
            t,
            bound: resilient_bound(t, self.rho, self.d),
        });
        self
    }

    pub fn with_measurement(mut self, est: Estimate) -> Self {
        self.exact_or_mc = Some(est);
        self
    }

    /// `iterate_bound ≤ closed_form`, and the measurement (if any) within
    /// three CI half-widths of `iterate_bound`.
    pub fn holds(&self) -> bool {
        let chain = self.iterate_bound <= self.closed_form + 1e-12;
        let measured = self
            .exact_or_mc
            .as_ref()
            .is_none_or(|e| e.estimate <= self.iterate_bound + 3.0 * (e.ci_high - e.ci_low) / 2.0 + 1e-12);
        chain && measured
    }
}

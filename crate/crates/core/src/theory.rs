//! Characteristic times: when classes are identified and when estimates
//! become `(ε, δ)`-accurate.
//!
//! These are high-probability upper bounds, useful as documentation and
//! as loose sanity checks for simulations. The consensus bound hides an
//! unknown constant and is only meaningful up to order of magnitude.

use crate::confidence::{n_tilde, ConfidenceParams, DistClass};
use crate::error::{Error, Result};

/// Inputs shared by the bound calculators. Sizes count agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Smallest gap between agent `a`'s mean and any other class mean.
    pub gap: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub degree: usize,
    pub depth: usize,
    pub n_agents: usize,
    /// `|CC_a|`: same-class component of `a` in the graph.
    pub component: usize,
    /// `|CC_a^d|`: the part of that component within `depth` hops.
    pub component_ball: usize,
    /// `|C_a|`: the whole similarity class.
    pub class_size: usize,
    /// Distribution family, `σ` and `κ`; its `γ` is ignored.
    pub params: ConfidenceParams,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap > 0.0) {
            return Err(Error::param(format!("gap must be > 0, got {}", self.gap)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::param(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        for (name, v) in [
            ("degree", self.degree),
            ("n_agents", self.n_agents),
            ("component", self.component),
            ("component_ball", self.component_ball),
            ("class_size", self.class_size),
        ] {
            if v == 0 {
                return Err(Error::param(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    fn with_gamma(&self, gamma: f64) -> Result<ConfidenceParams> {
        self.params.with_gamma(gamma)
    }
}

/// `g(x) = x ln²(e x)`.
pub fn g(x: f64) -> f64 {
    let l = 1.0 + x.ln();
    x * l * l
}

/// Rounds after which, w.h.p., no graph algorithm keeps a wrong link or
/// drops a right one: `n*(Δ/4) + 1` at `γ = δ / (4 r |CC_a|)`.
pub fn zeta_d(inputs: &BoundInputs) -> Result<u64> {
    inputs.validate()?;
    let gamma = inputs.delta / (4.0 * inputs.degree as f64 * inputs.component as f64);
    Ok(inputs.with_gamma(gamma)?.n_star(inputs.gap / 4.0) + 1)
}

/// Convergence time of the message-passing estimator.
pub fn tau_b(inputs: &BoundInputs) -> Result<f64> {
    let zeta = zeta_d(inputs)? as f64;
    let n = n_tilde(inputs.epsilon, inputs.delta, &inputs.params)? as f64;
    let d = inputs.depth as f64;
    Ok((zeta + d).max(n / inputs.component_ball as f64 + d))
}

/// `E‖P x − μ‖⁴` for the component average of `n_c` i.i.d. agents.
pub fn fourth_moment_of_average(kappa: f64, sigma: f64, n_c: usize) -> f64 {
    let s4 = sigma.powi(4);
    let n = n_c as f64;
    (kappa * s4 + 3.0 * (n - 1.0) * s4) / n
}

/// Argument of `g` in the consensus bound.
pub fn tau_c_argument(fourth_moment: f64, component: usize, epsilon: f64, delta: f64, constant: f64) -> f64 {
    constant * fourth_moment / (component as f64 * epsilon.powi(4) * delta)
}

/// Convergence time of the consensus estimator (bounded-fourth-moment
/// data). `constant` stands in for the unspecified constant; 1 gives an
/// order-of-magnitude figure only.
pub fn tau_c(inputs: &BoundInputs, constant: f64) -> Result<f64> {
    if inputs.params.dist_class() != DistClass::BoundedFourthMoment {
        return Err(Error::param("the consensus bound needs bounded-fourth-moment parameters"));
    }
    if !(constant > 0.0) {
        return Err(Error::param(format!("constant must be > 0, got {constant}")));
    }
    let zeta = zeta_d(inputs)? as f64;
    let p = &inputs.params;
    let m4 = fourth_moment_of_average(p.kappa(), p.sigma(), inputs.component);
    let arg = tau_c_argument(m4, inputs.component, inputs.epsilon, inputs.delta, constant);
    Ok(zeta.max(g(arg)))
}

/// Class-identification time of all-pairs ColME, given the gap to every
/// out-of-class agent, at `γ = δ / (4 N)`.
pub fn colme_zeta(inputs: &BoundInputs, out_of_class_gaps: &[f64]) -> Result<u64> {
    inputs.validate()?;
    let params = inputs.with_gamma(inputs.delta / (4.0 * inputs.n_agents as f64))?;
    let own = params.n_star(inputs.gap / 4.0);
    let slack = inputs.n_agents as u64 - 1;
    let saturated = out_of_class_gaps
        .iter()
        .filter(|&&gap| own > params.n_star(gap / 4.0) + slack)
        .count() as u64;
    Ok(own + slack - saturated)
}

/// `(ζ_a, τ_a)` for all-pairs ColME with two classes: every out-of-class
/// agent sits at the same gap.
pub fn colme_bounds(inputs: &BoundInputs) -> Result<(u64, f64)> {
    inputs.validate()?;
    if inputs.class_size > inputs.n_agents {
        return Err(Error::param("class_size exceeds n_agents"));
    }
    let others = vec![inputs.gap; inputs.n_agents - inputs.class_size];
    let zeta = colme_zeta(inputs, &others)?;
    let n = n_tilde(inputs.epsilon, inputs.delta, &inputs.params)? as f64;
    let c = inputs.class_size as f64;
    Ok((zeta, (zeta as f64).max(n / c + (c - 1.0) / 2.0)))
}

/// One line of the algorithm comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub algorithm: &'static str,
    /// Peers (or table rows) each agent stores and touches per round.
    pub per_agent_cost: usize,
    /// Class-identification time.
    pub discovery: u64,
    /// `(ε, δ)` convergence time; `None` where no bound exists.
    pub convergence: Option<f64>,
}

/// Numeric counterpart of the usual ColME / C-ColME / B-ColME comparison.
pub fn comparison(inputs: &BoundInputs, constant: f64) -> Result<Vec<ComparisonRow>> {
    let (colme_zeta, colme_tau) = colme_bounds(inputs)?;
    let zeta = zeta_d(inputs)?;
    let consensus = match inputs.params.dist_class() {
        DistClass::BoundedFourthMoment => Some(tau_c(inputs, constant)?),
        DistClass::SubGaussian => None,
    };
    Ok(vec![
        ComparisonRow {
            algorithm: "colme",
            per_agent_cost: inputs.n_agents,
            discovery: colme_zeta,
            convergence: Some(colme_tau),
        },
        ComparisonRow {
            algorithm: "c_colme",
            per_agent_cost: inputs.degree,
            discovery: zeta,
            convergence: consensus,
        },
        ComparisonRow {
            algorithm: "b_colme",
            per_agent_cost: inputs.degree * inputs.depth,
            discovery: zeta,
            convergence: Some(tau_b(inputs)?),
        },
    ])
}

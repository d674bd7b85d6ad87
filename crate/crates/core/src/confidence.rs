//! Anytime confidence widths and the optimistic-distance tests built on them.
//!
//! Two distribution classes are supported. Sub-Gaussian data use the
//! law-of-iterated-logarithm style width
//! `σ √((2/n)(1+1/n) ln(√(n+1)/γ))`; data with a bounded fourth central
//! moment (`≤ κσ⁴`) use `(2(κ+3)σ⁴/γ)^¼ ((1+ln²n)/n)^¼`. Both hold
//! simultaneously for every `n` with probability at least `1 − 2γ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Family of sample distributions the confidence widths are calibrated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistClass {
    #[serde(alias = "subgaussian")]
    SubGaussian,
    #[serde(alias = "bfmd")]
    BoundedFourthMoment,
}

/// Parameters of the confidence-width family `β_γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams {
    dist_class: DistClass,
    sigma: f64,
    kappa: f64,
    gamma: f64,
}

impl ConfidenceParams {
    pub fn new(dist_class: DistClass, sigma: f64, kappa: f64, gamma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::param(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        if dist_class == DistClass::BoundedFourthMoment && !(kappa >= 1.0 && kappa.is_finite()) {
            return Err(Error::param(format!("kappa must be >= 1, got {kappa}")));
        }
        check_gamma(gamma)?;
        Ok(Self {
            dist_class,
            sigma,
            kappa,
            gamma,
        })
    }

    pub fn sub_gaussian(sigma: f64, gamma: f64) -> Result<Self> {
        Self::new(DistClass::SubGaussian, sigma, 3.0, gamma)
    }

    pub fn bounded_fourth_moment(sigma: f64, kappa: f64, gamma: f64) -> Result<Self> {
        Self::new(DistClass::BoundedFourthMoment, sigma, kappa, gamma)
    }

    pub fn dist_class(&self) -> DistClass {
        self.dist_class
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Same family with a different tail mass.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self { gamma, ..*self })
    }

    /// Confidence half-width after `n` samples. `β(0) = +∞`.
    pub fn beta(&self, n: u64) -> f64 {
        if n == 0 {
            return f64::INFINITY;
        }
        let n = n as f64;
        match self.dist_class {
            DistClass::SubGaussian => {
                let log_term = ((n + 1.0).sqrt() / self.gamma).ln();
                self.sigma * ((2.0 / n) * (1.0 + 1.0 / n) * log_term).sqrt()
            }
            DistClass::BoundedFourthMoment => {
                let ln_n = n.ln();
                self.bfmd_constant() * ((1.0 + ln_n * ln_n) / n).powf(0.25)
            }
        }
    }

    /// `(2(κ+3)σ⁴/γ)^¼`, the fourth-moment width at `n = 1`.
    fn bfmd_constant(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        (2.0 * (self.kappa + 3.0) * s2 * s2 / self.gamma).powf(0.25)
    }

    /// Smallest `n ≥ 1` with `β(n) < x`.
    ///
    /// Bisection over `[1, 2⁶³)`; relies on `β` being non-increasing for
    /// `n ≥ 1`. Saturates at `2⁶³` when even that many samples cannot reach
    /// the requested width.
    pub fn n_star(&self, x: f64) -> u64 {
        const UPPER: u64 = 1 << 63;
        if self.beta(1) < x {
            return 1;
        }
        if self.beta(UPPER) >= x {
            return UPPER;
        }
        // invariant: beta(lo) >= x, beta(hi) < x
        let (mut lo, mut hi) = (1u64, UPPER);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.beta(mid) < x {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Width used by the multidimensional test in `k_dims` dimensions.
    ///
    /// Sub-Gaussian: per-axis width at tail mass `γ/K`.
    /// Fourth moment: `√K · β(n)` applied to the Euclidean norm.
    pub fn multidim_width(&self, n: u64, k_dims: usize) -> f64 {
        let k = k_dims.max(1) as f64;
        match self.dist_class {
            DistClass::SubGaussian => Self {
                gamma: self.gamma / k,
                ..*self
            }
            .beta(n),
            DistClass::BoundedFourthMoment => k.sqrt() * self.beta(n),
        }
    }

    /// Geometry of the multidimensional separation test for this family.
    pub fn geometry(&self) -> Geometry {
        match self.dist_class {
            DistClass::SubGaussian => Geometry::PerAxis,
            DistClass::BoundedFourthMoment => Geometry::Euclidean,
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 0.5 {
        Ok(())
    } else {
        Err(Error::param(format!("gamma must lie in (0, 1/2), got {gamma}")))
    }
}

/// Which closed form of `ñ_{δ/2}(ε)` to use for sub-Gaussian data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NTildeForm {
    /// Exponent `ε²/(2σ²)`, obtained by summing the sub-Gaussian tail.
    #[default]
    TailSum,
    /// Exponent `ε²/σ²`, the shorter expression quoted alongside the
    /// message-passing convergence time.
    Compact,
}

/// Samples that make a pooled mean `ε`-accurate with failure probability `δ/2`.
pub fn n_tilde(epsilon: f64, delta: f64, params: &ConfidenceParams) -> Result<u64> {
    n_tilde_with(epsilon, delta, params, NTildeForm::TailSum)
}

pub fn n_tilde_with(
    epsilon: f64,
    delta: f64,
    params: &ConfidenceParams,
    form: NTildeForm,
) -> Result<u64> {
    if !(epsilon > 0.0) {
        return Err(Error::param(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta must lie in (0, 1), got {delta}")));
    }
    let s2 = params.sigma * params.sigma;
    let value = match params.dist_class {
        DistClass::SubGaussian => {
            if s2 == 0.0 {
                return Ok(0);
            }
            let e2 = epsilon * epsilon;
            let exponent = match form {
                NTildeForm::TailSum => e2 / (2.0 * s2),
                NTildeForm::Compact => e2 / s2,
            };
            let inner = (delta / 4.0) * (-(-exponent).exp_m1());
            -(2.0 * s2 / e2) * inner.ln()
        }
        DistClass::BoundedFourthMoment => {
            2.0 * (params.kappa + 3.0) * s2 * s2 / (delta * epsilon.powi(4))
        }
    };
    Ok(ceil_count(value))
}

/// Ceiling that absorbs floating-point noise sitting just above an integer.
pub(crate) fn ceil_count(value: f64) -> u64 {
    if !(value > 0.0) {
        return 0;
    }
    let rounded = value.round();
    if (value - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded as u64
    } else {
        value.ceil() as u64
    }
}

/// Running empirical mean over `count` samples.
///
/// `T` is `f64` for scalar data or a slice for `K`-dimensional data. The
/// mean is meaningless when `count == 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanRecord<T = f64> {
    pub mean: T,
    pub count: u64,
}

impl<T> MeanRecord<T> {
    pub fn new(mean: T, count: u64) -> Self {
        Self { mean, count }
    }
}

/// Outcome of a multidimensional class-membership test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Prune,
}

/// How the `K`-dimensional gap is compared against the widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    /// Prune when any canonical axis separates.
    PerAxis,
    /// Prune when the Euclidean gap separates.
    Euclidean,
}

/// `|x̄_a − x̄_b| − β(n_a) − β(n_b)`; positive means the intervals are disjoint.
pub fn optimistic_distance(
    rec_a: MeanRecord,
    rec_b: MeanRecord,
    params: &ConfidenceParams,
) -> f64 {
    if rec_a.count == 0 || rec_b.count == 0 {
        return f64::NEG_INFINITY;
    }
    (rec_a.mean - rec_b.mean).abs() - (params.beta(rec_a.count) + params.beta(rec_b.count))
}

/// Multidimensional keep/prune test.
pub fn optimistic_distance_multidim(
    rec_a: MeanRecord<&[f64]>,
    rec_b: MeanRecord<&[f64]>,
    params: &ConfidenceParams,
    k_dims: usize,
) -> Result<Decision> {
    if k_dims == 0 {
        return Err(Error::param("k_dims must be >= 1"));
    }
    for got in [rec_a.mean.len(), rec_b.mean.len()] {
        if got != k_dims {
            return Err(Error::DimensionMismatch {
                expected: k_dims,
                got,
            });
        }
    }
    if rec_a.count == 0 || rec_b.count == 0 {
        return Ok(Decision::Keep);
    }
    let widths = params.multidim_width(rec_a.count, k_dims)
        + params.multidim_width(rec_b.count, k_dims);
    Ok(if separated(rec_a.mean, rec_b.mean, widths, params.geometry()) {
        Decision::Prune
    } else {
        Decision::Keep
    })
}

/// True when the gap between `a` and `b` exceeds `width_sum` under `geometry`.
#[inline]
pub fn separated(a: &[f64], b: &[f64], width_sum: f64, geometry: Geometry) -> bool {
    if !width_sum.is_finite() {
        return false;
    }
    match geometry {
        Geometry::PerAxis => a.iter().zip(b).any(|(x, y)| (x - y).abs() - width_sum > 0.0),
        Geometry::Euclidean => {
            let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            sq.sqrt() - width_sum > 0.0
        }
    }
}

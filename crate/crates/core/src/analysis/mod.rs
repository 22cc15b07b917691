//! Scaling functions, discretization coefficients and Monte Carlo estimators
//! for small-ball probabilities of the solution.

mod diagnostics;
mod events;
mod fit;
mod smallball;

pub use diagnostics::{
    correlation_norm_diagnostic, spatial_increment_moments, temporal_increment_moments,
    variance_scaling_check, CorrelationReport, IncrementMoments, VarianceScalingReport,
};
pub use events::{
    conditional_frequencies, evaluate_events, record_gaussian_path, ConditionalFrequency, EventTrace,
    RecordedPath,
};
pub use fit::{exponent_fit, wilson_interval, EpsilonPoint, ExponentFit, WILSON_Z};
pub use smallball::{
    schedule, small_ball_estimate, EpsilonEstimate, EpsilonSchedule, SamplingMode, SmallBallManifest,
    SmallBallResult, SmallBallSetup,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// max(0, d/2 − 1) < α < d/2.
    Below,
    /// α = d/2.
    Critical,
    /// α > d/2.
    Above,
}

/// Exponent ingredients h = min(1, 2α−d+2) and H = min((6d−4α)/d, 4α+8−2d).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    pub alpha: f64,
    pub dimension: usize,
    pub h: f64,
    pub big_h: f64,
    pub regime: Regime,
}

impl RegimeParams {
    /// Fails with a regime error unless α > max(0, d/2 − 1).
    pub fn new(alpha: f64, dimension: usize) -> Result<Self> {
        let d = dimension as f64;
        let floor = (d / 2.0 - 1.0).max(0.0);
        if !(alpha.is_finite() && alpha > floor) {
            return Err(Error::Regime(format!(
                "alpha = {alpha} must exceed max(0, d/2 - 1) = {floor} for d = {dimension}"
            )));
        }
        let regime = if (alpha - d / 2.0).abs() <= 1e-12 {
            Regime::Critical
        } else if alpha < d / 2.0 {
            Regime::Below
        } else {
            Regime::Above
        };
        Ok(RegimeParams {
            alpha,
            dimension,
            h: (2.0 * alpha - d + 2.0).min(1.0),
            big_h: ((6.0 * d - 4.0 * alpha) / d).min(4.0 * alpha + 8.0 - 2.0 * d),
            regime,
        })
    }

    /// f(t): t above, t·ln(1/t) at, and t^{α+1−d/2} below the critical value.
    pub fn f(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Domain(format!("f(t) needs 0 < t < 1, got {t}")));
        }
        Ok(match self.regime {
            Regime::Above => t,
            Regime::Critical => t * (1.0 / t).ln(),
            Regime::Below => t.powf(self.alpha + 1.0 - self.dimension as f64 / 2.0),
        })
    }

    /// Power of t in f(t), ignoring the logarithm at the critical value.
    pub fn f_exponent(&self) -> f64 {
        match self.regime {
            Regime::Above | Regime::Critical => 1.0,
            Regime::Below => self.alpha + 1.0 - self.dimension as f64 / 2.0,
        }
    }
}

pub fn f_of_t(t: f64, alpha: f64, dimension: usize) -> Result<f64> {
    RegimeParams::new(alpha, dimension)?.f(t)
}

/// Small-ball exponents: the probability lies between exp(−C/ε^lower) and
/// exp(−C/ε^upper).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentBracket {
    pub lower_exp: f64,
    /// None when the upper bound is trivial (α > d/2).
    pub upper_exp: Option<f64>,
    /// The critical upper bound carries an extra [ln ln(1/ε)]² factor.
    pub log_correction: bool,
}

pub fn theoretical_exponents(alpha: f64, dimension: usize) -> Result<ExponentBracket> {
    let r = RegimeParams::new(alpha, dimension)?;
    let d = dimension as f64;
    let lower_exp = (2.0 * d + 4.0) / r.h;
    let (upper_exp, log_correction) = match r.regime {
        Regime::Below => (Some(r.big_h / (2.0 * alpha + 2.0 - d)), false),
        Regime::Critical => (Some(2.0), true),
        Regime::Above => (None, false),
    };
    Ok(ExponentBracket { lower_exp, upper_exp, log_correction })
}

/// Largest admissible temporal coefficient: exp(C ε^{−2d} ln ε) at α = d/2
/// and C ε^{8α/(d−2α)} below it.
pub fn c0_bound(eps: f64, alpha: f64, dimension: usize, c: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("c0 bound needs 0 < eps < 1, got {eps}")));
    }
    let d = dimension as f64;
    let r = RegimeParams::new(alpha, dimension)?;
    match r.regime {
        Regime::Critical => Ok((c * eps.powf(-2.0 * d) * eps.ln()).exp()),
        Regime::Below => Ok(c * eps.powf(8.0 * alpha / (d - 2.0 * alpha))),
        Regime::Above => Err(Error::Regime(format!(
            "no admissible c0 for alpha = {alpha} > d/2: the correlation sum stays bounded away from zero"
        ))),
    }
}

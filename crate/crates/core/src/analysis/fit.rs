use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::weighted_linear_fit;

/// Two-sided 95% standard normal quantile.
pub const WILSON_Z: f64 = 1.959963984540054;

/// Wilson score interval for k successes out of n trials.
pub fn wilson_interval(k: u64, n: u64) -> Result<(f64, f64)> {
    if n == 0 || k > n {
        return Err(Error::Domain(format!("wilson interval needs 0 <= k <= n, n > 0; got k={k}, n={n}")));
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0.0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    Ok((lo, hi))
}

/// One ε with its survival estimate and interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonPoint {
    pub eps: f64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub theta: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub log_correction: bool,
    /// False when every interval had zero width and plain least squares was used.
    pub weighted: bool,
    pub used_eps: Vec<f64>,
    /// ε values dropped because p̂ ∈ {0, 1}.
    pub excluded_eps: Vec<f64>,
}

/// Fits log(−log p̂) = θ·log(1/ε) + b. With `log_correction` the term
/// 2·log(ln ln(1/ε)) is subtracted first, so θ estimates the power in
/// exp(−C[ln ln(1/ε)]²/ε^θ).
pub fn exponent_fit(points: &[EpsilonPoint], log_correction: bool) -> Result<ExponentFit> {
    let mut used = Vec::new();
    let mut excluded_eps = Vec::new();
    for p in points {
        if !(p.eps > 0.0 && p.eps.is_finite()) {
            return Err(Error::Fit(format!("epsilon {} is not positive", p.eps)));
        }
        if p.p_hat <= 0.0 || p.p_hat >= 1.0 {
            excluded_eps.push(p.eps);
        } else {
            used.push(*p);
        }
    }
    if used.len() < 3 {
        return Err(Error::Fit(format!(
            "{} usable epsilon values after excluding p_hat in {{0, 1}}; need at least 3",
            used.len()
        )));
    }
    let mut sorted: Vec<f64> = used.iter().map(|p| p.eps).collect();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[1] <= w[0] * (1.0 + 1e-12)) {
        return Err(Error::Fit("repeated epsilon values".into()));
    }
    if sorted[sorted.len() - 1] / sorted[0] < 1.5 {
        return Err(Error::Fit(format!(
            "epsilon range {:.4}..{:.4} spans less than a factor 1.5",
            sorted[0],
            sorted[sorted.len() - 1]
        )));
    }

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut var = Vec::new();
    for p in &used {
        let inv = 1.0 / p.eps;
        let mut yi = (-p.p_hat.ln()).ln();
        if log_correction {
            let ll = inv.ln().ln();
            if !(ll > 0.0) {
                return Err(Error::Fit(format!("ln ln(1/eps) needs eps < 1/e, got {}", p.eps)));
            }
            yi -= 2.0 * ll.ln();
        }
        x.push(inv.ln());
        y.push(yi);
        // delta method: dy/dp = 1/(p ln p)
        let sd_p = (p.ci_hi - p.ci_lo) / (2.0 * WILSON_Z);
        let slope = 1.0 / (p.p_hat * p.p_hat.ln());
        var.push((slope * sd_p).powi(2));
    }

    let weighted = var.iter().all(|v| *v > 0.0 && v.is_finite());
    let ((theta, intercept), stderr) = if weighted {
        let w: Vec<f64> = var.iter().map(|v| 1.0 / v).collect();
        weighted_linear_fit(&x, &y, &w)
    } else {
        let ((b, a), _) = weighted_linear_fit(&x, &y, &vec![1.0; x.len()]);
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let rss: f64 = x.iter().zip(&y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
        ((b, a), (rss / (n - 2.0) / sxx).sqrt())
    };
    if !theta.is_finite() {
        return Err(Error::Fit("degenerate epsilon spacing".into()));
    }
    Ok(ExponentFit {
        theta,
        stderr,
        intercept,
        log_correction,
        weighted,
        used_eps: used.iter().map(|p| p.eps).collect(),
        excluded_eps,
    })
}

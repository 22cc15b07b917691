use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{Regime, RegimeParams};
use crate::error::{Error, Result};
use crate::geometry::{PointSet, Point, SpectralBasis};
use crate::noise::NoiseWeights;
use crate::numerics::linear_fit;
use crate::solver::mode_covariances;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub t1: f64,
    pub net_size: usize,
    /// Max absolute column sum of A = I − T.
    pub norm: f64,
    pub phi: f64,
    pub below_phi: bool,
    /// t₁^{d/2−α}ε^{−2d} below the critical α, ε^{−2d}ln(1/ε)/ln(1/t₁) at it,
    /// with ε² the net separation; None above it.
    pub predicted_scale: Option<f64>,
    pub min_eigenvalue: f64,
}

/// Correlation structure of {N(t₁, x)} over the net for constant σ = c.
pub fn correlation_norm_diagnostic(
    t1: f64,
    net: &PointSet,
    weights: &NoiseWeights,
    basis: &SpectralBasis,
    c: f64,
    phi: f64,
) -> Result<CorrelationReport> {
    if !(t1 > 0.0 && t1.is_finite()) {
        return Err(Error::Domain(format!("t1 must be positive, got {t1}")));
    }
    if net.is_empty() {
        return Err(Error::Domain("correlation diagnostic needs a nonempty net".into()));
    }
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::Domain(format!("phi must lie in (0, 1), got {phi}")));
    }
    let k = mode_covariances(t1, t1, c, weights, basis);
    let table = basis.tabulate(&net.points);
    let m = net.len();
    let mut cov = DMatrix::zeros(m, m);
    let mut scaled = vec![0.0; basis.len()];
    for i in 0..m {
        for ((o, kn), p) in scaled.iter_mut().zip(&k).zip(table.row(i)) {
            *o = kn * p;
        }
        for j in i..m {
            let v = crate::geometry::basis_dot(&scaled, table.row(j));
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let sd: Vec<f64> = (0..m).map(|i| cov[(i, i)].sqrt()).collect();
    if sd.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Conditioning("zero variance at a net point".into()));
    }
    let corr = DMatrix::from_fn(m, m, |i, j| cov[(i, j)] / (sd[i] * sd[j]));
    let min_eigenvalue = SymmetricEigen::new(corr.clone()).eigenvalues.min();
    if min_eigenvalue < -1e-8 {
        return Err(Error::Conditioning(format!(
            "correlation matrix has eigenvalue {min_eigenvalue:.3e}"
        )));
    }
    let norm = (0..m)
        .map(|j| (0..m).filter(|&i| i != j).map(|i| corr[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);

    let d = basis.manifold().dimension() as f64;
    let alpha = weights.alpha();
    let eps = net.separation.sqrt();
    let predicted_scale = if (alpha - d / 2.0).abs() <= 1e-12 {
        (t1 < 1.0 && eps < 1.0).then(|| eps.powf(-2.0 * d) * (1.0 / eps).ln() / (1.0 / t1).ln())
    } else if alpha < d / 2.0 {
        Some(t1.powf(d / 2.0 - alpha) * eps.powf(-2.0 * d))
    } else {
        None
    };
    Ok(CorrelationReport {
        t1,
        net_size: m,
        norm,
        phi,
        below_phi: norm < phi,
        predicted_scale,
        min_eigenvalue,
    })
}

fn point_variance(t: f64, x: &Point, c: f64, weights: &NoiseWeights, basis: &SpectralBasis) -> f64 {
    let k = mode_covariances(t, t, c, weights, basis);
    let mut phi = Vec::new();
    basis.evaluate_all(x, &mut phi);
    k.iter().zip(&phi).map(|(k, p)| k * p * p).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceScalingReport {
    pub times: Vec<f64>,
    pub variances: Vec<f64>,
    pub slope: f64,
    pub predicted_slope: f64,
    /// Var/ln(1/t) was fitted instead of Var.
    pub log_corrected: bool,
    /// Range of Var/f(t): the band [C₇, C₈].
    pub ratio_min: f64,
    pub ratio_max: f64,
}

/// Log-log slope of Var[N(t,x)] in t against the power of f(t).
pub fn variance_scaling_check(
    times: &[f64],
    x: &Point,
    weights: &NoiseWeights,
    basis: &SpectralBasis,
    c: f64,
) -> Result<VarianceScalingReport> {
    if times.len() < 5 || times.iter().any(|t| !(*t > 0.0 && *t < 0.25)) {
        return Err(Error::Domain("variance scaling needs at least 5 times in (0, 0.25)".into()));
    }
    let (lo, hi) = times.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    if hi / lo < 10.0 * (1.0 - 1e-9) {
        return Err(Error::Domain("variance scaling times must span a decade".into()));
    }
    let regime = RegimeParams::new(weights.alpha(), basis.manifold().dimension())?;
    let log_corrected = regime.regime == Regime::Critical;
    let variances: Vec<f64> = times.iter().map(|&t| point_variance(t, x, c, weights, basis)).collect();
    let lx: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = times
        .iter()
        .zip(&variances)
        .map(|(&t, &v)| if log_corrected { (v / (1.0 / t).ln()).ln() } else { v.ln() })
        .collect();
    let (slope, _) = linear_fit(&lx, &ly);
    let mut ratio_min = f64::INFINITY;
    let mut ratio_max = 0.0f64;
    for (&t, &v) in times.iter().zip(&variances) {
        let r = v / regime.f(t)?;
        ratio_min = ratio_min.min(r);
        ratio_max = ratio_max.max(r);
    }
    Ok(VarianceScalingReport {
        times: times.to_vec(),
        variances,
        slope,
        predicted_slope: regime.f_exponent(),
        log_corrected,
        ratio_min,
        ratio_max,
    })
}

/// Second moments of N increments against the lag, with their log-log slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementMoments {
    pub lags: Vec<f64>,
    pub moments: Vec<f64>,
    pub slope: f64,
    /// Hölder-type exponent from the regularity bound.
    pub predicted_slope: f64,
}

fn increment_slope(lags: &[f64], moments: &[f64]) -> f64 {
    let lx: Vec<f64> = lags.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = moments.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

fn check_lags(lags: &[f64]) -> Result<()> {
    if lags.len() < 2 || lags.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::Domain("increment fit needs at least two positive lags".into()));
    }
    Ok(())
}

/// E[(N(t,x) − N(t,y))²] with y at each distance from x, summed mode by mode
/// as Σ Var(ûₙ(t))(φₙ(x) − φₙ(y))².
pub fn spatial_increment_moments(
    t: f64,
    x: &Point,
    distances: &[f64],
    weights: &NoiseWeights,
    basis: &SpectralBasis,
    c: f64,
) -> Result<IncrementMoments> {
    check_lags(distances)?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    let m = basis.manifold();
    let k = mode_covariances(t, t, c, weights, basis);
    let (mut px, mut py) = (Vec::new(), Vec::new());
    basis.evaluate_all(x, &mut px);
    let moments = distances
        .iter()
        .map(|&d| {
            basis.evaluate_all(&m.offset_point(x, d, 0.0), &mut py);
            k.iter().zip(px.iter().zip(&py)).map(|(k, (a, b))| k * (a - b).powi(2)).sum()
        })
        .collect::<Vec<f64>>();
    let dim = m.dimension() as f64;
    Ok(IncrementMoments {
        slope: increment_slope(distances, &moments),
        predicted_slope: (2.0 * weights.alpha() - dim + 2.0).min(1.0),
        lags: distances.to_vec(),
        moments,
    })
}

/// E[(N(t,x) − N(t−h,x))²] for each lag h, from the per-mode law
/// ûₙ(t) = e^{−λh/2}ûₙ(t−h) + independent noise.
pub fn temporal_increment_moments(
    t: f64,
    x: &Point,
    lags: &[f64],
    weights: &NoiseWeights,
    basis: &SpectralBasis,
    c: f64,
) -> Result<IncrementMoments> {
    check_lags(lags)?;
    if lags.iter().any(|&h| h >= t) {
        return Err(Error::Domain(format!("every lag must be below t = {t}")));
    }
    let mut phi = Vec::new();
    basis.evaluate_all(x, &mut phi);
    let moments = lags
        .iter()
        .map(|&h| {
            let s = t - h;
            basis
                .eigenvalues()
                .iter()
                .zip(weights.weights())
                .zip(&phi)
                .map(|((&lam, &w), p)| {
                    let m = if lam == 0.0 {
                        w * h
                    } else {
                        let keep = (-lam * h / 2.0).exp_m1().powi(2);
                        let var_s = -(-lam * s).exp_m1() / lam;
                        w * (keep * var_s - (-lam * h).exp_m1() / lam)
                    };
                    c * c * m * p * p
                })
                .sum()
        })
        .collect::<Vec<f64>>();
    let dim = basis.manifold().dimension() as f64;
    Ok(IncrementMoments {
        slope: increment_slope(lags, &moments),
        predicted_slope: (weights.alpha() + 1.0 - dim / 2.0).min(0.5),
        lags: lags.to_vec(),
        moments,
    })
}

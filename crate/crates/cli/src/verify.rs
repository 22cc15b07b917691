//! Property suites behind `mshe verify`.

use std::f64::consts::PI;
use std::str::FromStr;

use manifold_she::analysis::{
    c0_bound, correlation_norm_diagnostic, spatial_increment_moments, temporal_increment_moments,
    variance_scaling_check,
};
use manifold_she::geometry::{separated_net, Manifold, ManifoldKind, Point, Quadrature, SpectralBasis};
use manifold_she::kernels::{
    heat_kernel, heat_kernel_increment_bounds, kernel_bound_check, riesz_kernel, riesz_kernel_time_integral,
    KernelConfig,
};
use manifold_she::noise::{auto_rho, covariance_bilinear_check, NoiseParams, NoiseWeights};
use manifold_she::numerics::linear_fit;
use manifold_she::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::RhoSetting;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Kernels,
    Noise,
    Variance,
    Regularity,
    Correlation,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kernels" => Ok(Suite::Kernels),
            "noise" => Ok(Suite::Noise),
            "variance" => Ok(Suite::Variance),
            "regularity" => Ok(Suite::Regularity),
            "correlation" => Ok(Suite::Correlation),
            _ => Err(Error::Config(format!(
                "unknown suite `{s}`; expected kernels, noise, variance, regularity or correlation"
            ))),
        }
    }
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Kernels => "kernels",
            Suite::Noise => "noise",
            Suite::Variance => "variance",
            Suite::Regularity => "regularity",
            Suite::Correlation => "correlation",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

/// Replaces a suite's default cases with a single (manifold, α, ρ) case.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaseOverride {
    pub manifold: ManifoldKind,
    pub alpha: f64,
    pub rho: RhoSetting,
}

fn check(name: impl Into<String>, passed: bool, detail: serde_json::Value) -> Check {
    Check { name: name.into(), passed, detail }
}

pub fn run_suite(suite: Suite, case: Option<CaseOverride>) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Kernels => kernels_suite()?,
        Suite::Noise => noise_suite()?,
        Suite::Variance => variance_suite(case)?,
        Suite::Regularity => regularity_suite(case)?,
        Suite::Correlation => correlation_suite(case)?,
    };
    Ok(SuiteReport { suite: suite.name().into(), passed: checks.iter().all(|c| c.passed), checks })
}

fn weights_for(manifold: Manifold, n_max: usize, alpha: f64, rho: RhoSetting) -> Result<(SpectralBasis, NoiseWeights)> {
    let basis = SpectralBasis::build(manifold, n_max)?;
    let rho = match rho {
        RhoSetting::Auto => auto_rho(&SpectralBasis::build(manifold, default_modes(manifold))?, alpha)?,
        RhoSetting::Value(r) => r,
    };
    let weights = NoiseWeights::new(&basis, NoiseParams { alpha, rho })?;
    Ok((basis, weights))
}

/// Truncation used for the automatic ρ, matching the simulator default.
fn default_modes(manifold: Manifold) -> usize {
    match manifold.kind {
        ManifoldKind::Circle => 65,
        ManifoldKind::Torus2 => 145,
        ManifoldKind::Sphere2 => 121,
    }
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn pairs_by_distance(m: Manifold, distances: &[f64]) -> Vec<(Point, Point)> {
    let x = m.reference_point();
    distances.iter().map(|&d| (x, m.offset_point(&x, d, 0.3))).collect()
}

fn wrapped_gaussian(t: f64, delta: f64) -> f64 {
    (-60..=60)
        .map(|k| {
            let z = delta + 2.0 * PI * k as f64;
            (-z * z / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
        })
        .sum()
}

/// Riesz kernel bounds on the circle (α = 0.25) and sphere (α = 1.5), the
/// spectral and time-integral forms on the circle (α = 0.75), the circle heat
/// kernel against the wrapped Gaussian, and the heat-kernel L¹ increment bounds.
fn kernels_suite() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (m, alpha, n_max) in [(Manifold::CIRCLE, 0.25, 4001), (Manifold::SPHERE2, 1.5, 2500)] {
        let cfg = KernelConfig::new(SpectralBasis::build(m, n_max)?, alpha, 1.0)?;
        let pairs = pairs_by_distance(m, &log_spaced(0.02, m.diameter() * 0.9, 40));
        let r = kernel_bound_check(&cfg, &pairs)?;
        out.push(check(
            format!("riesz_bound_{}_alpha{alpha}", m.kind),
            r.passes,
            json!({ "constant": r.constant, "near_diagonal_slope": r.near_diagonal_slope }),
        ));
    }

    let cfg = KernelConfig::new(SpectralBasis::build(Manifold::CIRCLE, 200)?, 0.75, 2.0)?;
    let mut worst: f64 = 0.0;
    for (x, y) in pairs_by_distance(Manifold::CIRCLE, &log_spaced(0.05, 3.0, 10)) {
        let a = riesz_kernel(&cfg, &x, &y)?.value().unwrap_or(f64::NAN);
        let b = riesz_kernel_time_integral(&cfg, &x, &y, 1e-9)?;
        worst = worst.max(((a - b) / a).abs());
    }
    out.push(check("riesz_time_integral_circle", worst < 1e-4, json!({ "max_relative_error": worst })));

    let cfg = KernelConfig::new(SpectralBasis::build(Manifold::CIRCLE, 400)?, 0.0, 0.0)?;
    let mut worst: f64 = 0.0;
    for t in [0.05f64, 0.1, 0.5] {
        for delta in [0.0, 0.3 * t.sqrt(), t.sqrt()] {
            let v = heat_kernel(&cfg, t, &Point::Circle(0.0), &Point::Circle(delta))?.value;
            let exact = wrapped_gaussian(t, delta);
            worst = worst.max(((v - exact) / exact).abs());
        }
    }
    out.push(check("heat_kernel_wrapped_gaussian", worst < 1e-6, json!({ "max_relative_error": worst })));

    let quad = Quadrature::new(Manifold::CIRCLE, 2048);
    let pairs = pairs_by_distance(Manifold::CIRCLE, &[0.05]);
    let r = heat_kernel_increment_bounds(&cfg, &[0.01, 0.04, 0.09], &pairs, &quad)?;
    let cs: Vec<f64> = r.spatial_constant_by_time.iter().map(|(_, c)| *c).collect();
    let spread = cs.iter().cloned().fold(0.0, f64::max) / cs.iter().cloned().fold(f64::INFINITY, f64::min);
    out.push(check(
        "heat_increment_bounds_circle",
        r.max_cap_violation <= 1e-9 && spread < 1.2,
        json!({
            "spatial_constant": r.spatial_constant,
            "temporal_constant": r.temporal_constant,
            "max_cap_violation": r.max_cap_violation,
            "spatial_constant_spread": spread,
        }),
    ));
    Ok(out)
}

/// ⟨φ,ψ⟩_{α,ρ} against the kernel double integral, the automatic ρ making
/// G_{α,ρ} nonnegative, and the covariance matrix on a net being PSD.
fn noise_suite() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (m, alpha, n_max, res) in [(Manifold::CIRCLE, 0.75, 33, 96), (Manifold::SPHERE2, 1.25, 36, 24)] {
        let (basis, weights) = weights_for(m, n_max, alpha, RhoSetting::Value(1.5))?;
        let quad = Quadrature::new(m, res);
        let phi: Vec<f64> = quad.nodes.iter().map(|p| bump(p, 0.0)).collect();
        let psi: Vec<f64> = quad.nodes.iter().map(|p| bump(p, 1.0)).collect();
        let r = covariance_bilinear_check(&weights, &basis, &quad, &phi, &psi)?;
        out.push(check(
            format!("bilinear_form_{}", m.kind),
            r.passes,
            json!({ "spectral": r.spectral, "quadrature": r.quadrature, "relative_error": r.relative_error }),
        ));
    }

    for (m, alpha) in [(Manifold::CIRCLE, 0.25), (Manifold::SPHERE2, 1.5)] {
        let basis = SpectralBasis::build(m, default_modes(m))?;
        let rho = auto_rho(&basis, alpha)?;
        let cfg = KernelConfig::new(basis, alpha, rho)?;
        let x0 = m.reference_point();
        let mut min = f64::INFINITY;
        for y in &Quadrature::new(m, 64).nodes {
            if let Some(g) = riesz_kernel(&cfg, &x0, y)?.value() {
                min = min.min(g);
            }
        }
        out.push(check(format!("auto_rho_nonnegative_{}", m.kind), min >= 0.0, json!({ "rho": rho, "min_G": min })));

        let net = separated_net(m, 0.3, 0);
        let n = net.len();
        let w = cfg.riesz_weights();
        let table = cfg.basis.tabulate(&net.points);
        let g = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            w.iter().zip(table.row(i).iter().zip(table.row(j))).map(|(w, (a, b))| w * a * b).sum::<f64>()
        });
        let top = g.symmetric_eigenvalues().max().max(1.0);
        let min_eig = g.symmetric_eigenvalues().min();
        out.push(check(
            format!("kernel_matrix_psd_{}", m.kind),
            min_eig >= -1e-8 * top,
            json!({ "net_size": n, "min_eigenvalue": min_eig }),
        ));
    }
    Ok(out)
}

fn bump(p: &Point, shift: f64) -> f64 {
    match *p {
        Point::Circle(a) => (a - shift).cos().exp(),
        Point::Torus(a, b) => (a - shift).cos().exp() * b.sin().exp(),
        Point::Sphere([x, y, z]) => (x * shift.cos() + y * shift.sin() + 0.5 * z).exp(),
    }
}

fn variance_modes(m: Manifold) -> usize {
    match m.kind {
        ManifoldKind::Circle => 4001,
        ManifoldKind::Torus2 => 200_000,
        ManifoldKind::Sphere2 => 251_001,
    }
}

fn cases(case: Option<CaseOverride>, defaults: &[(ManifoldKind, f64)]) -> Vec<(Manifold, f64, RhoSetting)> {
    match case {
        Some(c) => vec![(Manifold::new(c.manifold), c.alpha, c.rho)],
        None => defaults.iter().map(|&(k, a)| (Manifold::new(k), a, RhoSetting::Auto)).collect(),
    }
}

/// Slope of log Var[N(t,x)] over t ∈ [1e-4, 1e-2] against the f(t) power
/// (within 0.05) and the band max/min of Var/f(t) (below 3).
fn variance_suite(case: Option<CaseOverride>) -> Result<Vec<Check>> {
    let defaults = [(ManifoldKind::Circle, 0.25), (ManifoldKind::Sphere2, 1.5), (ManifoldKind::Sphere2, 1.0)];
    let times = log_spaced(1e-4, 1e-2, 9);
    let mut out = Vec::new();
    for (m, alpha, rho) in cases(case, &defaults) {
        let (basis, weights) = weights_for(m, variance_modes(m), alpha, rho)?;
        let r = variance_scaling_check(&times, &m.reference_point(), &weights, &basis, 1.0)?;
        let band = r.ratio_max / r.ratio_min;
        out.push(check(
            format!("variance_slope_{}_alpha{alpha}", m.kind),
            (r.slope - r.predicted_slope).abs() <= 0.05 && band < 3.0,
            json!({
                "slope": r.slope,
                "predicted": r.predicted_slope,
                "log_corrected": r.log_corrected,
                "rho": weights.rho(),
                "ratio_band": [r.ratio_min, r.ratio_max],
            }),
        ));
    }
    Ok(out)
}

/// Increment-moment slopes at t = 1: spatial over d ∈ [1e-3, 1e-1] at least
/// min(2α−d+2, 1) − 0.15 (circle only), temporal over lags [1e-4, 1e-2] at
/// least min(α+1−d/2, 1/2) − 0.1.
fn regularity_suite(case: Option<CaseOverride>) -> Result<Vec<Check>> {
    let defaults = [(ManifoldKind::Circle, 0.25), (ManifoldKind::Sphere2, 1.5)];
    let mut out = Vec::new();
    for (m, alpha, rho) in cases(case, &defaults) {
        let x = m.reference_point();
        if m.kind == ManifoldKind::Circle {
            let (basis, weights) = weights_for(m, 200_001, alpha, rho)?;
            let r = spatial_increment_moments(1.0, &x, &log_spaced(1e-3, 1e-1, 9), &weights, &basis, 1.0)?;
            out.push(check(
                format!("spatial_increments_{}_alpha{alpha}", m.kind),
                r.slope >= r.predicted_slope - 0.15,
                json!({ "slope": r.slope, "predicted": r.predicted_slope }),
            ));
        }
        let (basis, weights) = weights_for(m, variance_modes(m), alpha, rho)?;
        let r = temporal_increment_moments(1.0, &x, &log_spaced(1e-4, 1e-2, 9), &weights, &basis, 1.0)?;
        out.push(check(
            format!("temporal_increments_{}_alpha{alpha}", m.kind),
            r.slope >= r.predicted_slope - 0.1,
            json!({ "slope": r.slope, "predicted": r.predicted_slope }),
        ));
    }
    Ok(out)
}

/// Slope of log ‖I − T‖₁ over t₁ ∈ [1e-5, 1e-2] on the ε = 0.3 net against
/// d/2 − α (within 0.15); ‖A‖ at the c₀ of the bound with C = 1 is reported.
fn correlation_suite(case: Option<CaseOverride>) -> Result<Vec<Check>> {
    let defaults = [(ManifoldKind::Circle, 0.25)];
    let eps: f64 = 0.3;
    let mut out = Vec::new();
    for (m, alpha, rho) in cases(case, &defaults) {
        let d = m.dimension() as f64;
        let n_max = if m.kind == ManifoldKind::Circle { 40_001 } else { variance_modes(m) };
        let (basis, weights) = weights_for(m, n_max, alpha, rho)?;
        let net = separated_net(m, eps * eps, 0);
        let t1s = log_spaced(1e-5, 1e-2, 7);
        let mut norms = Vec::new();
        for &t1 in &t1s {
            norms.push(correlation_norm_diagnostic(t1, &net, &weights, &basis, 1.0, 0.5)?.norm);
        }
        let lx: Vec<f64> = t1s.iter().map(|t| t.ln()).collect();
        let ly: Vec<f64> = norms.iter().map(|n| n.ln()).collect();
        let (slope, _) = linear_fit(&lx, &ly);
        let predicted = d / 2.0 - alpha;
        let at_c0 = match c0_bound(eps, alpha, m.dimension(), 1.0) {
            Ok(c0) => {
                let t1 = c0.min(1.0) * eps.powi(4);
                Some((t1, correlation_norm_diagnostic(t1, &net, &weights, &basis, 1.0, 0.5)?.norm))
            }
            Err(_) => None,
        };
        out.push(check(
            format!("correlation_norm_slope_{}_alpha{alpha}", m.kind),
            alpha < d / 2.0 && (slope - predicted).abs() <= 0.15,
            json!({
                "slope": slope,
                "predicted": predicted,
                "net_size": net.len(),
                "norms": norms,
                "norm_at_c0_with_unit_constant": at_c0,
            }),
        ));
    }
    Ok(out)
}

//! Heat kernel and Riesz-type covariance kernels as truncated spectral sums.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::geometry::{Manifold, Point, Quadrature, SpectralBasis};
use crate::numerics::{integrate_adaptive, linear_fit};
use crate::output::{csv_err, csv_writer, fmt_f64};

/// Generator normalization of the heat semigroup.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianConvention {
    /// ∂ₜP = ½ΔP, modes decay as e^{−λt/2}.
    #[default]
    HalfLaplacian,
    /// ∂ₜP = ΔP, modes decay as e^{−λt}.
    FullLaplacian,
}

impl LaplacianConvention {
    /// Factor multiplying λₙt in the exponent.
    pub fn rate(self) -> f64 {
        match self {
            LaplacianConvention::HalfLaplacian => 0.5,
            LaplacianConvention::FullLaplacian => 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KernelConfig {
    pub basis: SpectralBasis,
    pub alpha: f64,
    pub rho: f64,
    pub convention: LaplacianConvention,
    /// Heat-kernel tail estimate above which a truncation warning is attached.
    pub tail_tolerance: f64,
}

impl KernelConfig {
    pub fn new(basis: SpectralBasis, alpha: f64, rho: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::Domain(format!("alpha must be finite and nonnegative, got {alpha}")));
        }
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::Domain(format!("rho must be finite and nonnegative, got {rho}")));
        }
        Ok(KernelConfig {
            basis,
            alpha,
            rho,
            convention: LaplacianConvention::HalfLaplacian,
            tail_tolerance: 1e-6,
        })
    }

    pub fn with_convention(mut self, convention: LaplacianConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn manifold(&self) -> Manifold {
        self.basis.manifold()
    }

    /// α > (d−2)/2, required for a function-valued solution.
    pub fn dalang_admissible(&self) -> bool {
        self.alpha > (self.manifold().dimension() as f64 - 2.0) / 2.0
    }

    /// Mode weights of G_{α,ρ}: ρ for the constant mode, λₙ^{−α} otherwise.
    pub fn riesz_weights(&self) -> Vec<f64> {
        self.basis
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(n, &lam)| if n == 0 { self.rho } else { lam.powf(-self.alpha) })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatKernelValue {
    pub value: f64,
    /// Weyl-law estimate of the dropped modes' contribution.
    pub tail_bound: f64,
    pub truncation_warning: bool,
}

/// Tail estimate of the truncated heat-kernel sum at time `t`.
pub fn heat_kernel_tail_bound(cfg: &KernelConfig, t: f64) -> f64 {
    cfg.basis.heat_tail_estimate(cfg.convention.rate() * t)
}

/// P_t(x, y) = 1/m₀ + Σ e^{−cλₙt} φₙ(x)φₙ(y).
pub fn heat_kernel(cfg: &KernelConfig, t: f64, x: &Point, y: &Point) -> Result<HeatKernelValue> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    let m = cfg.manifold();
    m.validate_point(x)?;
    m.validate_point(y)?;
    let (px, py) = eval_pair(&cfg.basis, x, y);
    let rate = cfg.convention.rate() * t;
    let value = cfg
        .basis
        .eigenvalues()
        .iter()
        .zip(px.iter().zip(&py))
        .map(|(lam, (a, b))| (-lam * rate).exp() * (a * b))
        .sum();
    let tail_bound = heat_kernel_tail_bound(cfg, t);
    Ok(HeatKernelValue { value, tail_bound, truncation_warning: tail_bound > cfg.tail_tolerance })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RieszValue {
    Finite {
        value: f64,
        /// Absolute bound on the dropped tail; infinite when the series does
        /// not converge absolutely.
        tail_bound: f64,
    },
    /// Diagonal evaluation with α ≤ d/2, where the kernel is singular.
    Divergent,
}

impl RieszValue {
    pub fn value(&self) -> Option<f64> {
        match *self {
            RieszValue::Finite { value, .. } => Some(value),
            RieszValue::Divergent => None,
        }
    }
}

/// G_{α,ρ}(x, y) = ρ/m₀ + Σ λₙ^{−α} φₙ(x)φₙ(y). Set ρ = 0 for G_α.
pub fn riesz_kernel(cfg: &KernelConfig, x: &Point, y: &Point) -> Result<RieszValue> {
    if cfg.alpha <= 0.0 {
        return Err(Error::Domain(format!("riesz kernel needs alpha > 0, got {}", cfg.alpha)));
    }
    let m = cfg.manifold();
    m.validate_point(x)?;
    m.validate_point(y)?;
    let half_dim = m.dimension() as f64 / 2.0;
    if cfg.alpha <= half_dim && m.distance_unchecked(x, y) == 0.0 {
        return Ok(RieszValue::Divergent);
    }
    let (px, py) = eval_pair(&cfg.basis, x, y);
    let value = cfg
        .riesz_weights()
        .iter()
        .zip(px.iter().zip(&py))
        .map(|(w, (a, b))| w * (a * b))
        .sum();
    Ok(RieszValue::Finite { value, tail_bound: cfg.basis.power_tail_estimate(cfg.alpha) })
}

/// G_{α,ρ}(x, y) via ρ/m₀ + Γ(α)⁻¹ ∫₀^∞ t^{α−1}(P_t(x,y) − 1/m₀) dt over the
/// same truncated basis.
///
/// The semigroup here is always e^{tΔ} (full Laplacian); with the half
/// convention the integral would return 2^α times the spectral sum.
pub fn riesz_kernel_time_integral(
    cfg: &KernelConfig,
    x: &Point,
    y: &Point,
    rel_tol: f64,
) -> Result<f64> {
    if cfg.alpha <= 0.0 {
        return Err(Error::Domain(format!("riesz kernel needs alpha > 0, got {}", cfg.alpha)));
    }
    let m = cfg.manifold();
    m.validate_point(x)?;
    m.validate_point(y)?;
    let (px, py) = eval_pair(&cfg.basis, x, y);
    let lams = &cfg.basis.eigenvalues()[1..];
    let prods: Vec<f64> = px[1..].iter().zip(&py[1..]).map(|(a, b)| a * b).collect();
    let alpha = cfg.alpha;
    // t = u^{1/α} turns t^{α−1}dt into du/α
    let integrand = |u: f64| {
        let t = u.powf(1.0 / alpha);
        lams.iter().zip(&prods).map(|(l, p)| (-l * t).exp() * p).sum::<f64>()
    };
    let t_max = 40.0 / cfg.basis.spectral_gap();
    let scale: f64 = prods.iter().map(|p| p.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let (integral, _) =
        integrate_adaptive(integrand, 0.0, t_max.powf(alpha), rel_tol * 1e-3 * scale, rel_tol, 20_000);
    Ok(cfg.rho * px[0] * py[0] + integral / gamma(alpha + 1.0))
}

fn eval_pair(basis: &SpectralBasis, x: &Point, y: &Point) -> (Vec<f64>, Vec<f64>) {
    let mut px = Vec::new();
    let mut py = Vec::new();
    basis.evaluate_all(x, &mut px);
    basis.evaluate_all(y, &mut py);
    (px, py)
}

/// Which bound governs G_α near the diagonal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelRegime {
    /// α > d/2: bounded.
    Bounded,
    /// α = d/2: C(1 + log⁻ d).
    Logarithmic,
    /// α < d/2: C d^{2α−d}.
    Singular,
}

impl KernelRegime {
    pub fn classify(alpha: f64, dimension: usize) -> Self {
        let half = dimension as f64 / 2.0;
        if (alpha - half).abs() <= 1e-12 {
            KernelRegime::Logarithmic
        } else if alpha > half {
            KernelRegime::Bounded
        } else {
            KernelRegime::Singular
        }
    }

    /// Distance profile of the bound, without its constant.
    pub fn profile(self, alpha: f64, dimension: usize, distance: f64) -> f64 {
        match self {
            KernelRegime::Bounded => 1.0,
            KernelRegime::Logarithmic => 1.0 + log_minus(distance),
            KernelRegime::Singular => distance.powf(2.0 * alpha - dimension as f64),
        }
    }
}

/// log⁻(z) = max(0, −log z).
pub fn log_minus(z: f64) -> f64 {
    (-z.ln()).max(0.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelBoundReport {
    pub regime: KernelRegime,
    /// Smallest C with |G(x,y)| ≤ C·profile(d(x,y)) over the samples.
    pub constant: f64,
    /// Slope of log(|G|/profile) against log d over pairs within a tenth of
    /// the diameter; near zero when the profile captures the singularity.
    pub near_diagonal_slope: Option<f64>,
    pub samples: usize,
    pub passes: bool,
}

pub fn kernel_bound_check(cfg: &KernelConfig, pairs: &[(Point, Point)]) -> Result<KernelBoundReport> {
    if pairs.is_empty() {
        return Err(Error::Domain("kernel bound check needs at least one pair".into()));
    }
    let m = cfg.manifold();
    let d = m.dimension();
    let regime = KernelRegime::classify(cfg.alpha, d);
    let mut constant: f64 = 0.0;
    let mut near = (Vec::new(), Vec::new());
    for (x, y) in pairs {
        let dist = m.distance(x, y)?;
        if dist == 0.0 {
            return Err(Error::Domain("kernel bound check needs distinct points".into()));
        }
        let g = match riesz_kernel(cfg, x, y)? {
            RieszValue::Finite { value, .. } => value.abs(),
            RieszValue::Divergent => f64::INFINITY,
        };
        let ratio = g / regime.profile(cfg.alpha, d, dist);
        constant = constant.max(ratio);
        if dist <= 0.1 * m.diameter() && ratio > 0.0 {
            near.0.push(dist.ln());
            near.1.push(ratio.ln());
        }
    }
    let spread = near.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - near.0.iter().cloned().fold(f64::INFINITY, f64::min);
    let near_diagonal_slope =
        (near.0.len() >= 3 && spread > 0.0).then(|| linear_fit(&near.0, &near.1).0);
    Ok(KernelBoundReport {
        regime,
        constant,
        near_diagonal_slope,
        samples: pairs.len(),
        passes: constant.is_finite(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IncrementBoundReport {
    /// Smallest C with ∫|P_t(x,·) − P_t(y,·)| ≤ C d(x,y)/√t over all samples.
    pub spatial_constant: f64,
    /// The same constant restricted to each time.
    pub spatial_constant_by_time: Vec<(f64, f64)>,
    /// Smallest C′ with ∫|P_t(x,·) − P_s(x,·)| ≤ C′ log(t/s) over s < t ≤ 1.
    pub temporal_constant: f64,
    /// Largest amount by which any increment integral exceeds 2.
    pub max_cap_violation: f64,
}

/// L¹ increments of the heat kernel in space and time, by quadrature.
pub fn heat_kernel_increment_bounds(
    cfg: &KernelConfig,
    times: &[f64],
    pairs: &[(Point, Point)],
    quad: &Quadrature,
) -> Result<IncrementBoundReport> {
    if let Some(t) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::Domain(format!("increment bounds need t > 0, got {t}")));
    }
    let m = cfg.manifold();
    let table = cfg.basis.tabulate(&quad.nodes);
    let lams = cfg.basis.eigenvalues();
    let rate = cfg.convention.rate();
    let mut buf_a = vec![0.0; quad.len()];
    let mut buf_b = vec![0.0; quad.len()];
    let mut coeffs = vec![0.0; lams.len()];
    let mut row = Vec::new();

    let mut profile = |p: &Point, t: f64, coeffs: &mut Vec<f64>, out: &mut [f64]| {
        cfg.basis.evaluate_all(p, &mut row);
        for ((c, l), phi) in coeffs.iter_mut().zip(lams).zip(&row) {
            *c = (-l * rate * t).exp() * phi;
        }
        table.synthesize(coeffs, out);
    };
    let l1_gap = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).zip(&quad.weights).map(|((a, b), w)| w * (a - b).abs()).sum()
    };

    let mut spatial_constant: f64 = 0.0;
    let mut by_time = Vec::new();
    let mut max_violation: f64 = 0.0;
    for &t in times {
        let mut c_t: f64 = 0.0;
        for (x, y) in pairs {
            let dist = m.distance(x, y)?;
            profile(x, t, &mut coeffs, &mut buf_a);
            profile(y, t, &mut coeffs, &mut buf_b);
            let gap = l1_gap(&buf_a, &buf_b);
            max_violation = max_violation.max(gap - 2.0);
            if dist > 0.0 {
                c_t = c_t.max(gap * t.sqrt() / dist);
            }
        }
        spatial_constant = spatial_constant.max(c_t);
        by_time.push((t, c_t));
    }

    let mut sorted: Vec<f64> = times.iter().cloned().filter(|t| *t <= 1.0).collect();
    sorted.sort_by(f64::total_cmp);
    let mut temporal_constant: f64 = 0.0;
    for (x, _) in pairs {
        for (i, &s) in sorted.iter().enumerate() {
            for &t in &sorted[i + 1..] {
                if t == s {
                    continue;
                }
                profile(x, t, &mut coeffs, &mut buf_a);
                profile(x, s, &mut coeffs, &mut buf_b);
                let gap = l1_gap(&buf_a, &buf_b);
                max_violation = max_violation.max(gap - 2.0);
                temporal_constant = temporal_constant.max(gap / (t / s).ln());
            }
        }
    }
    Ok(IncrementBoundReport {
        spatial_constant,
        spatial_constant_by_time: by_time,
        temporal_constant,
        max_cap_violation: max_violation,
    })
}

/// One line of a kernel tabulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelRow {
    /// Absent for the time-independent covariance kernel.
    pub t: Option<f64>,
    pub distance: f64,
    /// Infinite for a divergent diagonal value.
    pub value: f64,
    pub tail_bound: f64,
}

/// P_t(x, y) for every time and every target point.
pub fn tabulate_heat_kernel(
    cfg: &KernelConfig,
    times: &[f64],
    x: &Point,
    targets: &[Point],
) -> Result<Vec<KernelRow>> {
    let m = cfg.manifold();
    let mut rows = Vec::with_capacity(times.len() * targets.len());
    for &t in times {
        for y in targets {
            let v = heat_kernel(cfg, t, x, y)?;
            rows.push(KernelRow {
                t: Some(t),
                distance: m.distance(x, y)?,
                value: v.value,
                tail_bound: v.tail_bound,
            });
        }
    }
    Ok(rows)
}

/// G_{α,ρ}(x, y) for every target point.
pub fn tabulate_riesz_kernel(cfg: &KernelConfig, x: &Point, targets: &[Point]) -> Result<Vec<KernelRow>> {
    let m = cfg.manifold();
    targets
        .iter()
        .map(|y| {
            let (value, tail_bound) = match riesz_kernel(cfg, x, y)? {
                RieszValue::Finite { value, tail_bound } => (value, tail_bound),
                RieszValue::Divergent => (f64::INFINITY, f64::INFINITY),
            };
            Ok(KernelRow { t: None, distance: m.distance(x, y)?, value, tail_bound })
        })
        .collect()
}

/// CSV with header `t,d_xy,value,tail_bound`; `t` is empty for rows without a time.
pub fn write_kernel_table<W: Write>(out: W, rows: &[KernelRow]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["t", "d_xy", "value", "tail_bound"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.t.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.distance),
            fmt_f64(r.value),
            fmt_f64(r.tail_bound),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

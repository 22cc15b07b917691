use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{exponent_fit, wilson_interval, EpsilonPoint, ExponentFit};
use super::{c0_bound, theoretical_exponents, ExponentBracket, Regime, RegimeParams};
use crate::error::{Error, Result};
use crate::geometry::{separated_net, BasisTable, ManifoldKind, PointSet, SpectralBasis};
use crate::noise::{sample_increment_into, NoiseIncrement, NoiseWeights, RngStream};
use crate::solver::{exp_euler_step, FieldState, OuTransition, SigmaSpec, SolverConfig, StepWorkspace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    TimeStepper,
    GaussianExact,
}

/// Everything a small-ball campaign needs besides σ and the ε list.
#[derive(Clone, Debug)]
pub struct SmallBallSetup {
    pub basis: SpectralBasis,
    pub weights: NoiseWeights,
    /// Solver step; caps the evaluation step c₀ε⁴.
    pub dt: f64,
    pub t_end: f64,
    /// Quadrature resolution for the time stepper's σ·dW products.
    pub grid_resolution: usize,
    /// Constant C in the c₀ bound.
    pub c0_constant: f64,
    pub seed: u64,
}

/// Space-time evaluation grid for one ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub eps: f64,
    pub c0: f64,
    /// c₀ε⁴.
    pub t1: f64,
    /// Step actually used: min(t₁, dt) shrunk so that T is a whole number of steps.
    pub tau: f64,
    pub steps: usize,
    pub net_radius: f64,
    pub net_size: usize,
}

/// c₀ = min(c0_bound(ε), 1); above the critical α, where no bound exists, c₀ = 1.
pub fn schedule(setup: &SmallBallSetup, eps: f64) -> Result<(EpsilonSchedule, PointSet)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1), got {eps}")));
    }
    let manifold = setup.basis.manifold();
    let regime = RegimeParams::new(setup.weights.alpha(), manifold.dimension())?;
    let c0 = match regime.regime {
        Regime::Above => 1.0,
        _ => c0_bound(eps, regime.alpha, regime.dimension, setup.c0_constant)?.min(1.0),
    };
    let t1 = c0 * eps.powi(4);
    if !(t1 > 0.0) {
        return Err(Error::Domain(format!("c0*eps^4 underflows at eps = {eps}")));
    }
    let steps = (setup.t_end / t1.min(setup.dt) - 1e-9).ceil().max(1.0) as usize;
    let net_radius = eps * eps;
    let net = separated_net(manifold, net_radius, 0);
    Ok((
        EpsilonSchedule {
            eps,
            c0,
            t1,
            tau: setup.t_end / steps as f64,
            steps,
            net_radius,
            net_size: net.len(),
        },
        net,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonEstimate {
    pub eps: f64,
    pub paths: u64,
    pub survivors: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// p̂ ∈ {0, 1}: left out of the exponent fit.
    pub excluded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallBallManifest {
    pub manifold: ManifoldKind,
    pub n_max: usize,
    pub alpha: f64,
    pub rho: f64,
    pub sigma: String,
    pub dt: f64,
    pub t_end: f64,
    pub grid_resolution: usize,
    pub c0_constant: f64,
    pub seed: u64,
    pub n_paths: u64,
    pub mode: SamplingMode,
    pub schedules: Vec<EpsilonSchedule>,
    pub sup_bias: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallBallResult {
    pub estimates: Vec<EpsilonEstimate>,
    pub fit: Option<ExponentFit>,
    pub fit_error: Option<String>,
    /// None when α lies outside the range covered by the exponent bounds.
    pub bracket: Option<ExponentBracket>,
    pub manifest: SmallBallManifest,
}

impl SmallBallResult {
    /// p̂ is nonincreasing as ε shrinks, up to overlapping intervals.
    pub fn is_monotone(&self) -> bool {
        let mut sorted: Vec<&EpsilonEstimate> = self.estimates.iter().collect();
        sorted.sort_by(|a, b| b.eps.total_cmp(&a.eps));
        sorted.windows(2).all(|w| w[1].p_hat <= w[0].p_hat || w[1].ci_lo <= w[0].ci_hi)
    }
}

/// Fraction of paths whose sup over the ε² net and the c₀ε⁴ time grid stays
/// below ε, for each ε, with an exponent fit of the decay. Paths share
/// streams across ε (stream id = path index).
pub fn small_ball_estimate(
    setup: &SmallBallSetup,
    sigma: &SigmaSpec,
    eps_list: &[f64],
    n_paths: u64,
    mode: SamplingMode,
) -> Result<SmallBallResult> {
    if n_paths == 0 {
        return Err(Error::Config("small-ball estimate needs at least one path".into()));
    }
    if eps_list.is_empty() {
        return Err(Error::Config("empty epsilon list".into()));
    }
    let c = match (mode, sigma.as_constant()) {
        (SamplingMode::GaussianExact, None) => {
            return Err(Error::Config("GaussianExact sampling needs a constant sigma".into()))
        }
        (_, c) => c,
    };
    let manifold = setup.basis.manifold();
    let dimension = manifold.dimension();
    let log_correction = RegimeParams::new(setup.weights.alpha(), dimension)?.regime == Regime::Critical;

    let mut estimates = Vec::with_capacity(eps_list.len());
    let mut schedules = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let (sched, net) = schedule(setup, eps)?;
        let table = setup.basis.tabulate(&net.points);
        let outcomes: Vec<Result<bool>> = match mode {
            SamplingMode::GaussianExact => {
                let tr = OuTransition::new(sched.tau, c.unwrap_or(0.0), &setup.weights, &setup.basis);
                (0..n_paths)
                    .into_par_iter()
                    .map(|p| Ok(exact_path_survives(&tr, &table, &sched, setup.seed, p)))
                    .collect()
            }
            SamplingMode::TimeStepper => {
                let cfg = SolverConfig::new(
                    setup.basis.clone(),
                    setup.weights.clone(),
                    sched.tau,
                    setup.t_end,
                    setup.grid_resolution,
                )?
                .with_probes(net.points.clone())?;
                (0..n_paths)
                    .into_par_iter()
                    .map(|p| stepper_path_survives(&cfg, sigma, &sched, setup.seed, p))
                    .collect()
            }
        };
        let mut survivors = 0u64;
        for o in outcomes {
            survivors += o? as u64;
        }
        let (ci_lo, ci_hi) = wilson_interval(survivors, n_paths)?;
        let p_hat = survivors as f64 / n_paths as f64;
        estimates.push(EpsilonEstimate {
            eps,
            paths: n_paths,
            survivors,
            p_hat,
            ci_lo,
            ci_hi,
            excluded: survivors == 0 || survivors == n_paths,
        });
        schedules.push(sched);
    }

    let points: Vec<EpsilonPoint> = estimates
        .iter()
        .map(|e| EpsilonPoint { eps: e.eps, p_hat: e.p_hat, ci_lo: e.ci_lo, ci_hi: e.ci_hi })
        .collect();
    let (fit, fit_error) = match exponent_fit(&points, log_correction) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let bracket = theoretical_exponents(setup.weights.alpha(), dimension)
        .ok()
        .filter(|_| setup.weights.alpha() <= dimension as f64 / 2.0 + 1e-12);

    Ok(SmallBallResult {
        estimates,
        fit,
        fit_error,
        bracket,
        manifest: SmallBallManifest {
            manifold: manifold.kind,
            n_max: setup.basis.n_max(),
            alpha: setup.weights.alpha(),
            rho: setup.weights.rho(),
            sigma: format!("{sigma:?}"),
            dt: setup.dt,
            t_end: setup.t_end,
            grid_resolution: setup.grid_resolution,
            c0_constant: setup.c0_constant,
            seed: setup.seed,
            n_paths,
            mode,
            schedules,
            sup_bias: "sup taken over the eps^2 net and the c0*eps^4 time grid only; \
                       it under-estimates the continuum sup, so p_hat is biased upward"
                .into(),
        },
    })
}

fn exceeds(table: &BasisTable, coeffs: &[f64], eps: f64) -> bool {
    (0..table.n_points).any(|i| crate::geometry::basis_dot(table.row(i), coeffs).abs() >= eps)
}

fn exact_path_survives(tr: &OuTransition, table: &BasisTable, sched: &EpsilonSchedule, seed: u64, path: u64) -> bool {
    let mut rng = RngStream::new(seed, path).next_block();
    let mut coeffs = vec![0.0; table.n_modes];
    for _ in 0..sched.steps {
        tr.step(&mut coeffs, &mut rng);
        if exceeds(table, &coeffs, sched.eps) {
            return false;
        }
    }
    true
}

fn stepper_path_survives(
    cfg: &SolverConfig,
    sigma: &SigmaSpec,
    sched: &EpsilonSchedule,
    seed: u64,
    path: u64,
) -> Result<bool> {
    let mut stream = RngStream::new(seed, path);
    let mut state = FieldState::zero(cfg);
    let mut work = StepWorkspace::default();
    let mut inc = NoiseIncrement { dt: cfg.dt(), xi: Vec::new(), stream: path, step: 0 };
    for _ in 0..sched.steps {
        inc.step = stream.counter();
        sample_increment_into(cfg.weights(), cfg.dt(), &mut stream, &mut inc.xi)?;
        exp_euler_step(&mut state, cfg, sigma, &inc, &mut work)?;
        if exceeds(cfg.probe_table(), &state.coeffs, sched.eps) {
            return Ok(false);
        }
    }
    Ok(true)
}

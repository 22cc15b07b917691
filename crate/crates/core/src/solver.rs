//! Spectral exponential-Euler integration of ∂ₜu = ½Δu + σ(t,x,u)Ẇ and the
//! closed-form Gaussian law of the solution for constant σ.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BasisTable, Manifold, Point, Quadrature, SpectralBasis};
use crate::noise::{sample_increment_into, NoiseIncrement, NoiseWeights, RngStream};
use crate::output::{csv_err, csv_writer, fmt_f64};

/// Largest allowed λ_max·dt/2.
pub const MAX_STIFFNESS: f64 = 20.0;

type DeterministicFn = dyn Fn(f64, &Point) -> f64 + Send + Sync;
type LipschitzFn = dyn Fn(f64, &Point, f64) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum SigmaKind {
    Constant(f64),
    Deterministic(Arc<DeterministicFn>),
    Lipschitz(Arc<LipschitzFn>),
}

/// Noise coefficient σ(t, x, u) with its declared Lipschitz constant and bounds.
#[derive(Clone)]
pub struct SigmaSpec {
    pub kind: SigmaKind,
    pub lipschitz: f64,
    pub lower: f64,
    pub upper: f64,
}

impl fmt::Debug for SigmaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            SigmaKind::Constant(c) => format!("Constant({c})"),
            SigmaKind::Deterministic(_) => "Deterministic".into(),
            SigmaKind::Lipschitz(_) => "Lipschitz".into(),
        };
        f.debug_struct("SigmaSpec")
            .field("kind", &kind)
            .field("lipschitz", &self.lipschitz)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .finish()
    }
}

fn check_bounds(lower: f64, upper: f64) -> Result<()> {
    if !(lower.is_finite() && upper.is_finite() && lower > 0.0 && upper >= lower) {
        return Err(Error::Config(format!(
            "sigma bounds need 0 < C1 <= C2, got C1={lower}, C2={upper}"
        )));
    }
    Ok(())
}

impl SigmaSpec {
    /// σ ≡ c. `c = 0` is accepted and gives the deterministic heat flow.
    pub fn constant(c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Config(format!("constant sigma must be finite and >= 0, got {c}")));
        }
        Ok(SigmaSpec { kind: SigmaKind::Constant(c), lipschitz: 0.0, lower: c, upper: c })
    }

    /// C1 + (C2 − C1)·s(4D·u/(C2 − C1)) with s the logistic function, whose
    /// steepest slope is exactly D.
    pub fn sigmoid(lower: f64, upper: f64, slope: f64) -> Result<Self> {
        check_bounds(lower, upper)?;
        if !(slope.is_finite() && slope >= 0.0) {
            return Err(Error::Config(format!("sigmoid slope must be finite and >= 0, got {slope}")));
        }
        if upper == lower {
            return Ok(SigmaSpec { lipschitz: slope, ..SigmaSpec::constant(lower)? });
        }
        let span = upper - lower;
        let gain = 4.0 * slope / span;
        let f = move |_: f64, _: &Point, u: f64| lower + span / (1.0 + (-gain * u).exp());
        Ok(SigmaSpec { kind: SigmaKind::Lipschitz(Arc::new(f)), lipschitz: slope, lower, upper })
    }

    pub fn deterministic(
        f: impl Fn(f64, &Point) -> f64 + Send + Sync + 'static,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        check_bounds(lower, upper)?;
        Ok(SigmaSpec { kind: SigmaKind::Deterministic(Arc::new(f)), lipschitz: 0.0, lower, upper })
    }

    pub fn lipschitz(
        f: impl Fn(f64, &Point, f64) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        check_bounds(lower, upper)?;
        Ok(SigmaSpec { kind: SigmaKind::Lipschitz(Arc::new(f)), lipschitz, lower, upper })
    }

    pub fn eval(&self, t: f64, x: &Point, u: f64) -> f64 {
        match &self.kind {
            SigmaKind::Constant(c) => *c,
            SigmaKind::Deterministic(f) => f(t, x),
            SigmaKind::Lipschitz(f) => f(t, x, u),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.kind {
            SigmaKind::Constant(c) => Some(c),
            _ => None,
        }
    }

    /// Spot-checks C1 ≤ σ ≤ C2 and |σ(t,x,u) − σ(t,x,v)| ≤ D|u − v| on random
    /// triples with t ∈ [0, 1] and u, v ∈ [−u_range, u_range].
    pub fn check_hypotheses(&self, manifold: Manifold, samples: usize, u_range: f64, seed: u64) -> HypothesisReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bound_violations = 0;
        let mut worst_ratio: f64 = 0.0;
        let tol = 1e-12 * self.upper.max(1.0);
        for _ in 0..samples {
            let t = rng.random::<f64>();
            let x = manifold.random_point(&mut rng);
            let u = (2.0 * rng.random::<f64>() - 1.0) * u_range;
            let v = (2.0 * rng.random::<f64>() - 1.0) * u_range;
            let (su, sv) = (self.eval(t, &x, u), self.eval(t, &x, v));
            for s in [su, sv] {
                if !(s >= self.lower - tol && s <= self.upper + tol) {
                    bound_violations += 1;
                }
            }
            if u != v {
                worst_ratio = worst_ratio.max((su - sv).abs() / (u - v).abs());
            }
        }
        HypothesisReport {
            samples,
            bound_violations,
            observed_lipschitz: worst_ratio,
            lipschitz_ok: worst_ratio <= self.lipschitz * (1.0 + 1e-9) + 1e-12,
            nondegenerate: self.lower > 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub samples: usize,
    pub bound_violations: usize,
    pub observed_lipschitz: f64,
    pub lipschitz_ok: bool,
    pub nondegenerate: bool,
}

impl HypothesisReport {
    pub fn passes(&self) -> bool {
        self.bound_violations == 0 && self.lipschitz_ok && self.nondegenerate
    }
}

/// Discretization and caches shared by every path of a run.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    basis: SpectralBasis,
    weights: NoiseWeights,
    dt: f64,
    t_end: f64,
    steps: usize,
    record_steps: Vec<usize>,
    grid: Quadrature,
    grid_table: BasisTable,
    decay: Vec<f64>,
    probes: Vec<Point>,
    probe_table: BasisTable,
}

impl SolverConfig {
    /// Checks dt ≤ T, T/dt integral, λ_max·dt/2 ≤ 20, and a grid resolution
    /// above twice the basis bandwidth (at exactly twice, the top sine mode
    /// vanishes on the circle grid).
    pub fn new(
        basis: SpectralBasis,
        weights: NoiseWeights,
        dt: f64,
        t_end: f64,
        grid_resolution: usize,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::Config(format!("T must be positive, got {t_end}")));
        }
        if dt > t_end {
            return Err(Error::Config(format!("dt = {dt} exceeds T = {t_end}")));
        }
        let ratio = t_end / dt;
        let steps = ratio.round() as usize;
        if (ratio - steps as f64).abs() > 1e-6 * ratio {
            return Err(Error::Config(format!("T = {t_end} is not a whole number of steps dt = {dt}")));
        }
        let stiffness = basis.largest_eigenvalue() * dt / 2.0;
        if stiffness > MAX_STIFFNESS {
            return Err(Error::Config(format!(
                "lambda_max*dt/2 = {stiffness:.4} exceeds {MAX_STIFFNESS}; reduce dt or N_max"
            )));
        }
        if weights.len() != basis.len() || weights.manifold() != basis.manifold() {
            return Err(Error::Config("noise weights and basis disagree".into()));
        }
        let needed = 2 * basis.bandwidth() + 1;
        if grid_resolution < needed {
            return Err(Error::Config(format!(
                "grid resolution {grid_resolution} must exceed twice the basis bandwidth (need {needed})"
            )));
        }
        let grid = Quadrature::new(basis.manifold(), grid_resolution);
        let grid_table = basis.tabulate(&grid.nodes);
        let decay = basis.eigenvalues().iter().map(|l| (-l * dt / 2.0).exp()).collect();
        let probe_table = basis.tabulate(&[]);
        Ok(SolverConfig {
            basis,
            weights,
            dt,
            t_end,
            steps,
            record_steps: Vec::new(),
            grid,
            grid_table,
            decay,
            probes: Vec::new(),
            probe_table,
        })
    }

    /// Snapshot times, each rounded to the nearest step.
    pub fn with_record_times(mut self, times: &[f64]) -> Result<Self> {
        let mut steps = Vec::with_capacity(times.len());
        for &t in times {
            if !(t >= 0.0 && t <= self.t_end * (1.0 + 1e-12)) {
                return Err(Error::Config(format!("record time {t} outside [0, {}]", self.t_end)));
            }
            steps.push(((t / self.dt).round() as usize).min(self.steps));
        }
        steps.sort_unstable();
        steps.dedup();
        self.record_steps = steps;
        Ok(self)
    }

    pub fn with_probes(mut self, probes: Vec<Point>) -> Result<Self> {
        let m = self.basis.manifold();
        for p in &probes {
            m.validate_point(p)?;
        }
        self.probe_table = self.basis.tabulate(&probes);
        self.probes = probes;
        Ok(self)
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn weights(&self) -> &NoiseWeights {
        &self.weights
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn record_times(&self) -> Vec<f64> {
        self.record_steps.iter().map(|&k| k as f64 * self.dt).collect()
    }

    pub fn grid(&self) -> &Quadrature {
        &self.grid
    }

    pub fn grid_table(&self) -> &BasisTable {
        &self.grid_table
    }

    pub fn probes(&self) -> &[Point] {
        &self.probes
    }

    pub fn probe_table(&self) -> &BasisTable {
        &self.probe_table
    }

    /// e^{−λₙdt/2} per mode.
    pub fn decay(&self) -> &[f64] {
        &self.decay
    }
}

/// u(t, ·) as spectral coefficients plus its values on the solver grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub coeffs: Vec<f64>,
    pub grid_values: Vec<f64>,
    /// max |u| over the grid at every visited time since the path started.
    pub sup_abs: f64,
}

impl FieldState {
    pub fn zero(cfg: &SolverConfig) -> Self {
        FieldState {
            t: 0.0,
            coeffs: vec![0.0; cfg.basis.len()],
            grid_values: vec![0.0; cfg.grid.len()],
            sup_abs: 0.0,
        }
    }

    pub fn from_coeffs(cfg: &SolverConfig, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != cfg.basis.len() {
            return Err(Error::Config("initial coefficients do not match the basis".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("initial condition is not finite".into()));
        }
        let mut grid_values = vec![0.0; cfg.grid.len()];
        cfg.grid_table.synthesize(&coeffs, &mut grid_values);
        let sup_abs = max_abs(&grid_values);
        Ok(FieldState { t: 0.0, coeffs, grid_values, sup_abs })
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Scratch buffers for [`exp_euler_step`].
#[derive(Clone, Debug, Default)]
pub struct StepWorkspace {
    field: Vec<f64>,
    forcing: Vec<f64>,
}

/// One step ûₙ ← e^{−λₙdt/2}(ûₙ + [σ·dW]̂ₙ). The product σ·dW is formed on
/// the grid and projected back, except for constant σ where it is exact.
pub fn exp_euler_step(
    state: &mut FieldState,
    cfg: &SolverConfig,
    sigma: &SigmaSpec,
    inc: &NoiseIncrement,
    work: &mut StepWorkspace,
) -> Result<()> {
    let n = cfg.basis.len();
    match sigma.kind {
        SigmaKind::Constant(c) => {
            for ((u, d), x) in state.coeffs.iter_mut().zip(&cfg.decay).zip(&inc.xi) {
                *u = d * (*u + c * x);
            }
        }
        _ => {
            work.field.resize(cfg.grid.len(), 0.0);
            cfg.grid_table.synthesize(&inc.xi, &mut work.field);
            for ((f, p), u) in work.field.iter_mut().zip(&cfg.grid.nodes).zip(&state.grid_values) {
                *f *= sigma.eval(state.t, p, *u);
            }
            work.forcing.clear();
            work.forcing.resize(n, 0.0);
            for i in 0..cfg.grid.len() {
                let g = cfg.grid.weights[i] * work.field[i];
                for (o, phi) in work.forcing.iter_mut().zip(cfg.grid_table.row(i)) {
                    *o += g * phi;
                }
            }
            for ((u, d), x) in state.coeffs.iter_mut().zip(&cfg.decay).zip(&work.forcing) {
                *u = d * (*u + x);
            }
        }
    }
    if let Some(bad) = state.coeffs.iter().position(|c| !c.is_finite()) {
        return Err(Error::Blowup {
            step: inc.step as usize,
            message: format!("coefficient {bad} is not finite at t = {}", state.t + cfg.dt),
        });
    }
    state.t += cfg.dt;
    cfg.grid_table.synthesize(&state.coeffs, &mut state.grid_values);
    state.sup_abs = state.sup_abs.max(max_abs(&state.grid_values));
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub coeffs: Vec<f64>,
    pub probe_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub path_id: u64,
    pub sup_abs: f64,
    pub snapshots: Vec<Snapshot>,
}

/// Integrates one path to T from `u0`, drawing step k's noise from counter k
/// of `stream`.
pub fn solve_path(
    u0: &FieldState,
    cfg: &SolverConfig,
    sigma: &SigmaSpec,
    stream: &mut RngStream,
) -> Result<PathRecord> {
    if u0.coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Config("initial condition is not finite".into()));
    }
    let mut state = u0.clone();
    let mut work = StepWorkspace::default();
    let mut inc = NoiseIncrement { dt: cfg.dt, xi: Vec::new(), stream: stream.stream(), step: 0 };
    let mut snapshots = Vec::with_capacity(cfg.record_steps.len());
    let mut next_record = cfg.record_steps.iter().peekable();
    let snap = |state: &FieldState| {
        let mut probe_values = vec![0.0; cfg.probes.len()];
        cfg.probe_table.synthesize(&state.coeffs, &mut probe_values);
        Snapshot { t: state.t, coeffs: state.coeffs.clone(), probe_values }
    };
    if next_record.peek() == Some(&&0) {
        snapshots.push(snap(&state));
        next_record.next();
    }
    for k in 1..=cfg.steps {
        inc.step = stream.counter();
        sample_increment_into(&cfg.weights, cfg.dt, stream, &mut inc.xi)?;
        exp_euler_step(&mut state, cfg, sigma, &inc, &mut work)?;
        if next_record.peek() == Some(&&k) {
            snapshots.push(snap(&state));
            next_record.next();
        }
    }
    Ok(PathRecord { path_id: stream.stream(), sup_abs: state.sup_abs, snapshots })
}

/// Per-mode covariance Cov(ûₙ(t), ûₙ(s)) for constant σ = c and u₀ ≡ 0:
/// c²wₙe^{−λₙ|t−s|/2}(1 − e^{−λₙ min(s,t)})/λₙ, and c²w₀·min(s,t) for λ = 0.
pub fn mode_covariances(t: f64, s: f64, c: f64, weights: &NoiseWeights, basis: &SpectralBasis) -> Vec<f64> {
    let lo = t.min(s).max(0.0);
    let gap = (t - s).abs();
    basis
        .eigenvalues()
        .iter()
        .zip(weights.weights())
        .map(|(&lam, &w)| {
            let factor = if lam == 0.0 {
                lo
            } else {
                (-lam * gap / 2.0).exp() * (-(-lam * lo).exp_m1()) / lam
            };
            c * c * w * factor
        })
        .collect()
}

/// Cov(u(t,x), u(s,y)) for constant σ = c and u₀ ≡ 0.
pub fn gaussian_covariance(
    t: f64,
    s: f64,
    x: &Point,
    y: &Point,
    c: f64,
    weights: &NoiseWeights,
    basis: &SpectralBasis,
) -> f64 {
    let k = mode_covariances(t, s, c, weights, basis);
    let (mut px, mut py) = (Vec::new(), Vec::new());
    basis.evaluate_all(x, &mut px);
    basis.evaluate_all(y, &mut py);
    k.iter().zip(px.iter().zip(&py)).map(|(k, (a, b))| k * (a * b)).sum()
}

/// Joint covariance over `times × points`, time-major.
pub fn covariance_matrix(
    times: &[f64],
    points: &[Point],
    c: f64,
    weights: &NoiseWeights,
    basis: &SpectralBasis,
) -> DMatrix<f64> {
    let table = basis.tabulate(points);
    let np = points.len();
    let n = times.len() * np;
    let mut cov = DMatrix::zeros(n, n);
    let mut scaled = vec![0.0; basis.len()];
    for (a, &t) in times.iter().enumerate() {
        for (b, &s) in times.iter().enumerate().skip(a) {
            let k = mode_covariances(t, s, c, weights, basis);
            for i in 0..np {
                for ((o, kn), phi) in scaled.iter_mut().zip(&k).zip(table.row(i)) {
                    *o = kn * phi;
                }
                for j in 0..np {
                    let v = crate::geometry::basis_dot(&scaled, table.row(j));
                    cov[(a * np + i, b * np + j)] = v;
                    cov[(b * np + j, a * np + i)] = v;
                }
            }
        }
    }
    cov
}

/// Symmetric square-root factor of a Gaussian covariance.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    factor: DMatrix<f64>,
    pub clipped_mass: f64,
    pub trace: f64,
}

impl GaussianSampler {
    /// Eigen-factorizes `cov`, clipping negative eigenvalues. Fails when the
    /// most negative eigenvalue is below −1e-8·max(1, λ_max) or the clipped
    /// mass exceeds 1e-6 of the trace.
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        let trace = cov.trace();
        let eig = SymmetricEigen::new(cov);
        let top = eig.eigenvalues.max().max(1.0);
        let min = eig.eigenvalues.min();
        let clipped_mass: f64 = eig.eigenvalues.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
        if min < -1e-8 * top || clipped_mass > 1e-6 * trace.abs() {
            return Err(Error::Conditioning(format!(
                "covariance has eigenvalue {min:.3e}; clipped mass {clipped_mass:.3e} of trace {trace:.3e}"
            )));
        }
        let roots = DVector::from_iterator(
            eig.eigenvalues.len(),
            eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()),
        );
        let factor = eig.eigenvectors * DMatrix::from_diagonal(&roots);
        Ok(GaussianSampler { factor, clipped_mass, trace })
    }

    pub fn dimension(&self) -> usize {
        self.factor.nrows()
    }

    /// One joint draw from the next counter block of `stream`.
    pub fn sample(&self, stream: &mut RngStream) -> Vec<f64> {
        let mut rng = stream.next_block();
        let z = DVector::from_iterator(
            self.factor.ncols(),
            (0..self.factor.ncols()).map(|_| StandardNormal.sample(&mut rng)),
        );
        (&self.factor * z).as_slice().to_vec()
    }
}

/// Joint draws of u(t,x) for constant σ over `times × points` (time-major);
/// one counter block of `stream` per draw.
pub fn gaussian_exact_sample(
    times: &[f64],
    points: &[Point],
    c: f64,
    weights: &NoiseWeights,
    basis: &SpectralBasis,
    stream: &mut RngStream,
    draws: usize,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let sampler = GaussianSampler::new(covariance_matrix(times, points, c, weights, basis))?;
    let out = (0..draws).map(|_| sampler.sample(stream)).collect();
    Ok((out, sampler.clipped_mass))
}

/// Exact-in-law transition of the mode coefficients over a step τ for
/// constant σ: ûₙ ← aₙûₙ + sₙZₙ.
#[derive(Clone, Debug)]
pub struct OuTransition {
    pub tau: f64,
    decay: Vec<f64>,
    noise_sd: Vec<f64>,
}

impl OuTransition {
    pub fn new(tau: f64, c: f64, weights: &NoiseWeights, basis: &SpectralBasis) -> Self {
        let decay = basis.eigenvalues().iter().map(|l| (-l * tau / 2.0).exp()).collect();
        let noise_sd = mode_covariances(tau, tau, c, weights, basis).iter().map(|v| v.sqrt()).collect();
        OuTransition { tau, decay, noise_sd }
    }

    pub fn step<R: Rng + ?Sized>(&self, coeffs: &mut [f64], rng: &mut R) {
        for ((u, a), s) in coeffs.iter_mut().zip(&self.decay).zip(&self.noise_sd) {
            let z: f64 = StandardNormal.sample(rng);
            *u = a * *u + s * z;
        }
    }
}

/// CSV snapshot dump with header `path_id,t,point_id,u_value`.
pub fn write_snapshots_csv<W: Write>(out: W, records: &[PathRecord]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["path_id", "t", "point_id", "u_value"]).map_err(csv_err)?;
    for r in records {
        for s in &r.snapshots {
            for (k, v) in s.probe_values.iter().enumerate() {
                w.write_record([r.path_id.to_string(), fmt_f64(s.t), k.to_string(), fmt_f64(*v)])
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Little-endian f64 values laid out row-major as (path, time, point).
pub fn write_snapshots_binary<W: Write>(mut out: W, records: &[PathRecord]) -> Result<()> {
    for r in records {
        for s in &r.snapshots {
            for v in &s.probe_values {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

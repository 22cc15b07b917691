//! Runners behind the `simulate`, `smallball` and `kernel-eval` subcommands.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use manifold_she::analysis::{small_ball_estimate, SmallBallResult, SmallBallSetup};
use manifold_she::geometry::{Manifold, ManifoldKind, Point, SpectralBasis};
use manifold_she::kernels::{tabulate_heat_kernel, tabulate_riesz_kernel, write_kernel_table, KernelConfig};
use manifold_she::noise::{auto_rho, NoiseParams, NoiseWeights, RngStream};
use manifold_she::output::{csv_err, csv_writer, fmt_f64};
use manifold_she::solver::{solve_path, write_snapshots_csv, FieldState, SigmaSpec, SolverConfig};
use manifold_she::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RhoSetting, RunConfig, SigmaShape};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "MSHE_WORKERS";

/// `--workers`, else `MSHE_WORKERS`, else the number of logical cores.
pub fn worker_count(flag: Option<usize>) -> Result<usize> {
    if let Some(w) = flag {
        return positive_workers(w);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let w = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{WORKERS_ENV} = `{v}` is not a worker count")))?;
            positive_workers(w)
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn positive_workers(w: usize) -> Result<usize> {
    if w == 0 {
        return Err(Error::Config("worker count must be at least 1".into()));
    }
    Ok(w)
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Files created by a run; removed again if the run fails.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<PathBuf>,
}

impl Outputs {
    fn create(&mut self, dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
        fs::create_dir_all(dir)?;
        let path = dir.join(name);
        let file = fs::File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(file))
    }

    fn write_json<T: Serialize>(&mut self, dir: &Path, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(dir, name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn discard(&mut self) {
        for f in self.files.drain(..) {
            let _ = fs::remove_file(f);
        }
    }
}

/// Basis, noise weights and σ resolved from a configuration.
pub struct Model {
    pub basis: SpectralBasis,
    pub weights: NoiseWeights,
    pub sigma: SigmaSpec,
}

pub fn build_model(cfg: &RunConfig) -> Result<Model> {
    let basis = SpectralBasis::build(Manifold::new(cfg.manifold), cfg.n_max)?;
    let rho = match cfg.rho {
        RhoSetting::Auto => auto_rho(&basis, cfg.alpha)?,
        RhoSetting::Value(r) => r,
    };
    let weights = NoiseWeights::new(&basis, NoiseParams { alpha: cfg.alpha, rho })?;
    let s = cfg.sigma;
    let sigma = match s.kind {
        SigmaShape::Constant => SigmaSpec::constant(s.c1)?,
        SigmaShape::Sigmoid => SigmaSpec::sigmoid(s.c1, s.c2, s.d)?,
    };
    Ok(Model { basis, weights, sigma })
}

/// `count` fixed, well-spread evaluation points.
pub fn probe_points(manifold: Manifold, count: usize) -> Vec<Point> {
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    (0..count)
        .map(|k| {
            let s = k as f64 / count as f64;
            match manifold.kind {
                ManifoldKind::Circle => Point::Circle(2.0 * PI * s),
                ManifoldKind::Torus2 => {
                    Point::Torus(2.0 * PI * s, 2.0 * PI * (k as f64 * golden).fract())
                }
                ManifoldKind::Sphere2 => {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                    Point::sphere(z.acos(), 2.0 * PI * (k as f64 * golden).fract())
                }
            }
        })
        .collect()
}

fn point_coords(p: &Point) -> Vec<f64> {
    match *p {
        Point::Circle(a) => vec![a],
        Point::Torus(a, b) => vec![a, b],
        Point::Sphere(v) => v.to_vec(),
    }
}

#[derive(Serialize)]
struct SimulateManifest<'a> {
    config: &'a RunConfig,
    rho: f64,
    n_modes: usize,
    grid_resolution: usize,
    steps: usize,
    record_times: Vec<f64>,
    probes: Vec<Vec<f64>>,
    sup_abs: Vec<f64>,
    outputs: Vec<String>,
}

pub fn simulate_file_names(seed: u64) -> (String, String) {
    (format!("snapshots_seed{seed}.csv"), format!("simulate_seed{seed}.json"))
}

/// Runs the path ensemble and writes snapshot CSV plus manifest.
pub fn run_simulate(cfg: &RunConfig, workers: usize, outputs: &mut Outputs) -> Result<()> {
    let model = build_model(cfg)?;
    let manifold = model.basis.manifold();
    let grid = cfg.grid.unwrap_or(2 * model.basis.bandwidth() + 1);
    let probes = probe_points(manifold, cfg.probes);
    let record = if cfg.record_times.is_empty() { vec![cfg.t_end] } else { cfg.record_times.clone() };
    let rho = model.weights.rho();
    let solver = SolverConfig::new(model.basis, model.weights, cfg.dt, cfg.t_end, grid)?
        .with_record_times(&record)?
        .with_probes(probes.clone())?;
    let mut u0 = FieldState::zero(&solver);
    if let Some(m) = cfg.u0_mode {
        if m >= solver.basis().len() {
            return Err(Error::Config(format!("u0_mode {m} exceeds the {} available modes", solver.basis().len())));
        }
        let mut coeffs = vec![0.0; solver.basis().len()];
        coeffs[m] = cfg.u0_amplitude;
        u0 = FieldState::from_coeffs(&solver, coeffs)?;
    }
    let sigma = &model.sigma;
    let records = with_pool(workers, || {
        (0..cfg.n_paths)
            .into_par_iter()
            .map(|p| solve_path(&u0, &solver, sigma, &mut RngStream::new(cfg.seed, p)))
            .collect::<Result<Vec<_>>>()
    })??;

    let (csv_name, json_name) = simulate_file_names(cfg.seed);
    let mut w = outputs.create(&cfg.out, &csv_name)?;
    write_snapshots_csv(&mut w, &records)?;
    w.flush()?;
    let manifest = SimulateManifest {
        config: cfg,
        rho,
        n_modes: solver.basis().len(),
        grid_resolution: grid,
        steps: solver.steps(),
        record_times: solver.record_times(),
        probes: probes.iter().map(point_coords).collect(),
        sup_abs: records.iter().map(|r| r.sup_abs).collect(),
        outputs: vec![csv_name],
    };
    outputs.write_json(&cfg.out, &json_name, &manifest)
}

#[derive(Serialize)]
struct SmallBallManifestFile<'a> {
    config: &'a RunConfig,
    result: &'a SmallBallResult,
}

pub fn smallball_file_names(seed: u64) -> (String, String) {
    (format!("smallball_seed{seed}.csv"), format!("smallball_seed{seed}.json"))
}

/// Runs the small-ball campaign and writes the count table and manifest. A
/// failed exponent fit is reported in the result, not as an error.
pub fn run_smallball(cfg: &RunConfig, workers: usize, outputs: &mut Outputs) -> Result<SmallBallResult> {
    if cfg.eps.is_empty() {
        return Err(Error::Config("smallball needs a nonempty eps list".into()));
    }
    let d = Manifold::new(cfg.manifold).dimension() as f64;
    if cfg.alpha <= (d / 2.0 - 1.0).max(0.0) {
        return Err(Error::Config(format!(
            "alpha = {} outside the small-ball range alpha > max(0, d/2-1)",
            cfg.alpha
        )));
    }
    let model = build_model(cfg)?;
    let grid = cfg.grid.unwrap_or(2 * model.basis.bandwidth() + 1);
    let setup = SmallBallSetup {
        basis: model.basis,
        weights: model.weights,
        dt: cfg.dt,
        t_end: cfg.t_end,
        grid_resolution: grid,
        c0_constant: cfg.c0_constant,
        seed: cfg.seed,
    };
    let sigma = &model.sigma;
    let result = with_pool(workers, || small_ball_estimate(&setup, sigma, &cfg.eps, cfg.n_paths, cfg.mode))??;

    let (csv_name, json_name) = smallball_file_names(cfg.seed);
    let mut w = csv_writer(outputs.create(&cfg.out, &csv_name)?);
    w.write_record(["eps", "N", "k", "p_hat", "ci_lo", "ci_hi"]).map_err(csv_err)?;
    for e in &result.estimates {
        w.write_record([
            fmt_f64(e.eps),
            e.paths.to_string(),
            e.survivors.to_string(),
            fmt_f64(e.p_hat),
            fmt_f64(e.ci_lo),
            fmt_f64(e.ci_hi),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    outputs.write_json(&cfg.out, &json_name, &SmallBallManifestFile { config: cfg, result: &result })?;
    Ok(result)
}

/// Tabulates P_t(x₀, y) at the record times (default 0.01, 0.1, 1) and
/// G_{α,ρ}(x₀, y) for `probes` points y at increasing distance from x₀.
pub fn run_kernel_eval(cfg: &RunConfig, outputs: &mut Outputs) -> Result<()> {
    let model = build_model(cfg)?;
    let manifold = model.basis.manifold();
    let kc = KernelConfig::new(model.basis, cfg.alpha, model.weights.rho())?;
    let x0 = manifold.reference_point();
    let targets: Vec<Point> = (0..cfg.probes)
        .map(|k| manifold.offset_point(&x0, manifold.diameter() * k as f64 / cfg.probes as f64, 0.0))
        .collect();
    let times = if cfg.record_times.is_empty() { vec![0.01, 0.1, 1.0] } else { cfg.record_times.clone() };
    if let Some(t) = times.iter().find(|t| **t <= 0.0) {
        return Err(Error::Config(format!("heat kernel times must be positive, got {t}")));
    }
    let heat = tabulate_heat_kernel(&kc, &times, &x0, &targets)?;
    let mut w = outputs.create(&cfg.out, "heat_kernel.csv")?;
    write_kernel_table(&mut w, &heat)?;
    w.flush()?;
    if cfg.alpha > 0.0 {
        let riesz = tabulate_riesz_kernel(&kc, &x0, &targets)?;
        let mut w = outputs.create(&cfg.out, "riesz_kernel.csv")?;
        write_kernel_table(&mut w, &riesz)?;
        w.flush()?;
    }
    Ok(())
}

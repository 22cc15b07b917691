//! Acceptance criteria. Each prints one PASS/FAIL line with the measured values.

use manifold_she::analysis::{
    c0_bound, conditional_frequencies, correlation_norm_diagnostic, evaluate_events, record_gaussian_path,
    small_ball_estimate, spatial_increment_moments, temporal_increment_moments, variance_scaling_check,
    RegimeParams, SamplingMode, SmallBallSetup,
};
use manifold_she::geometry::{separated_net, Manifold, Point, SpectralBasis};
use manifold_she::kernels::{heat_kernel, riesz_kernel, riesz_kernel_time_integral, KernelConfig};
use manifold_she::noise::{auto_rho, NoiseParams, NoiseWeights, RngStream};
use manifold_she::numerics::linear_fit;
use manifold_she::solver::{gaussian_covariance, solve_path, FieldState, OuTransition, SigmaSpec, SolverConfig};
use manifold_she::Result;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

type Outcome = Result<(bool, String)>;

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn weights(m: Manifold, n_max: usize, alpha: f64, rho: f64) -> Result<(SpectralBasis, NoiseWeights)> {
    let b = SpectralBasis::build(m, n_max)?;
    let w = NoiseWeights::new(&b, NoiseParams { alpha, rho })?;
    Ok((b, w))
}

fn default_rho(m: Manifold, n_max: usize, alpha: f64) -> Result<f64> {
    auto_rho(&SpectralBasis::build(m, n_max)?, alpha)
}

fn oracle_equivalence() -> Outcome {
    let rho = default_rho(Manifold::CIRCLE, 65, 0.25)?;
    let (b, w) = weights(Manifold::CIRCLE, 65, 0.25, rho)?;
    let (c, t_end, paths) = (0.2, 0.5, 10_000u64);
    let probes: Vec<Point> = (0..8).map(|i| Point::Circle(2.0 * PI * i as f64 / 8.0)).collect();
    let cfg = SolverConfig::new(b.clone(), w.clone(), 1e-3, t_end, 131)?
        .with_record_times(&[t_end])?
        .with_probes(probes.clone())?;
    let sigma = SigmaSpec::constant(c)?;
    let u0 = FieldState::zero(&cfg);
    let finals = (0..paths)
        .into_par_iter()
        .map(|p| Ok(solve_path(&u0, &cfg, &sigma, &mut RngStream::new(1, p))?.snapshots[0].probe_values.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut worst_z: f64 = 0.0;
    for (j, x) in probes.iter().enumerate() {
        let vals: Vec<f64> = finals.iter().map(|v| v[j]).collect();
        let mean = vals.iter().sum::<f64>() / paths as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
        let exact = gaussian_covariance(t_end, t_end, x, x, c, &w, &b);
        let se = exact * (2.0 / (paths - 1) as f64).sqrt();
        worst_z = worst_z.max((var - exact).abs() / se);
    }
    Ok((worst_z <= 4.0, format!("max |Var - exact| / SE = {worst_z:.2} over 8 probes (limit 4)")))
}

fn variance_scaling() -> Outcome {
    let times = log_spaced(1e-4, 1e-2, 9);
    let mut pass = true;
    let mut parts = Vec::new();
    for (m, alpha, n_max, default_modes) in
        [(Manifold::CIRCLE, 0.25, 4001, 65), (Manifold::SPHERE2, 1.5, 251_001, 121), (Manifold::SPHERE2, 1.0, 251_001, 121)]
    {
        let rho = default_rho(m, default_modes, alpha)?;
        let (b, w) = weights(m, n_max, alpha, rho)?;
        let r = variance_scaling_check(&times, &m.reference_point(), &w, &b, 1.0)?;
        let ok = (r.slope - r.predicted_slope).abs() <= 0.05;
        pass &= ok;
        parts.push(format!(
            "{} alpha={alpha}: slope {:.4} vs {:.4}{}",
            m.kind,
            r.slope,
            r.predicted_slope,
            if r.log_corrected { " (log-corrected)" } else { "" }
        ));
        if r.log_corrected {
            let w1 = NoiseWeights::new(&b, NoiseParams { alpha, rho: 1.0 })?;
            let r1 = variance_scaling_check(&times, &m.reference_point(), &w1, &b, 1.0)?;
            parts.push(format!("[rho={rho:.3}; with rho=1 the slope is {:.4}]", r1.slope));
        }
    }
    Ok((pass, parts.join("; ")))
}

fn spatial_regularity() -> Outcome {
    let rho = default_rho(Manifold::CIRCLE, 65, 0.25)?;
    let (b, w) = weights(Manifold::CIRCLE, 200_001, 0.25, rho)?;
    let r = spatial_increment_moments(1.0, &Point::Circle(0.0), &log_spaced(1e-3, 1e-1, 9), &w, &b, 1.0)?;
    let ok = (r.slope - r.predicted_slope).abs() <= 0.15;
    Ok((ok, format!("slope {:.4}, window [{:.2}, {:.2}]", r.slope, r.predicted_slope - 0.15, r.predicted_slope + 0.15)))
}

fn temporal_regularity() -> Outcome {
    let lags = log_spaced(1e-4, 1e-2, 9);
    let mut pass = true;
    let mut parts = Vec::new();
    for (m, alpha, n_max, default_modes) in [(Manifold::CIRCLE, 0.25, 20_001, 65), (Manifold::SPHERE2, 1.5, 40_000, 121)] {
        let rho = default_rho(m, default_modes, alpha)?;
        let (b, w) = weights(m, n_max, alpha, rho)?;
        let r = temporal_increment_moments(1.0, &m.reference_point(), &lags, &w, &b, 1.0)?;
        let ok = r.slope >= r.predicted_slope - 0.1;
        pass &= ok;
        parts.push(format!("{} alpha={alpha}: slope {:.4} >= {:.2}", m.kind, r.slope, r.predicted_slope - 0.1));
    }
    Ok((pass, parts.join("; ")))
}

fn wrapped_gaussian(t: f64, delta: f64) -> f64 {
    (-60..=60)
        .map(|k| {
            let z = delta + 2.0 * PI * k as f64;
            (-z * z / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
        })
        .sum()
}

fn kernel_consistency() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (m, alpha, n_max) in [(Manifold::CIRCLE, 0.75, 200), (Manifold::SPHERE2, 1.25, 400)] {
        let cfg = KernelConfig::new(SpectralBasis::build(m, n_max)?, alpha, 2.0)?;
        let x = m.reference_point();
        let mut worst: f64 = 0.0;
        for d in log_spaced(0.05, 0.95 * m.diameter(), 20) {
            let y = m.offset_point(&x, d, 0.3);
            let a = riesz_kernel(&cfg, &x, &y)?.value().unwrap_or(f64::NAN);
            let b = riesz_kernel_time_integral(&cfg, &x, &y, 1e-9)?;
            worst = worst.max(((a - b) / a).abs());
        }
        pass &= worst < 1e-4;
        parts.push(format!("riesz {} alpha={alpha}: max rel err {worst:.2e}", m.kind));
    }
    let cfg = KernelConfig::new(SpectralBasis::build(Manifold::CIRCLE, 400)?, 0.0, 0.0)?;
    let mut worst: f64 = 0.0;
    for t in [0.05f64, 0.1, 0.5] {
        for delta in [0.0, 0.3 * t.sqrt(), t.sqrt(), 2.0 * t.sqrt()] {
            let v = heat_kernel(&cfg, t, &Point::Circle(0.0), &Point::Circle(delta))?.value;
            let exact = wrapped_gaussian(t, delta);
            worst = worst.max(((v - exact) / exact).abs());
        }
    }
    pass &= worst < 1e-6;
    parts.push(format!("heat vs wrapped Gaussian: max rel err {worst:.2e}"));
    Ok((pass, parts.join("; ")))
}

fn correlation_norm_scaling() -> Outcome {
    let rho = default_rho(Manifold::CIRCLE, 65, 0.25)?;
    let (b, w) = weights(Manifold::CIRCLE, 40_001, 0.25, rho)?;
    let net = separated_net(Manifold::CIRCLE, 0.09, 0);
    let t1s = log_spaced(1e-5, 1e-2, 7);
    let mut norms = Vec::new();
    for &t1 in &t1s {
        norms.push(correlation_norm_diagnostic(t1, &net, &w, &b, 1.0, 0.5)?.norm);
    }
    let xs: Vec<f64> = t1s.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = norms.iter().map(|n| n.ln()).collect();
    let (slope, _) = linear_fit(&xs, &ys);
    Ok((
        (slope - 0.25).abs() <= 0.15,
        format!("slope {slope:.4} vs 0.25 +/- 0.15 (net of {} points, norm {:.3} .. {:.3})", net.len(), norms[0], norms[6]),
    ))
}

fn small_ball_bracket() -> Outcome {
    let rho = default_rho(Manifold::CIRCLE, 65, 0.25)?;
    let (b, w) = weights(Manifold::CIRCLE, 65, 0.25, rho)?;
    let setup = SmallBallSetup { basis: b, weights: w, dt: 1e-2, t_end: 1.0, grid_resolution: 131, c0_constant: 1.0, seed: 1 };
    let r = small_ball_estimate(
        &setup,
        &SigmaSpec::constant(0.2)?,
        &[0.8, 0.6, 0.45, 0.34],
        100_000,
        SamplingMode::GaussianExact,
    )?;
    let p: Vec<String> = r.estimates.iter().map(|e| format!("{}:{:.4}", e.eps, e.p_hat)).collect();
    let Some(fit) = &r.fit else {
        return Ok((false, format!("fit failed: {:?}; p_hat {}", r.fit_error, p.join(" "))));
    };
    let ok = fit.theta >= 10.0 / 3.0 - 1.0 && fit.theta <= 7.0 && r.is_monotone();
    Ok((
        ok,
        format!(
            "theta {:.3} +/- {:.3} in [{:.3}, 7]; monotone {}; p_hat {}",
            fit.theta,
            fit.stderr,
            10.0 / 3.0 - 1.0,
            r.is_monotone(),
            p.join(" ")
        ),
    ))
}

fn event_sanity() -> Outcome {
    let rho = default_rho(Manifold::CIRCLE, 65, 0.25)?;
    let (b, w) = weights(Manifold::CIRCLE, 65, 0.25, rho)?;
    let regime = RegimeParams::new(0.25, 1)?;
    let eps: f64 = 0.34;
    let c0 = c0_bound(eps, 0.25, 1, 1.0)?.min(1.0);
    let t1 = c0 * eps.powi(4);
    let net = separated_net(Manifold::CIRCLE, eps * eps, 0);
    let table = b.tabulate(&net.points);
    let tr = OuTransition::new(t1, 0.2, &w, &b);
    let traces = (0..1000u64)
        .into_par_iter()
        .map(|p| evaluate_events(&record_gaussian_path(&tr, &table, 6, 7, p), &net, &Point::Circle(0.0), eps, c0, 10.0, &regime))
        .collect::<Result<Vec<_>>>()?;
    let freqs = conditional_frequencies(&traces, 5);
    let below = freqs.iter().all(|f| f.given > 0 && f.p < 1.0 - 1e-3);
    let stable = freqs
        .iter()
        .all(|a| freqs.iter().all(|b| (a.p - b.p).abs() <= 2.0 * (a.se * a.se + b.se * b.se).sqrt()));
    let listed: Vec<String> = freqs.iter().map(|f| format!("n={}: {:.4} ({}/{})", f.n, f.p, f.hits, f.given)).collect();
    Ok((below && stable, format!("below bound {below}, stable {stable}; {}", listed.join(", "))))
}

fn run_cli(dir: &Path, workers: &str) -> std::io::Result<bool> {
    let bin = env!("CARGO_BIN_EXE_mshe");
    let mut ok = true;
    for args in [
        vec!["simulate", "--set", "n_paths=4", "--set", "T=0.1", "--set", "record_times=0.05,0.1"],
        vec!["smallball", "--set", "n_paths=300", "--set", "eps=0.8,0.6,0.45"],
    ] {
        let status = Command::new(bin)
            .current_dir(dir)
            .args(&args)
            .args(["--seed", "11", "--out", "o", "--workers", workers])
            .output()?
            .status;
        ok &= status.success();
    }
    Ok(ok)
}

fn determinism() -> Outcome {
    let mut listings = Vec::new();
    for workers in ["1", "4"] {
        let dir = tempfile::tempdir()?;
        if !run_cli(dir.path(), workers)? {
            return Ok((false, format!("cli run with {workers} workers failed")));
        }
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path().join("o"))?
            .map(|e| {
                let e = e?;
                Ok((e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path())?))
            })
            .collect::<std::io::Result<_>>()?;
        files.sort();
        listings.push(files);
    }
    let names: Vec<&str> = listings[0].iter().map(|(n, _)| n.as_str()).collect();
    Ok((listings[0] == listings[1], format!("compared {} files across 1 and 4 workers: {}", names.len(), names.join(", "))))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 gaussian oracle equivalence", oracle_equivalence),
        ("2 variance scaling", variance_scaling),
        ("3 spatial regularity", spatial_regularity),
        ("4 temporal regularity", temporal_regularity),
        ("5 kernel consistency", kernel_consistency),
        ("6 correlation-norm scaling", correlation_norm_scaling),
        ("7 small-ball exponent bracket", small_ball_bracket),
        ("8 event machinery", event_sanity),
        ("9 determinism", determinism),
    ];
    let filter = std::env::args().nth(1).filter(|a| !a.starts_with('-'));
    let mut passed = 0;
    for (name, run) in criteria {
        if filter.as_deref().is_some_and(|f| !name.starts_with(f)) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        passed += ok as usize;
        println!("criterion {name}: {} ({:.1}s) {detail}", if ok { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {passed} criteria passed");
}

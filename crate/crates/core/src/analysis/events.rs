use serde::{Deserialize, Serialize};

use super::RegimeParams;
use crate::error::{Error, Result};
use crate::geometry::{nested_sets, shell_count, BasisTable, Point, PointSet};
use crate::noise::RngStream;
use crate::solver::OuTransition;

/// Field values at a fixed point set, sampled at increasing times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordedPath {
    pub times: Vec<f64>,
    /// `values[i][k]` is u(times[i], x_k).
    pub values: Vec<Vec<f64>>,
}

/// F_n and E_n outcomes along one path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventTrace {
    pub t1: f64,
    /// √f(t₁).
    pub f_threshold: f64,
    /// 𝒞₃t₁^{h/4}, the bound on [t_n, t_{n+1}).
    pub e_threshold: f64,
    /// 𝒞₃t₁^{h/4}/3, the bound at t_{n+1}.
    pub e_end_threshold: f64,
    /// `f[n]` for n = 0..=N.
    pub f: Vec<bool>,
    /// `e[n]` for n = 0..N.
    pub e: Vec<bool>,
}

/// Samples u at `table`'s points every `record_step` up to `steps` steps,
/// starting from u ≡ 0, with exact Gaussian transitions.
pub fn record_gaussian_path(
    tr: &OuTransition,
    table: &BasisTable,
    steps: usize,
    seed: u64,
    path: u64,
) -> RecordedPath {
    let mut rng = RngStream::new(seed, path).next_block();
    let mut coeffs = vec![0.0; table.n_modes];
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut snap = vec![0.0; table.n_points];
    times.push(0.0);
    values.push(snap.clone());
    for i in 1..=steps {
        tr.step(&mut coeffs, &mut rng);
        table.synthesize(&coeffs, &mut snap);
        times.push(i as f64 * tr.tau);
        values.push(snap.clone());
    }
    RecordedPath { times, values }
}

/// Evaluates F_n = {|u(t_n,x)| ≤ √f(t₁), x ∈ R_{n,J}} and
/// E_n = {|u(t_{n+1},x)| ≤ 𝒞₃t₁^{h/4}/3, sup_{[t_n,t_{n+1})}|u| ≤ 𝒞₃t₁^{h/4}}
/// with t_n = n·c₀ε⁴, where R_{n,J} is the full net.
pub fn evaluate_events(
    path: &RecordedPath,
    net: &PointSet,
    x0: &Point,
    eps: f64,
    c0: f64,
    c3: f64,
    regime: &RegimeParams,
) -> Result<EventTrace> {
    if path.times.len() != path.values.len() || path.times.is_empty() {
        return Err(Error::Precondition("recorded times and values disagree in length".into()));
    }
    if path.values.iter().any(|v| v.len() != net.len()) {
        return Err(Error::Precondition("recorded values do not match the net size".into()));
    }
    if !(c3 > 0.0) {
        return Err(Error::Domain(format!("C3 must be positive, got {c3}")));
    }
    let t1 = c0 * eps.powi(4);
    let f_threshold = regime.f(t1)?.sqrt();
    let e_threshold = c3 * t1.powf(regime.h / 4.0);
    let e_end_threshold = e_threshold / 3.0;
    let shells = shell_count(net.manifold, eps);
    let members = nested_sets(net, x0, eps, shells).pop().unwrap_or_default();

    let tol = 1e-9 * t1.max(1e-300);
    let t_last = *path.times.last().unwrap();
    let intervals = ((t_last + tol) / t1).floor() as usize;
    // index of t_n in the recording
    let mut marks = Vec::with_capacity(intervals + 1);
    let mut i = 0;
    for n in 0..=intervals {
        let target = n as f64 * t1;
        while i < path.times.len() && path.times[i] < target - tol {
            i += 1;
        }
        if i == path.times.len() || (path.times[i] - target).abs() > tol {
            return Err(Error::Precondition(format!(
                "recording has no sample at t_{n} = {target}; it must include every multiple of t1 = {t1}"
            )));
        }
        marks.push(i);
    }

    let f = marks
        .iter()
        .map(|&i| members.iter().all(|&k| path.values[i][k].abs() <= f_threshold))
        .collect();
    let e = marks
        .windows(2)
        .map(|w| {
            let within = path.values[w[0]..w[1]].iter().flatten().all(|v| v.abs() <= e_threshold);
            within && path.values[w[1]].iter().all(|v| v.abs() <= e_end_threshold)
        })
        .collect();
    Ok(EventTrace { t1, f_threshold, e_threshold, e_end_threshold, f, e })
}

/// Empirical P(F_n | F_0 ∩ … ∩ F_{n−1}) with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalFrequency {
    pub n: usize,
    pub given: u64,
    pub hits: u64,
    pub p: f64,
    pub se: f64,
}

pub fn conditional_frequencies(traces: &[EventTrace], n_last: usize) -> Vec<ConditionalFrequency> {
    (1..=n_last)
        .map(|n| {
            let mut given = 0u64;
            let mut hits = 0u64;
            for tr in traces.iter().filter(|t| t.f.len() > n) {
                if tr.f[..n].iter().all(|&b| b) {
                    given += 1;
                    hits += tr.f[n] as u64;
                }
            }
            let p = if given > 0 { hits as f64 / given as f64 } else { f64::NAN };
            let se = if given > 0 { (p * (1.0 - p) / given as f64).sqrt() } else { f64::NAN };
            ConditionalFrequency { n, given, hits, p, se }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{separated_net, Manifold};

    fn setup() -> (PointSet, RegimeParams) {
        (separated_net(Manifold::CIRCLE, 0.5, 0), RegimeParams::new(0.25, 1).unwrap())
    }

    fn flat_path(net: &PointSet, dt: f64, steps: usize, v: f64) -> RecordedPath {
        RecordedPath {
            times: (0..=steps).map(|i| i as f64 * dt).collect(),
            values: vec![vec![v; net.len()]; steps + 1],
        }
    }

    #[test]
    fn quiet_path_passes_every_event() {
        let (net, r) = setup();
        let eps = 0.5f64;
        let t1 = eps.powi(4);
        let path = flat_path(&net, t1 / 4.0, 20, 0.0);
        let tr = evaluate_events(&path, &net, &Point::Circle(0.0), eps, 1.0, 10.0, &r).unwrap();
        assert_eq!(tr.f.len(), 6);
        assert_eq!(tr.e.len(), 5);
        assert!(tr.f.iter().chain(&tr.e).all(|&b| b));
        assert!((tr.f_threshold - t1.powf(0.375)).abs() < 1e-12);
        assert!((tr.e_threshold - 10.0 * t1.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn single_spike_breaks_e_n() {
        let (net, r) = setup();
        let eps = 0.5f64;
        let t1 = eps.powi(4);
        let mut path = flat_path(&net, t1 / 4.0, 20, 0.0);
        let thr = 10.0 * t1.powf(0.25);
        path.values[9][3] = 1.01 * thr;
        let tr = evaluate_events(&path, &net, &Point::Circle(0.0), eps, 1.0, 10.0, &r).unwrap();
        assert_eq!(tr.e, vec![true, true, false, true, true]);
        // index 9 lies strictly inside [t_2, t_3), so F is untouched at the marks
        assert!(tr.f.iter().all(|&b| b));
    }

    #[test]
    fn endpoint_third_threshold() {
        let (net, r) = setup();
        let eps = 0.5f64;
        let t1 = eps.powi(4);
        let mut path = flat_path(&net, t1 / 2.0, 6, 0.0);
        path.values[2][0] = 0.5 * 10.0 * t1.powf(0.25);
        let tr = evaluate_events(&path, &net, &Point::Circle(0.0), eps, 1.0, 10.0, &r).unwrap();
        assert_eq!(tr.e, vec![false, true, true]);
        assert!(!tr.f[1]);
    }

    #[test]
    fn coarse_recording_is_rejected() {
        let (net, r) = setup();
        let eps = 0.5f64;
        let path = flat_path(&net, 1.5 * eps.powi(4), 4, 0.0);
        let err = evaluate_events(&path, &net, &Point::Circle(0.0), eps, 1.0, 10.0, &r);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn conditional_counts() {
        let mk = |f: Vec<bool>| EventTrace {
            t1: 1.0,
            f_threshold: 1.0,
            e_threshold: 1.0,
            e_end_threshold: 1.0,
            f,
            e: vec![],
        };
        let traces = vec![
            mk(vec![true, true, false]),
            mk(vec![true, false, true]),
            mk(vec![true, true, true]),
            mk(vec![false, true, true]),
        ];
        let c = conditional_frequencies(&traces, 2);
        assert_eq!((c[0].given, c[0].hits), (3, 2));
        assert_eq!((c[1].given, c[1].hits), (2, 1));
    }
}

//! Colored space-time noise: covariance weights, the ⟨·,·⟩_{α,ρ} form, and
//! reproducible sampling of per-mode increments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BasisTable, Manifold, Quadrature, SpectralBasis};
use crate::kernels::{riesz_kernel, KernelConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub alpha: f64,
    pub rho: f64,
}

/// Per-mode variance rates: ρ for the constant mode, λₙ^{−α} for the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseWeights {
    params: NoiseParams,
    manifold: Manifold,
    weights: Vec<f64>,
}

impl NoiseWeights {
    pub fn new(basis: &SpectralBasis, params: NoiseParams) -> Result<Self> {
        let NoiseParams { alpha, rho } = params;
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::Domain(format!("alpha must be finite and nonnegative, got {alpha}")));
        }
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::Domain(format!("rho must be finite and nonnegative, got {rho}")));
        }
        let weights = basis
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(n, &lam)| if n == 0 { rho } else { lam.powf(-alpha) })
            .collect();
        Ok(NoiseWeights { params, manifold: basis.manifold(), weights })
    }

    pub fn params(&self) -> NoiseParams {
        self.params
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    pub fn rho(&self) -> f64 {
        self.params.rho
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weyl-law estimate of Σ_{n>N_max} wₙ sup φₙ², the pointwise variance
    /// rate missing from the truncated noise; infinite for α ≤ d/2.
    pub fn neglected_variance(&self, basis: &SpectralBasis) -> f64 {
        basis.power_tail_estimate(self.params.alpha)
    }
}

/// Default ρ = m₀(1 + |min_y G_α(x₀, y)|), with the minimum taken over a
/// quadrature grid away from the reference point.
pub fn auto_rho(basis: &SpectralBasis, alpha: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::Domain("automatic rho needs alpha > 0".into()));
    }
    let m = basis.manifold();
    let cfg = KernelConfig::new(basis.clone(), alpha, 0.0)?;
    let x0 = m.reference_point();
    let grid = Quadrature::new(m, 4 * basis.bandwidth().max(16));
    let mut min = f64::INFINITY;
    for y in &grid.nodes {
        if let Some(g) = riesz_kernel(&cfg, &x0, y)?.value() {
            if m.distance_unchecked(&x0, y) > 0.0 {
                min = min.min(g);
            }
        }
    }
    Ok(m.volume() * (1.0 + min.min(0.0).abs()))
}

/// ρa₀b₀ + Σ_{n≥1} aₙbₙ/λₙ^α.
pub fn inner_product_alpha_rho(a: &[f64], b: &[f64], weights: &NoiseWeights) -> Result<f64> {
    if a.len() != weights.len() || b.len() != weights.len() {
        return Err(Error::Domain(format!(
            "coefficient lengths {} and {} do not match the {}-mode truncation",
            a.len(),
            b.len(),
            weights.len()
        )));
    }
    Ok(weights.weights.iter().zip(a.iter().zip(b)).map(|(w, (a, b))| w * a * b).sum())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BilinearReport {
    pub spectral: f64,
    pub quadrature: f64,
    pub relative_error: f64,
    pub passes: bool,
}

/// Compares ⟨φ,ψ⟩_{α,ρ} from spectral coefficients against the double
/// quadrature ∬ φ(x) G_{α,ρ}(x,y) ψ(y) dx dy. Both functions are sampled on
/// the quadrature nodes.
pub fn covariance_bilinear_check(
    weights: &NoiseWeights,
    basis: &SpectralBasis,
    quad: &Quadrature,
    phi: &[f64],
    psi: &[f64],
) -> Result<BilinearReport> {
    if weights.alpha() <= 0.0 {
        return Err(Error::Domain("kernel representation needs alpha > 0".into()));
    }
    if phi.len() != quad.len() || psi.len() != quad.len() {
        return Err(Error::Domain("grid functions must be sampled on the quadrature nodes".into()));
    }
    let spectral =
        inner_product_alpha_rho(&basis.project(quad, phi), &basis.project(quad, psi), weights)?;
    let table = basis.tabulate(&quad.nodes);
    let w = weights.weights();
    let weighted: Vec<f64> = (0..quad.len())
        .map(|j| quad.weights[j] * psi[j])
        .collect();
    let mut scaled_row = vec![0.0; w.len()];
    let mut quadrature = 0.0;
    for i in 0..quad.len() {
        let ci = quad.weights[i] * phi[i];
        if ci == 0.0 {
            continue;
        }
        for ((s, wn), p) in scaled_row.iter_mut().zip(w).zip(table.row(i)) {
            *s = wn * p;
        }
        let inner: f64 = (0..quad.len())
            .map(|j| weighted[j] * crate::geometry::basis_dot(&scaled_row, table.row(j)))
            .sum();
        quadrature += ci * inner;
    }
    let scale = spectral.abs().max(quadrature.abs());
    let relative_error = if scale == 0.0 { 0.0 } else { (spectral - quadrature).abs() / scale };
    let passes = relative_error < 1e-5 || (spectral - quadrature).abs() < 1e-12;
    Ok(BilinearReport { spectral, quadrature, relative_error, passes })
}

/// Counter-based Gaussian source: the draws for step `k` of stream `s` under
/// seed `seed` depend on nothing else.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream, counter: 0 }
    }

    pub fn at(seed: u64, stream: u64, counter: u64) -> Self {
        RngStream { seed, stream, counter }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Generator positioned at the current counter; advances the counter.
    /// Each counter value owns 2³² words of the ChaCha stream.
    pub fn next_block(&mut self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos((self.counter as u128) << 32);
        self.counter += 1;
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseIncrement {
    pub dt: f64,
    /// Per-mode draws with variance wₙ·dt.
    pub xi: Vec<f64>,
    pub stream: u64,
    pub step: u64,
}

/// Independent N(0, wₙ·dt) per mode.
pub fn sample_increment(weights: &NoiseWeights, dt: f64, stream: &mut RngStream) -> Result<NoiseIncrement> {
    let (stream_id, step) = (stream.stream(), stream.counter());
    let mut xi = Vec::with_capacity(weights.len());
    sample_increment_into(weights, dt, stream, &mut xi)?;
    Ok(NoiseIncrement { dt, xi, stream: stream_id, step })
}

/// Allocation-free form of [`sample_increment`].
pub fn sample_increment_into(
    weights: &NoiseWeights,
    dt: f64,
    stream: &mut RngStream,
    xi: &mut Vec<f64>,
) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("noise increment needs dt > 0, got {dt}")));
    }
    let mut rng = stream.next_block();
    xi.clear();
    xi.extend(weights.weights().iter().map(|w| {
        let z: f64 = StandardNormal.sample(&mut rng);
        (w * dt).sqrt() * z
    }));
    Ok(())
}

/// dW(x) = Σ xiₙ φₙ(x) at every tabulated point.
pub fn increment_field(inc: &NoiseIncrement, table: &BasisTable, out: &mut [f64]) {
    table.synthesize(&inc.xi, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use proptest::prelude::*;

    fn circle(n_max: usize, alpha: f64, rho: f64) -> (SpectralBasis, NoiseWeights) {
        let b = SpectralBasis::build(Manifold::CIRCLE, n_max).unwrap();
        let w = NoiseWeights::new(&b, NoiseParams { alpha, rho }).unwrap();
        (b, w)
    }

    fn unit(n: usize, len: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        v[n] = 1.0;
        v
    }

    #[test]
    fn weights_follow_the_spectrum() {
        let (b, w) = circle(6, 0.5, 2.0);
        assert_eq!(w.weights()[0], 2.0);
        for n in 1..b.len() {
            assert_eq!(w.weights()[n], b.eigenvalues()[n].powf(-0.5));
        }
        for pair in w.weights()[1..].windows(2) {
            assert!(pair[1] <= pair[0] && pair[1] > 0.0);
        }
        let (_, w) = circle(6, 0.5, 0.0);
        assert_eq!(w.weights()[0], 0.0);
    }

    #[test]
    fn inner_product_examples() {
        let (b, w) = circle(8, 0.75, 3.0);
        let e1 = unit(1, b.len());
        let e0 = unit(0, b.len());
        assert_eq!(inner_product_alpha_rho(&e1, &e1, &w).unwrap(), 1.0);
        assert_eq!(inner_product_alpha_rho(&e0, &e0, &w).unwrap(), 3.0);
        let sb = SpectralBasis::build(Manifold::SPHERE2, 8).unwrap();
        let ws = NoiseWeights::new(&sb, NoiseParams { alpha: 0.75, rho: 3.0 }).unwrap();
        let e1 = unit(1, sb.len());
        assert!((inner_product_alpha_rho(&e1, &e1, &ws).unwrap() - 2f64.powf(-0.75)).abs() < 1e-15);

        let (_, white) = circle(8, 0.0, 1.0);
        let a: Vec<f64> = (0..9).map(|i| i as f64 - 3.0).collect();
        let c: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
        let plain: f64 = a.iter().zip(&c).map(|(x, y)| x * y).sum();
        assert!((inner_product_alpha_rho(&a, &c, &white).unwrap() - plain).abs() < 1e-14);
    }

    #[test]
    fn mismatched_truncation_is_rejected() {
        let (_, w) = circle(8, 0.75, 3.0);
        assert!(matches!(
            inner_product_alpha_rho(&[1.0; 5], &[1.0; 9], &w),
            Err(Error::Domain(_))
        ));
    }

    proptest! {
        #[test]
        fn norm_is_nonincreasing_in_alpha(
            coeffs in prop::collection::vec(-5.0f64..5.0, 41),
            a in 0.0f64..2.0,
            gap in 0.0f64..2.0,
        ) {
            let b = SpectralBasis::build(Manifold::TORUS2, 40).unwrap();
            let lo = NoiseWeights::new(&b, NoiseParams { alpha: a, rho: 1.0 }).unwrap();
            let hi = NoiseWeights::new(&b, NoiseParams { alpha: a + gap, rho: 1.0 }).unwrap();
            let n_lo = inner_product_alpha_rho(&coeffs, &coeffs, &lo).unwrap();
            let n_hi = inner_product_alpha_rho(&coeffs, &coeffs, &hi).unwrap();
            prop_assert!(n_hi <= n_lo * (1.0 + 1e-14));
        }
    }

    #[test]
    fn bilinear_form_matches_double_quadrature() {
        let (b, w) = circle(24, 0.75, 1.7);
        let q = Quadrature::new(Manifold::CIRCLE, 64);
        let const_fn = vec![1.0 / (2.0 * std::f64::consts::PI).sqrt(); q.len()];
        let r = covariance_bilinear_check(&w, &b, &q, &const_fn, &const_fn).unwrap();
        assert!((r.spectral - 1.7).abs() < 1e-12 && (r.quadrature - 1.7).abs() < 1e-10);

        let phi1: Vec<f64> = q.nodes.iter().map(|p| b.evaluate(1, p)).collect();
        let phi2: Vec<f64> = q.nodes.iter().map(|p| b.evaluate(2, p)).collect();
        let r = covariance_bilinear_check(&w, &b, &q, &phi1, &phi2).unwrap();
        assert!(r.spectral.abs() < 1e-12 && r.quadrature.abs() < 1e-10 && r.passes);

        let g = |p: &Point, s: f64| match *p {
            Point::Circle(a) => 0.4 + (a + s).cos() - 0.3 * (4.0 * a).sin() + 0.8 * (7.0 * a - s).cos(),
            _ => unreachable!(),
        };
        let f: Vec<f64> = q.nodes.iter().map(|p| g(p, 0.0)).collect();
        let h: Vec<f64> = q.nodes.iter().map(|p| g(p, 1.3)).collect();
        let r = covariance_bilinear_check(&w, &b, &q, &f, &h).unwrap();
        assert!(r.passes, "{r:?}");
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let (_, w) = circle(16, 0.5, 1.0);
        let mut s1 = RngStream::new(42, 7);
        let mut s2 = RngStream::new(42, 7);
        let a = sample_increment(&w, 0.01, &mut s1).unwrap();
        let b = sample_increment(&w, 0.01, &mut s2).unwrap();
        assert_eq!(a, b);
        assert_eq!(s1.counter(), 1);
        let next = sample_increment(&w, 0.01, &mut s1).unwrap();
        assert_ne!(next.xi, a.xi);
        // jumping straight to step 1 reproduces the same draws
        let jumped = sample_increment(&w, 0.01, &mut RngStream::at(42, 7, 1)).unwrap();
        assert_eq!(jumped.xi, next.xi);
        let other = sample_increment(&w, 0.01, &mut RngStream::new(42, 8)).unwrap();
        assert_ne!(other.xi, a.xi);
        assert!(sample_increment(&w, 0.0, &mut s1).is_err());
    }

    fn moments(samples: &[Vec<f64>], i: usize, j: usize) -> (f64, f64) {
        let n = samples.len() as f64;
        let prods: Vec<f64> = samples.iter().map(|s| s[i] * s[j]).collect();
        let mean = prods.iter().sum::<f64>() / n;
        let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn increment_variances_and_independence() {
        let (_, w) = circle(8, 0.5, 2.0);
        let dt = 0.01;
        for scale in [1.0, 2.0] {
            let mut stream = RngStream::new(3, 0);
            let samples: Vec<Vec<f64>> = (0..100_000)
                .map(|_| sample_increment(&w, scale * dt, &mut stream).unwrap().xi)
                .collect();
            for n in [0, 1, 4, 8] {
                let (m, se) = moments(&samples, n, n);
                assert!((m - w.weights()[n] * scale * dt).abs() < 4.0 * se, "mode {n}");
            }
            for (i, j) in [(0, 1), (1, 2), (3, 8)] {
                let (m, se) = moments(&samples, i, j);
                assert!(m.abs() < 4.0 * se);
            }
        }
    }

    #[test]
    fn increment_fields() {
        let (b, _) = circle(8, 0.5, 2.0);
        let q = Quadrature::new(Manifold::CIRCLE, 32);
        let table = b.tabulate(&q.nodes);
        let mut out = vec![1.0; q.len()];
        let zero = NoiseIncrement { dt: 0.1, xi: vec![0.0; b.len()], stream: 0, step: 0 };
        increment_field(&zero, &table, &mut out);
        assert!(out.iter().all(|v| *v == 0.0));
        let one = NoiseIncrement { dt: 0.1, xi: unit(1, b.len()), stream: 0, step: 0 };
        increment_field(&one, &table, &mut out);
        for (v, p) in out.iter().zip(&q.nodes) {
            assert!((v - b.evaluate(1, p)).abs() < 1e-15);
        }
    }

    #[test]
    fn field_covariance_matches_kernel() {
        let (b, w) = circle(32, 0.75, 2.0);
        let pts = [Point::Circle(0.0), Point::Circle(0.0), Point::Circle(0.9), Point::Circle(2.5)];
        let table = b.tabulate(&pts);
        let dt = 0.02;
        let mut stream = RngStream::new(9, 0);
        let mut field = vec![0.0; pts.len()];
        let fields: Vec<Vec<f64>> = (0..100_000)
            .map(|_| {
                let inc = sample_increment(&w, dt, &mut stream).unwrap();
                increment_field(&inc, &table, &mut field);
                field.clone()
            })
            .collect();
        let cfg = KernelConfig::new(b.clone(), 0.75, 2.0).unwrap();
        for (i, j) in [(0, 1), (0, 2), (0, 3)] {
            let g = riesz_kernel(&cfg, &pts[i], &pts[j]).unwrap().value().unwrap();
            let (m, se) = moments(&fields, i, j);
            assert!((m - dt * g).abs() < 4.0 * se, "({i},{j}) {m} vs {}", dt * g);
        }
    }

    #[test]
    fn discrete_isonormality() {
        let (b, w) = circle(16, 0.4, 1.5);
        let f: Vec<f64> = (0..b.len()).map(|n| 1.0 / (1.0 + n as f64)).collect();
        let g: Vec<f64> = (0..b.len()).map(|n| (n as f64).cos()).collect();
        let dt = 0.05;
        let mut stream = RngStream::new(1, 3);
        let pairs: Vec<Vec<f64>> = (0..100_000)
            .map(|_| {
                let xi = sample_increment(&w, dt, &mut stream).unwrap().xi;
                let wf: f64 = xi.iter().zip(&f).map(|(a, b)| a * b).sum();
                let wg: f64 = xi.iter().zip(&g).map(|(a, b)| a * b).sum();
                vec![wf, wg]
            })
            .collect();
        let (m, se) = moments(&pairs, 0, 1);
        let expected = inner_product_alpha_rho(&f, &g, &w).unwrap() * dt;
        assert!((m - expected).abs() < 4.0 * se);
    }

    #[test]
    fn auto_rho_makes_the_kernel_nonnegative() {
        let b = SpectralBasis::build(Manifold::CIRCLE, 256).unwrap();
        let rho = auto_rho(&b, 0.25).unwrap();
        assert!(rho > 2.0 * std::f64::consts::PI);
        let cfg = KernelConfig::new(b, 0.25, rho).unwrap();
        for i in 1..200 {
            let y = Point::Circle(i as f64 * std::f64::consts::PI / 200.0 + 0.01);
            let g = riesz_kernel(&cfg, &Point::Circle(0.0), &y).unwrap().value().unwrap();
            assert!(g > 0.0);
        }
        assert!(auto_rho(&SpectralBasis::build(Manifold::CIRCLE, 8).unwrap(), 0.0).is_err());
    }

    #[test]
    fn neglected_variance_is_reported() {
        let (b, w) = circle(64, 1.0, 1.0);
        let v = w.neglected_variance(&b);
        assert!(v > 0.0 && v < 0.01);
        let (b, w) = circle(64, 0.25, 1.0);
        assert!(w.neglected_variance(&b).is_infinite());
    }
}

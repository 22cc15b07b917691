use std::f64::consts::PI;

use statrs::function::erf::erfc;

use super::harmonics::real_spherical_harmonics;
use super::{Manifold, ManifoldKind, Point, Quadrature};
use crate::error::{Error, Result};

/// Which closed-form eigenfunction a mode is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeLabel {
    Constant,
    /// cos(kθ)/√π or sin(kθ)/√π.
    Circle { k: u32, sine: bool },
    /// √2·cos(k·x)/(2π) or √2·sin(k·x)/(2π), k in the upper half-plane.
    Torus { k1: i32, k2: i32, sine: bool },
    /// Real spherical harmonic of degree l and order m.
    Sphere { l: u32, m: i32 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    pub index: usize,
    pub eigenvalue: f64,
    pub label: ModeLabel,
}

/// Truncated real eigenbasis of −Δ_M, ordered by eigenvalue with ties broken
/// lexicographically on the mode label.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    manifold: Manifold,
    modes: Vec<Mode>,
    eigenvalues: Vec<f64>,
    lmax: usize,
}

impl SpectralBasis {
    /// The first `n_max + 1` modes, constant mode included.
    pub fn build(manifold: Manifold, n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::Domain("basis truncation must be at least 1".into()));
        }
        let count = n_max + 1;
        let mut labels = vec![ModeLabel::Constant];
        match manifold.kind {
            ManifoldKind::Circle => {
                let mut k = 1u32;
                while labels.len() < count {
                    labels.push(ModeLabel::Circle { k, sine: false });
                    labels.push(ModeLabel::Circle { k, sine: true });
                    k += 1;
                }
            }
            ManifoldKind::Torus2 => {
                let mut radius = ((count as f64) / PI).sqrt().ceil() as i32 + 2;
                loop {
                    let mut cands = Vec::new();
                    for k1 in 0..=radius {
                        for k2 in -radius..=radius {
                            if (k1 == 0 && k2 <= 0) || k1 * k1 + k2 * k2 > radius * radius {
                                continue;
                            }
                            for sine in [false, true] {
                                cands.push((k1 * k1 + k2 * k2, k1, k2, sine));
                            }
                        }
                    }
                    cands.sort();
                    // every mode below radius² is present, so the prefix is exact
                    let complete = cands.iter().filter(|c| c.0 < radius * radius).count();
                    if complete >= count - 1 {
                        labels.extend(cands.into_iter().take(count - 1).map(|(_, k1, k2, sine)| {
                            ModeLabel::Torus { k1, k2, sine }
                        }));
                        break;
                    }
                    radius *= 2;
                }
            }
            ManifoldKind::Sphere2 => {
                let mut l = 1i32;
                'outer: loop {
                    for m in -l..=l {
                        if labels.len() >= count {
                            break 'outer;
                        }
                        labels.push(ModeLabel::Sphere { l: l as u32, m });
                    }
                    l += 1;
                }
            }
        }
        labels.truncate(count);
        let modes: Vec<Mode> = labels
            .into_iter()
            .enumerate()
            .map(|(index, label)| Mode { index, eigenvalue: eigenvalue_of(&label), label })
            .collect();
        let lmax = modes
            .iter()
            .map(|m| match m.label {
                ModeLabel::Sphere { l, .. } => l as usize,
                _ => 0,
            })
            .max()
            .unwrap_or(0);
        let eigenvalues = modes.iter().map(|m| m.eigenvalue).collect();
        Ok(SpectralBasis { manifold, modes, eigenvalues, lmax })
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of retained modes (N_max + 1).
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Truncation index N_max.
    pub fn n_max(&self) -> usize {
        self.modes.len() - 1
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    /// Smallest nonzero eigenvalue.
    pub fn spectral_gap(&self) -> f64 {
        self.eigenvalues[1]
    }

    /// Highest frequency present: max |k| on flat manifolds, max degree on the sphere.
    pub fn bandwidth(&self) -> usize {
        self.modes
            .iter()
            .map(|m| match m.label {
                ModeLabel::Constant => 0,
                ModeLabel::Circle { k, .. } => k as usize,
                ModeLabel::Torus { k1, k2, .. } => k1.unsigned_abs().max(k2.unsigned_abs()) as usize,
                ModeLabel::Sphere { l, .. } => l as usize,
            })
            .max()
            .unwrap_or(0)
    }

    /// Evaluate every retained eigenfunction at `p`.
    pub fn evaluate_all(&self, p: &Point, out: &mut Vec<f64>) {
        out.clear();
        match (self.manifold.kind, p) {
            (ManifoldKind::Sphere2, Point::Sphere(_)) => {
                let (theta, phi) = p.spherical_angles().unwrap();
                real_spherical_harmonics(self.lmax, theta, phi, out);
                // degree-major ordering coincides with the mode index
                out.truncate(self.modes.len());
            }
            _ => out.extend(self.modes.iter().map(|m| eval_flat(&m.label, p))),
        }
    }

    pub fn evaluate(&self, n: usize, p: &Point) -> f64 {
        match self.modes[n].label {
            ModeLabel::Sphere { l, m } => {
                let (theta, phi) = p.spherical_angles().unwrap();
                let mut y = Vec::new();
                real_spherical_harmonics(l as usize, theta, phi, &mut y);
                y[((l * l + l) as i64 + m as i64) as usize]
            }
            ref label => eval_flat(label, p),
        }
    }

    /// Row-major table of all modes at the given points.
    pub fn tabulate(&self, points: &[Point]) -> BasisTable {
        let n_modes = self.len();
        let mut values = Vec::with_capacity(points.len() * n_modes);
        let mut row = Vec::with_capacity(n_modes);
        for p in points {
            self.evaluate_all(p, &mut row);
            values.extend_from_slice(&row);
        }
        BasisTable { n_points: points.len(), n_modes, values }
    }

    /// Spectral coefficients ⟨g, φₙ⟩ of a function sampled on quadrature nodes.
    pub fn project(&self, quad: &Quadrature, values: &[f64]) -> Vec<f64> {
        let table = self.tabulate(&quad.nodes);
        table.project(&quad.weights, values)
    }

    /// Weyl-law estimate of Σ_{λₙ > λ_N} e^{−rate·λₙ} sup φₙ².
    pub fn heat_tail_estimate(&self, rate: f64) -> f64 {
        let lam = self.largest_eigenvalue();
        match self.manifold.kind {
            // density of Σ φₙ² in λ is 1/(2π√λ) on the circle
            ManifoldKind::Circle => {
                (1.0 / (2.0 * PI)) * (PI / rate).sqrt() * erfc((lam * rate).sqrt())
            }
            // and 1/(4π) on both surfaces
            ManifoldKind::Torus2 | ManifoldKind::Sphere2 => (-rate * lam).exp() / (4.0 * PI * rate),
        }
    }

    /// Weyl-law estimate of Σ_{λₙ > λ_N} λₙ^{−p} sup φₙ²; infinite when divergent.
    pub fn power_tail_estimate(&self, p: f64) -> f64 {
        let lam = self.largest_eigenvalue();
        match self.manifold.kind {
            ManifoldKind::Circle => {
                if p <= 0.5 {
                    f64::INFINITY
                } else {
                    lam.powf(0.5 - p) / (2.0 * PI * (p - 0.5))
                }
            }
            ManifoldKind::Torus2 | ManifoldKind::Sphere2 => {
                if p <= 1.0 {
                    f64::INFINITY
                } else {
                    lam.powf(1.0 - p) / (4.0 * PI * (p - 1.0))
                }
            }
        }
    }
}

fn eigenvalue_of(label: &ModeLabel) -> f64 {
    match *label {
        ModeLabel::Constant => 0.0,
        ModeLabel::Circle { k, .. } => (k as f64).powi(2),
        ModeLabel::Torus { k1, k2, .. } => (k1 * k1 + k2 * k2) as f64,
        ModeLabel::Sphere { l, .. } => (l * (l + 1)) as f64,
    }
}

fn eval_flat(label: &ModeLabel, p: &Point) -> f64 {
    match (*label, *p) {
        (ModeLabel::Constant, Point::Circle(_)) => 1.0 / (2.0 * PI).sqrt(),
        (ModeLabel::Constant, Point::Torus(..)) => 1.0 / (2.0 * PI),
        (ModeLabel::Constant, Point::Sphere(_)) => 1.0 / (4.0 * PI).sqrt(),
        (ModeLabel::Circle { k, sine }, Point::Circle(a)) => {
            let arg = k as f64 * a;
            (if sine { arg.sin() } else { arg.cos() }) / PI.sqrt()
        }
        (ModeLabel::Torus { k1, k2, sine }, Point::Torus(a, b)) => {
            let arg = k1 as f64 * a + k2 as f64 * b;
            (if sine { arg.sin() } else { arg.cos() }) * 2f64.sqrt() / (2.0 * PI)
        }
        _ => f64::NAN,
    }
}

/// Eigenfunction values at a fixed point set, `n_points × n_modes`, row-major.
#[derive(Clone, Debug)]
pub struct BasisTable {
    pub n_points: usize,
    pub n_modes: usize,
    pub values: Vec<f64>,
}

impl BasisTable {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_modes..(i + 1) * self.n_modes]
    }

    /// Σₙ cₙ φₙ(xᵢ) for every point.
    pub fn synthesize(&self, coeffs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.n_modes);
        for (i, o) in out.iter_mut().enumerate().take(self.n_points) {
            *o = dot(self.row(i), coeffs);
        }
    }

    /// Σᵢ wᵢ gᵢ φₙ(xᵢ) for every mode.
    pub fn project(&self, weights: &[f64], values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_modes];
        for i in 0..self.n_points {
            let wg = weights[i] * values[i];
            for (o, phi) in out.iter_mut().zip(self.row(i)) {
                *o += wg * phi;
            }
        }
        out
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize without reassociation
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn circle_low_modes() {
        let b = SpectralBasis::build(Manifold::CIRCLE, 2).unwrap();
        assert_eq!(b.eigenvalues(), &[0.0, 1.0, 1.0]);
        let x = 0.37;
        let mut v = Vec::new();
        b.evaluate_all(&Point::Circle(x), &mut v);
        assert!((v[0] - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!((v[1] - x.cos() / PI.sqrt()).abs() < 1e-15);
        assert!((v[2] - x.sin() / PI.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_truncation_is_rejected() {
        assert!(matches!(
            SpectralBasis::build(Manifold::CIRCLE, 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn sphere_degeneracy() {
        let b = SpectralBasis::build(Manifold::SPHERE2, 48).unwrap();
        for l in 1..=6u32 {
            let lam = (l * (l + 1)) as f64;
            let mult = b.eigenvalues().iter().filter(|&&e| e == lam).count();
            assert_eq!(mult, (2 * l + 1) as usize, "l={l}");
        }
    }

    #[test]
    fn torus_unit_frequency_modes() {
        let b = SpectralBasis::build(Manifold::TORUS2, 4).unwrap();
        assert_eq!(b.eigenvalues(), &[0.0, 1.0, 1.0, 1.0, 1.0]);
        // −Δφ = λφ by central differences on a 512² grid
        let h = 2.0 * PI / 512.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..5 {
            for _ in 0..20 {
                let (a, c) = (rng.random::<f64>() * 6.0, rng.random::<f64>() * 6.0);
                let f = |a: f64, c: f64| b.evaluate(n, &Point::Torus(a, c));
                let lap = (f(a + h, c) + f(a - h, c) + f(a, c + h) + f(a, c - h) - 4.0 * f(a, c))
                    / (h * h);
                let scale = 1.0 / (2.0 * PI) * 2f64.sqrt();
                assert!((-lap - f(a, c)).abs() < 1e-3 * scale);
            }
        }
    }

    #[test]
    fn eigenvalues_are_nondecreasing_and_ties_lexicographic() {
        for m in [Manifold::CIRCLE, Manifold::TORUS2, Manifold::SPHERE2] {
            let b = SpectralBasis::build(m, 300).unwrap();
            assert_eq!(b.len(), 301);
            assert_eq!(b.eigenvalues()[0], 0.0);
            for w in b.modes().windows(2) {
                assert!(w[0].eigenvalue <= w[1].eigenvalue);
                if w[0].eigenvalue == w[1].eigenvalue {
                    let ordered = match (w[0].label, w[1].label) {
                        (ModeLabel::Circle { k: a, sine: s }, ModeLabel::Circle { k: b, sine: t }) => {
                            (a, s) < (b, t)
                        }
                        (
                            ModeLabel::Torus { k1, k2, sine },
                            ModeLabel::Torus { k1: j1, k2: j2, sine: s2 },
                        ) => (k1, k2, sine) < (j1, j2, s2),
                        (ModeLabel::Sphere { l, m }, ModeLabel::Sphere { l: l2, m: m2 }) => {
                            (l, m) < (l2, m2)
                        }
                        _ => false,
                    };
                    assert!(ordered, "{:?} {:?}", w[0], w[1]);
                }
            }
        }
    }

    #[test]
    fn orthonormal_under_quadrature() {
        for (m, n_max, res) in [
            (Manifold::CIRCLE, 40, 64),
            (Manifold::TORUS2, 60, 24),
            (Manifold::SPHERE2, 80, 24),
        ] {
            let b = SpectralBasis::build(m, n_max).unwrap();
            let q = Quadrature::new(m, res);
            let t = b.tabulate(&q.nodes);
            for i in 0..b.len() {
                for j in i..b.len() {
                    let g: f64 = (0..q.len())
                        .map(|p| q.weights[p] * t.row(p)[i] * t.row(p)[j])
                        .sum();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((g - expected).abs() < 1e-8, "{m:?} ({i},{j}) {g}");
                }
            }
        }
    }

    #[test]
    fn constant_mode_is_inverse_root_volume() {
        for m in [Manifold::CIRCLE, Manifold::TORUS2, Manifold::SPHERE2] {
            let b = SpectralBasis::build(m, 3).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            for _ in 0..10 {
                let p = m.random_point(&mut rng);
                assert!((b.evaluate(0, &p) - m.volume().powf(-0.5)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sphere_harmonics_solve_the_eigenproblem() {
        let b = SpectralBasis::build(Manifold::SPHERE2, 35).unwrap();
        let h = 1e-3;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..b.len() {
            let lam = b.eigenvalues()[n];
            let mut worst: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for _ in 0..30 {
                let th = 0.3 + rng.random::<f64>() * (PI - 0.6);
                let ph = rng.random::<f64>() * 2.0 * PI;
                let f = |t: f64, p: f64| b.evaluate(n, &Point::sphere(t, p));
                let f_tt = (f(th + h, ph) - 2.0 * f(th, ph) + f(th - h, ph)) / (h * h);
                let f_t = (f(th + h, ph) - f(th - h, ph)) / (2.0 * h);
                let f_pp = (f(th, ph + h) - 2.0 * f(th, ph) + f(th, ph - h)) / (h * h);
                let lap = f_tt + th.cos() / th.sin() * f_t + f_pp / th.sin().powi(2);
                worst = worst.max((-lap - lam * f(th, ph)).abs());
                scale = scale.max((lam * f(th, ph)).abs());
            }
            assert!(worst < 1e-3 * scale, "mode {n}: {worst} vs {scale}");
        }
    }

    #[test]
    fn circle_modes_solve_the_eigenproblem() {
        let b = SpectralBasis::build(Manifold::CIRCLE, 20).unwrap();
        let h = 1e-3;
        for n in 1..b.len() {
            let lam = b.eigenvalues()[n];
            let (mut worst, mut scale) = (0.0f64, 0.0f64);
            for i in 0..40 {
                let x = 0.157 * i as f64;
                let f = |a: f64| b.evaluate(n, &Point::Circle(a));
                let lap = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
                worst = worst.max((-lap - lam * f(x)).abs());
                scale = scale.max((lam * f(x)).abs());
            }
            assert!(worst < 1e-3 * scale);
        }
    }

    #[test]
    fn parseval_for_band_limited_functions() {
        // g is a trigonometric / spherical polynomial of low degree
        let cases: [(Manifold, usize, usize); 3] = [
            (Manifold::CIRCLE, 20, 64),
            (Manifold::TORUS2, 120, 32),
            (Manifold::SPHERE2, 48, 20),
        ];
        for (m, n_max, res) in cases {
            let b = SpectralBasis::build(m, n_max).unwrap();
            let q = Quadrature::new(m, res);
            let g = |p: &Point| match *p {
                Point::Circle(a) => 0.3 + (2.0 * a).cos() - 0.7 * (5.0 * a).sin(),
                Point::Torus(a, c) => 1.0 + (a + 2.0 * c).cos() + 0.5 * (3.0 * a).sin(),
                Point::Sphere(v) => 0.2 + v[0] * v[2] - 0.4 * v[1] + v[2] * v[2] * v[0],
            };
            let values: Vec<f64> = q.nodes.iter().map(g).collect();
            let coeffs = b.project(&q, &values);
            let energy: f64 = coeffs.iter().map(|c| c * c).sum();
            let l2 = q.integrate(|p| g(p).powi(2));
            assert!(((energy - l2) / l2).abs() < 1e-6, "{m:?}");
        }
    }
}

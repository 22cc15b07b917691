use std::f64::consts::PI;

use super::{Manifold, ManifoldKind, Point};

/// Nodes and weights realizing ∫_M · dm.
#[derive(Clone, Debug)]
pub struct Quadrature {
    pub manifold: Manifold,
    pub resolution: usize,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    /// Circle and torus use the uniform trapezoidal rule with `resolution`
    /// points per angle. The sphere uses `resolution` Gauss–Legendre nodes in
    /// cos(colatitude) times `2·resolution` uniform longitudes.
    pub fn new(manifold: Manifold, resolution: usize) -> Self {
        let resolution = resolution.max(8);
        let n = resolution;
        let (nodes, weights) = match manifold.kind {
            ManifoldKind::Circle => {
                let h = 2.0 * PI / n as f64;
                ((0..n).map(|j| Point::Circle(j as f64 * h)).collect(), vec![h; n])
            }
            ManifoldKind::Torus2 => {
                let h = 2.0 * PI / n as f64;
                let mut nodes = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        nodes.push(Point::Torus(i as f64 * h, j as f64 * h));
                    }
                }
                (nodes, vec![h * h; n * n])
            }
            ManifoldKind::Sphere2 => {
                let (xs, ws) = gauss_legendre(n);
                let n_lon = 2 * n;
                let h = 2.0 * PI / n_lon as f64;
                let mut nodes = Vec::with_capacity(n * n_lon);
                let mut weights = Vec::with_capacity(n * n_lon);
                for (x, w) in xs.iter().zip(&ws) {
                    let s = (1.0 - x * x).max(0.0).sqrt();
                    for j in 0..n_lon {
                        let phi = j as f64 * h;
                        nodes.push(Point::Sphere([s * phi.cos(), s * phi.sin(), *x]));
                        weights.push(w * h);
                    }
                }
                (nodes, weights)
            }
        };
        Quadrature { manifold, resolution, nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }

    /// Quadrature of a function already sampled on the nodes.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        xs[n - 1 - i] = x;
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

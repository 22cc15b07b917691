//! Model manifolds with closed-form Laplace–Beltrami spectra.
//!
//! Three compact manifolds without boundary are supported: the unit circle,
//! the flat torus of side 2π, and the unit 2-sphere. Each comes with a real
//! orthonormal eigenbasis, a quadrature rule, geodesic distance and a greedy
//! construction of maximal separated point sets.

mod basis;
mod harmonics;
mod net;
mod quadrature;

pub(crate) use basis::dot as basis_dot;
pub use basis::{BasisTable, Mode, ModeLabel, SpectralBasis};
pub use harmonics::real_spherical_harmonics;
pub use net::{nested_sets, separated_net, shell_count, PointSet};
pub use quadrature::{gauss_legendre, Quadrature};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the norm of a sphere point before it is rejected.
pub const SPHERE_NORM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Circle,
    Torus2,
    Sphere2,
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ManifoldKind::Circle => "circle",
            ManifoldKind::Torus2 => "torus2",
            ManifoldKind::Sphere2 => "sphere2",
        };
        f.write_str(s)
    }
}

impl FromStr for ManifoldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "circle" | "s1" => Ok(ManifoldKind::Circle),
            "torus2" | "torus" | "t2" => Ok(ManifoldKind::Torus2),
            "sphere2" | "sphere" | "s2" => Ok(ManifoldKind::Sphere2),
            other => Err(Error::Config(format!("unsupported manifold kind `{other}`"))),
        }
    }
}

/// A point on one of the model manifolds.
///
/// Circle points are angles, torus points are angle pairs (both taken mod 2π)
/// and sphere points are unit vectors in R³.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Point {
    Circle(f64),
    Torus(f64, f64),
    Sphere([f64; 3]),
}

impl Point {
    /// Sphere point from colatitude and longitude.
    pub fn sphere(colatitude: f64, longitude: f64) -> Self {
        let s = colatitude.sin();
        Point::Sphere([s * longitude.cos(), s * longitude.sin(), colatitude.cos()])
    }

    /// Colatitude and longitude of a sphere point.
    pub fn spherical_angles(&self) -> Option<(f64, f64)> {
        match *self {
            Point::Sphere([x, y, z]) => Some((z.clamp(-1.0, 1.0).acos(), y.atan2(x))),
            _ => None,
        }
    }
}

/// One of the supported compact manifolds, at unit scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Manifold {
    pub kind: ManifoldKind,
}

impl Manifold {
    pub const CIRCLE: Manifold = Manifold { kind: ManifoldKind::Circle };
    pub const TORUS2: Manifold = Manifold { kind: ManifoldKind::Torus2 };
    pub const SPHERE2: Manifold = Manifold { kind: ManifoldKind::Sphere2 };

    pub fn new(kind: ManifoldKind) -> Self {
        Manifold { kind }
    }

    pub fn dimension(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle => 1,
            ManifoldKind::Torus2 | ManifoldKind::Sphere2 => 2,
        }
    }

    /// Riemannian volume m₀.
    pub fn volume(&self) -> f64 {
        match self.kind {
            ManifoldKind::Circle => 2.0 * PI,
            ManifoldKind::Torus2 => 4.0 * PI * PI,
            ManifoldKind::Sphere2 => 4.0 * PI,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self.kind {
            ManifoldKind::Circle | ManifoldKind::Sphere2 => PI,
            ManifoldKind::Torus2 => PI * 2f64.sqrt(),
        }
    }

    /// Canonical reference point: angle 0, the origin of the torus, or the north pole.
    pub fn reference_point(&self) -> Point {
        match self.kind {
            ManifoldKind::Circle => Point::Circle(0.0),
            ManifoldKind::Torus2 => Point::Torus(0.0, 0.0),
            ManifoldKind::Sphere2 => Point::Sphere([0.0, 0.0, 1.0]),
        }
    }

    pub fn validate_point(&self, p: &Point) -> Result<()> {
        match (self.kind, p) {
            (ManifoldKind::Circle, Point::Circle(a)) if a.is_finite() => Ok(()),
            (ManifoldKind::Torus2, Point::Torus(a, b)) if a.is_finite() && b.is_finite() => Ok(()),
            (ManifoldKind::Sphere2, Point::Sphere(v)) => {
                let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if (norm - 1.0).abs() > SPHERE_NORM_TOL || !norm.is_finite() {
                    Err(Error::InvalidPoint(format!("sphere point has norm {norm}")))
                } else {
                    Ok(())
                }
            }
            _ => Err(Error::InvalidPoint(format!("{p:?} is not a point of {}", self.kind))),
        }
    }

    /// Geodesic distance between two points of the manifold.
    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.validate_point(x)?;
        self.validate_point(y)?;
        Ok(self.distance_unchecked(x, y))
    }

    /// Geodesic distance without point validation; callers guarantee both points
    /// belong to this manifold.
    pub fn distance_unchecked(&self, x: &Point, y: &Point) -> f64 {
        match (x, y) {
            (Point::Circle(a), Point::Circle(b)) => wrapped_gap(a - b),
            (Point::Torus(a1, a2), Point::Torus(b1, b2)) => {
                wrapped_gap(a1 - b1).hypot(wrapped_gap(a2 - b2))
            }
            (Point::Sphere(u), Point::Sphere(v)) => {
                // atan2 form keeps full precision for nearly coincident and antipodal points
                let cross = [
                    u[1] * v[2] - u[2] * v[1],
                    u[2] * v[0] - u[0] * v[2],
                    u[0] * v[1] - u[1] * v[0],
                ];
                let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
                let cos = (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]).clamp(-1.0, 1.0);
                sin.atan2(cos)
            }
            _ => f64::NAN,
        }
    }

    /// Point at geodesic distance `r` from `p` along a fixed direction, used to
    /// build sample pairs at prescribed separations.
    pub fn offset_point(&self, p: &Point, r: f64, direction: f64) -> Point {
        match *p {
            Point::Circle(a) => Point::Circle(wrap_angle(a + r * direction.cos().signum())),
            Point::Torus(a, b) => Point::Torus(
                wrap_angle(a + r * direction.cos()),
                wrap_angle(b + r * direction.sin()),
            ),
            Point::Sphere(u) => {
                // orthonormal frame at u
                let helper = if u[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
                let e1 = normalize(cross(helper, u));
                let e2 = cross(u, e1);
                let (s, c) = direction.sin_cos();
                let t = [
                    c * e1[0] + s * e2[0],
                    c * e1[1] + s * e2[1],
                    c * e1[2] + s * e2[2],
                ];
                let (sr, cr) = r.sin_cos();
                Point::Sphere(normalize([
                    cr * u[0] + sr * t[0],
                    cr * u[1] + sr * t[1],
                    cr * u[2] + sr * t[2],
                ]))
            }
        }
    }

    /// Uniformly distributed random point.
    pub fn random_point<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self.kind {
            ManifoldKind::Circle => Point::Circle(rng.random::<f64>() * 2.0 * PI),
            ManifoldKind::Torus2 => {
                Point::Torus(rng.random::<f64>() * 2.0 * PI, rng.random::<f64>() * 2.0 * PI)
            }
            ManifoldKind::Sphere2 => {
                let z = 2.0 * rng.random::<f64>() - 1.0;
                let phi = rng.random::<f64>() * 2.0 * PI;
                let s = (1.0 - z * z).max(0.0).sqrt();
                Point::Sphere([s * phi.cos(), s * phi.sin(), z])
            }
        }
    }
}

impl From<ManifoldKind> for Manifold {
    fn from(kind: ManifoldKind) -> Self {
        Manifold { kind }
    }
}

/// Smallest absolute representative of an angle difference, in [0, π].
fn wrapped_gap(delta: f64) -> f64 {
    let r = delta.abs().rem_euclid(2.0 * PI);
    r.min(2.0 * PI - r)
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    a.rem_euclid(2.0 * PI)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn antipodal_sphere_points_are_pi_apart() {
        let m = Manifold::SPHERE2;
        let d = m
            .distance(&Point::Sphere([0.0, 0.0, 1.0]), &Point::Sphere([0.0, 0.0, -1.0]))
            .unwrap();
        assert!((d - PI).abs() < 1e-15);
    }

    #[test]
    fn circle_distance_wraps_around() {
        let d = Manifold::CIRCLE
            .distance(&Point::Circle(0.0), &Point::Circle(1.5 * PI))
            .unwrap();
        assert!((d - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn torus_diameter_is_attained() {
        let m = Manifold::TORUS2;
        let d = m.distance(&Point::Torus(0.0, 0.0), &Point::Torus(PI, PI)).unwrap();
        assert!((d - m.diameter()).abs() < 1e-14);
    }

    #[test]
    fn off_sphere_points_are_rejected() {
        let err = Manifold::SPHERE2
            .distance(&Point::Sphere([0.0, 0.0, 1.0 + 1e-6]), &Point::Sphere([1.0, 0.0, 0.0]))
            .unwrap_err();
        assert!(matches!(err, Error::InvalidPoint(_)));
        assert!(Manifold::CIRCLE
            .distance(&Point::Torus(0.0, 0.0), &Point::Circle(0.0))
            .is_err());
    }

    #[test]
    fn unsupported_kind_is_a_config_error() {
        assert!(matches!("klein".parse::<ManifoldKind>(), Err(Error::Config(_))));
        assert_eq!("S2".parse::<ManifoldKind>().unwrap(), ManifoldKind::Sphere2);
    }

    #[test]
    fn offset_point_has_requested_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [Manifold::CIRCLE, Manifold::TORUS2, Manifold::SPHERE2] {
            for _ in 0..50 {
                let p = m.random_point(&mut rng);
                let r = 1e-3 + rng.random::<f64>() * 2.0;
                let q = m.offset_point(&p, r, rng.random::<f64>() * 2.0 * PI);
                let d = m.distance(&p, &q).unwrap();
                if m.kind == ManifoldKind::Torus2 && r > PI {
                    continue;
                }
                assert!((d - r).abs() < 1e-10, "{m:?} r={r} d={d}");
            }
        }
    }

    #[test]
    fn triangle_inequality_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [Manifold::CIRCLE, Manifold::TORUS2, Manifold::SPHERE2] {
            for _ in 0..100_000 / 3 {
                let (x, y, z) = (
                    m.random_point(&mut rng),
                    m.random_point(&mut rng),
                    m.random_point(&mut rng),
                );
                let dxy = m.distance_unchecked(&x, &y);
                let dyz = m.distance_unchecked(&y, &z);
                let dxz = m.distance_unchecked(&x, &z);
                assert!(dxz <= dxy + dyz + 1e-12);
                assert_eq!(m.distance_unchecked(&x, &y), m.distance_unchecked(&y, &x));
                assert!(dxy <= m.diameter() + 1e-12);
            }
        }
    }
}

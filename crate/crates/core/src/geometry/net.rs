use std::f64::consts::PI;

use super::{Manifold, ManifoldKind, Point};

/// Relative slack on the separation test so that exactly commensurate
/// spacings (r = 2π/k on the circle) are accepted despite rounding.
const SEPARATION_SLACK: f64 = 1e-9;

/// Target candidate spacing before alignment to the separation radius.
fn base_spacing(kind: ManifoldKind) -> f64 {
    match kind {
        ManifoldKind::Circle => 2.0 * PI / 4096.0,
        ManifoldKind::Torus2 => 2.0 * PI / 160.0,
        ManifoldKind::Sphere2 => PI / 96.0,
    }
}

/// A maximal r-separated subset of the manifold.
#[derive(Clone, Debug)]
pub struct PointSet {
    pub manifold: Manifold,
    pub points: Vec<Point>,
    pub separation: f64,
    /// Spacing of the candidate grid the set was drawn from; covering holds up
    /// to `separation + candidate_spacing`.
    pub candidate_spacing: f64,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest pairwise geodesic distance (infinite for a single point).
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            for q in &self.points[i + 1..] {
                best = best.min(self.manifold.distance_unchecked(p, q));
            }
        }
        best
    }

    /// Distance from `p` to the nearest member of the set.
    pub fn distance_to_set(&self, p: &Point) -> f64 {
        self.points
            .iter()
            .map(|q| self.manifold.distance_unchecked(p, q))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Maximal r-separated set by greedy first-fit over a candidate grid.
///
/// Candidates are visited in order of increasing distance from a starting
/// candidate selected by `seed`, and each is kept when it lies at least `r`
/// from everything kept so far. The grid is aligned so that `r` is an integer
/// multiple of its spacing. If `r` exceeds the diameter the result is the
/// starting point alone.
pub fn separated_net(manifold: Manifold, r: f64, seed: u64) -> PointSet {
    let (candidates, spacing) = candidate_grid(manifold, r);
    let start = candidates[(seed % candidates.len() as u64) as usize];
    let mut order: Vec<(f64, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (manifold.distance_unchecked(&start, c), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let threshold = r * (1.0 - SEPARATION_SLACK);
    let mut points: Vec<Point> = Vec::new();
    for (_, i) in order {
        let c = candidates[i];
        if points
            .iter()
            .all(|p| manifold.distance_unchecked(p, &c) >= threshold)
        {
            points.push(c);
        }
    }
    PointSet { manifold, points, separation: r, candidate_spacing: spacing }
}

fn candidate_grid(manifold: Manifold, r: f64) -> (Vec<Point>, f64) {
    let h0 = base_spacing(manifold.kind);
    let r_eff = r.clamp(h0, 2.0 * PI);
    let h = r_eff / (r_eff / h0).ceil();
    match manifold.kind {
        ManifoldKind::Circle => {
            let n = (2.0 * PI / h + 1e-9).floor() as usize;
            ((0..n).map(|j| Point::Circle(j as f64 * h)).collect(), h)
        }
        ManifoldKind::Torus2 => {
            let n = (2.0 * PI / h + 1e-9).floor() as usize;
            let mut pts = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    pts.push(Point::Torus(i as f64 * h, j as f64 * h));
                }
            }
            (pts, h)
        }
        ManifoldKind::Sphere2 => {
            let h = if r_eff <= PI { h } else { PI / (PI / h0).ceil() };
            let rings = (PI / h + 1e-9).floor() as usize;
            let mut pts = Vec::new();
            for i in 0..=rings {
                let theta = (i as f64 * h).min(PI);
                let count = ((2.0 * PI * theta.sin() / h).round() as usize).max(1);
                for j in 0..count {
                    pts.push(Point::sphere(theta, 2.0 * PI * j as f64 / count as f64));
                }
            }
            if PI - rings as f64 * h > 0.5 * h {
                pts.push(Point::Sphere([0.0, 0.0, -1.0]));
            }
            (pts, h)
        }
    }
}

/// Number of shells J with J ≥ diam/ε² > J − 1.
pub fn shell_count(manifold: Manifold, eps: f64) -> usize {
    (manifold.diameter() / (eps * eps)).ceil() as usize
}

/// Index sets R_j = {k : d(x₀, x_k) ≤ j·ε²} for j = 0..=J.
///
/// The sets are nested; R_J covers the whole net once J ≥ diam/ε².
pub fn nested_sets(net: &PointSet, x0: &Point, eps: f64, shells: usize) -> Vec<Vec<usize>> {
    let step = eps * eps;
    let dists: Vec<f64> = net
        .points
        .iter()
        .map(|p| net.manifold.distance_unchecked(x0, p))
        .collect();
    (0..=shells)
        .map(|j| {
            let radius = j as f64 * step;
            dists
                .iter()
                .enumerate()
                .filter(|(_, &d)| d <= radius + 1e-12)
                .map(|(k, _)| k)
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn antipodal_pair_on_the_circle() {
        let net = separated_net(Manifold::CIRCLE, PI, 0);
        assert_eq!(net.len(), 2);
    }

    #[test]
    fn commensurate_spacing_gives_k_points() {
        for k in 2..=24u32 {
            for seed in [0, 5, 977] {
                let r = 2.0 * PI / k as f64;
                let net = separated_net(Manifold::CIRCLE, r, seed);
                assert_eq!(net.len(), k as usize, "k={k}");
                let mut angles: Vec<f64> = net
                    .points
                    .iter()
                    .map(|p| match p {
                        Point::Circle(a) => *a,
                        _ => unreachable!(),
                    })
                    .collect();
                angles.sort_by(f64::total_cmp);
                for w in angles.windows(2) {
                    assert!((w[1] - w[0] - r).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn larger_than_diameter_is_a_single_point() {
        for m in [Manifold::CIRCLE, Manifold::TORUS2, Manifold::SPHERE2] {
            let net = separated_net(m, 10.0, 1);
            assert_eq!(net.len(), 1);
        }
    }

    #[test]
    fn sphere_quarter_circle_packing() {
        for seed in 0..6 {
            let net = separated_net(Manifold::SPHERE2, PI / 2.0, seed * 131);
            assert!((4..=6).contains(&net.len()), "{}", net.len());
        }
        let net = separated_net(Manifold::SPHERE2, PI / 2.0, 0);
        assert_eq!(net.len(), 6);
    }

    #[test]
    fn nested_sets_cover_and_nest() {
        let eps = 0.5f64;
        let net = separated_net(Manifold::CIRCLE, eps * eps, 0);
        let x0 = Point::Circle(0.0);
        let j = shell_count(net.manifold, eps);
        let sets = nested_sets(&net, &x0, eps, j);
        assert_eq!(sets[0], vec![0]);
        for w in sets.windows(2) {
            assert!(w[0].iter().all(|k| w[1].contains(k)));
        }
        assert_eq!(sets[j].len(), net.len());
    }

    #[test]
    fn first_shell_matches_brute_force_filter() {
        let eps2 = PI / 4.0;
        let net = separated_net(Manifold::CIRCLE, 0.1, 3);
        let x0 = Point::Circle(0.0);
        let sets = nested_sets(&net, &x0, eps2.sqrt(), 1);
        let brute: Vec<usize> = net
            .points
            .iter()
            .enumerate()
            .filter(|(_, p)| match p {
                Point::Circle(a) => {
                    let d = a.rem_euclid(2.0 * PI);
                    d.min(2.0 * PI - d) <= eps2 + 1e-12
                }
                _ => false,
            })
            .map(|(k, _)| k)
            .collect();
        assert_eq!(sets[1], brute);
    }
}

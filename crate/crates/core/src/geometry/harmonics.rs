//! Real orthonormal spherical harmonics on the unit sphere.
//!
//! Values are stored degree by degree, with the entry for `(l, m)` at
//! `l² + l + m`, `m ∈ [-l, l]`. Negative orders carry `sin(|m|φ)`, positive
//! orders `cos(mφ)`.

use std::f64::consts::PI;

/// Fill `out` with all real spherical harmonics of degree at most `lmax`
/// evaluated at the given colatitude and longitude.
pub fn real_spherical_harmonics(lmax: usize, colatitude: f64, longitude: f64, out: &mut Vec<f64>) {
    let n = (lmax + 1) * (lmax + 1);
    out.clear();
    out.resize(n, 0.0);
    let (s, x) = colatitude.sin_cos();
    let s = s.abs();

    // normalized associated Legendre functions, one order at a time
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    let sqrt2 = 2f64.sqrt();
    for m in 0..=lmax {
        if m > 0 {
            pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
        }
        let (sin_m, cos_m) = (m as f64 * longitude).sin_cos();
        let mut store = |l: usize, value: f64| {
            let base = l * l + l;
            if m == 0 {
                out[base] = value;
            } else {
                out[base + m] = sqrt2 * value * cos_m;
                out[base - m] = sqrt2 * value * sin_m;
            }
        };
        store(m, pmm);
        if m == lmax {
            break;
        }
        let mut p_prev = pmm;
        let mut p_curr = ((2 * m + 3) as f64).sqrt() * x * pmm;
        store(m + 1, p_curr);
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            let p_next = a * (x * p_curr - b * p_prev);
            store(l, p_next);
            p_prev = p_curr;
            p_curr = p_next;
        }
    }
}

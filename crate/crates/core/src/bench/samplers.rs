//! Structured ring samplers with exact cell weights.

use crate::cloud::PointCloud;
use crate::error::{PimError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Points per ring `round(c * w_j)`, with `c` tuned so the total is as close to `target` as possible.
fn ring_counts(widths: &[f64], fixed: usize, target: usize) -> Vec<usize> {
    let count = |c: f64| -> Vec<usize> { widths.iter().map(|w| ((c * w).round() as usize).max(1)).collect() };
    let total = |c: f64| count(c).iter().sum::<usize>() + fixed;
    let (mut lo, mut hi) = (1e-6, 1.0);
    while total(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = (total(lo) as i64, total(hi) as i64);
    if (target as i64 - a).abs() <= (b - target as i64).abs() {
        count(lo)
    } else {
        count(hi)
    }
}

/// Rings needed so that ring spacing matches the in-ring spacing at roughly `target` points.
fn ring_number(measure: f64, length: f64, target: usize) -> usize {
    // N ≈ measure / h², h = length / J
    ((target as f64 / measure).sqrt() * length).round().max(2.0) as usize
}

/// Radial quadrature factors: Gregory end corrections at each closed end so
/// that the ring rule integrates cubics exactly.
fn gregory(n: usize, start: bool, end: bool) -> Vec<f64> {
    const G: [f64; 3] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
    let mut w = vec![1.0; n];
    for k in 0..3.min(n) {
        if start {
            w[k] = G[k];
        }
        if end {
            w[n - 1 - k] = G[k];
        }
    }
    w
}

fn check_target(target: usize) -> Result<()> {
    if target < 50 {
        return Err(PimError::InsufficientPoints {
            needed: 50,
            have: target,
        });
    }
    Ok(())
}

fn angles(m: usize, ring: usize) -> impl Iterator<Item = f64> {
    let offset = (ring as f64 * GOLDEN).fract();
    (0..m).map(move |k| 2.0 * PI * (k as f64 + offset) / m as f64)
}

/// Unit disk: a center point plus concentric rings; the outer ring is the boundary.
pub fn sample_disk(target: usize) -> Result<PointCloud> {
    check_target(target)?;
    let j_max = ring_number(PI, 1.0, target).max(4);
    let h = 1.0 / j_max as f64;
    let radii: Vec<f64> = (1..=j_max).map(|j| j as f64 * h).collect();
    let counts = ring_counts(&radii.iter().map(|r| 2.0 * PI * r / h).collect::<Vec<_>>(), 1, target);
    let omega = gregory(j_max, false, true);
    // the center carries the Euler-Maclaurin correction of the odd radial integrand
    let mut coords = vec![0.0, 0.0];
    let mut volume = vec![PI * h * h / 6.0];
    let (mut ids, mut area) = (Vec::new(), Vec::new());
    for (j, (&r, &m)) in radii.iter().zip(&counts).enumerate() {
        let outer = j + 1 == j_max;
        let v = omega[j] * 2.0 * PI * r * h / m as f64;
        for a in angles(m, j + 1) {
            if outer {
                ids.push(coords.len() / 2);
                area.push(2.0 * PI * r / m as f64);
            }
            coords.extend([r * a.cos(), r * a.sin()]);
            volume.push(v);
        }
    }
    PointCloud::new(2, 2, coords, volume, ids, area)
}

/// Annulus `r_in <= r <= r_out`; both circles are boundary.
pub fn sample_annulus(target: usize, r_in: f64, r_out: f64) -> Result<PointCloud> {
    check_target(target)?;
    if !(0.0 < r_in && r_in < r_out) {
        return Err(PimError::Validation(format!(
            "annulus radii {r_in}, {r_out} are invalid"
        )));
    }
    let measure = PI * (r_out * r_out - r_in * r_in);
    let j_max = ring_number(measure, r_out - r_in, target).max(6);
    let h = (r_out - r_in) / j_max as f64;
    let radii: Vec<f64> = (0..=j_max).map(|j| r_in + j as f64 * h).collect();
    let counts = ring_counts(&radii.iter().map(|r| 2.0 * PI * r / h).collect::<Vec<_>>(), 0, target);
    let omega = gregory(j_max + 1, true, true);
    let (mut coords, mut volume, mut ids, mut area) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (j, (&r, &m)) in radii.iter().zip(&counts).enumerate() {
        let edge = j == 0 || j == j_max;
        let v = omega[j] * 2.0 * PI * r * h / m as f64;
        for a in angles(m, j) {
            if edge {
                ids.push(coords.len() / 2);
                area.push(2.0 * PI * r / m as f64);
            }
            coords.extend([r * a.cos(), r * a.sin()]);
            volume.push(v);
        }
    }
    PointCloud::new(2, 2, coords, volume, ids, area)
}

/// Spherical cap of the unit sphere around the north pole with polar angle `<= theta_max`.
pub fn sample_cap(target: usize, theta_max: f64) -> Result<PointCloud> {
    check_target(target)?;
    if !(0.0 < theta_max && theta_max < PI) {
        return Err(PimError::Validation(format!("cap angle {theta_max} is invalid")));
    }
    let measure = 2.0 * PI * (1.0 - theta_max.cos());
    let j_max = ring_number(measure, theta_max, target).max(4);
    let h = theta_max / j_max as f64;
    let thetas: Vec<f64> = (1..=j_max).map(|j| j as f64 * h).collect();
    let counts = ring_counts(
        &thetas.iter().map(|th| 2.0 * PI * th.sin() / h).collect::<Vec<_>>(),
        1,
        target,
    );
    let omega = gregory(j_max, false, true);
    let mut coords = vec![0.0, 0.0, 1.0];
    let mut volume = vec![PI * h * h / 6.0];
    let (mut ids, mut area) = (Vec::new(), Vec::new());
    for (j, (&th, &m)) in thetas.iter().zip(&counts).enumerate() {
        let outer = j + 1 == j_max;
        let (s, c) = th.sin_cos();
        volume.extend(std::iter::repeat(omega[j] * 2.0 * PI * s * h / m as f64).take(m));
        for a in angles(m, j + 1) {
            if outer {
                ids.push(coords.len() / 3);
                area.push(2.0 * PI * s / m as f64);
            }
            coords.extend([s * a.cos(), s * a.sin(), c]);
        }
    }
    // the rule is exact up to O(h^4) for sin θ; rescale to the exact cap area
    let total: f64 = volume.iter().sum();
    volume.iter_mut().for_each(|v| *v *= measure / total);
    PointCloud::new(3, 2, coords, volume, ids, area)
}

/// `n` equispaced points on the unit circle, a closed curve without boundary.
pub fn sample_circle(n: usize) -> Result<PointCloud> {
    if n < 3 {
        return Err(PimError::InsufficientPoints { needed: 3, have: n });
    }
    let coords = (0..n)
        .flat_map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            [a.cos(), a.sin()]
        })
        .collect();
    PointCloud::new(2, 1, coords, vec![2.0 * PI / n as f64; n], vec![], vec![])
}

/// Uniform random points in the unit disk with `V = π/N`; `round(√(πN))`
/// of the `n` points sit equispaced on the boundary circle.
pub fn sample_disk_random(n: usize, seed: u64) -> Result<PointCloud> {
    check_target(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = ((PI * n as f64).sqrt().round() as usize).max(8);
    let interior = n - m;
    let mut coords = Vec::with_capacity(2 * n);
    for _ in 0..interior {
        let r = rng.gen::<f64>().sqrt();
        let a = 2.0 * PI * rng.gen::<f64>();
        coords.extend([r * a.cos(), r * a.sin()]);
    }
    let ids: Vec<usize> = (interior..n).collect();
    for a in angles(m, 0) {
        coords.extend([a.cos(), a.sin()]);
    }
    PointCloud::new(2, 2, coords, vec![PI / n as f64; n], ids, vec![2.0 * PI / m as f64; m])
}

//! Nonlocal total variation inpainting on the patch manifold of an image.
//!
//! Every pixel becomes a point in `R^(s*s)` (its `s×s` patch). Pixels with
//! known values form the constrained set `S`. The restored image minimizes
//! the nonlocal total variation by lagged diffusivity: with
//! `q = 1 / (|∇u^n| + ε)` frozen, `div(q ∇u^{n+1}) = 0` is solved with
//! `u^{n+1} = f` on `S`.

mod graph;
mod pgm;

pub use graph::{nonlocal_gradient, solve_constrained_laplace, WeightGraph};
pub use pgm::{load_pgm, parse_pgm, GrayImage};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cloud::{Bandwidth, PointCloud};
use crate::error::{PimError, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::solve::SolveOptions;

pub const DEFAULT_PATCH_SIZE: usize = 5;

/// Patch point cloud of an image together with the constrained pixel set.
#[derive(Debug, Clone)]
pub struct PatchCloud {
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    /// One point per pixel (row-major), `V = 1`, no boundary.
    pub cloud: PointCloud,
    /// Nominal intrinsic dimension used only for `C_t`.
    pub intrinsic_dim: usize,
    sample_mask: Vec<bool>,
}

impl PatchCloud {
    /// Attaches the constrained pixel set; at least one pixel must be set.
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.cloud.len() {
            return Err(PimError::Dimension {
                what: "sample mask",
                expected: self.cloud.len(),
                got: mask.len(),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(PimError::Validation("sample mask is empty".into()));
        }
        self.sample_mask = mask;
        Ok(self)
    }

    pub fn sample_mask(&self) -> &[bool] {
        &self.sample_mask
    }

    pub fn sample_ids(&self) -> Vec<usize> {
        (0..self.sample_mask.len()).filter(|&i| self.sample_mask[i]).collect()
    }
}

/// Extracts one `patch_size × patch_size` patch per pixel, row-major within
/// the patch, replicating edge pixels outside the image.
pub fn extract_patches(image: &GrayImage, patch_size: usize) -> Result<PatchCloud> {
    if patch_size % 2 == 0 {
        return Err(PimError::Validation(format!("patch size {patch_size} must be odd")));
    }
    let (w, h) = (image.width, image.height);
    let half = (patch_size / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let dim = patch_size * patch_size;
    let mut coords = vec![0.0; w * h * dim];
    coords.par_chunks_mut(dim).enumerate().for_each(|(p, out)| {
        let (r, c) = ((p / w) as isize, (p % w) as isize);
        let mut k = 0;
        for dr in -half..=half {
            for dc in -half..=half {
                out[k] = image.at(clamp(r + dr, h), clamp(c + dc, w));
                k += 1;
            }
        }
    });
    let intrinsic_dim = 2.min(dim);
    let cloud = PointCloud::new(dim, intrinsic_dim, coords, vec![1.0; w * h], vec![], vec![])?;
    Ok(PatchCloud {
        width: w,
        height: h,
        patch_size,
        cloud,
        intrinsic_dim,
        sample_mask: vec![false; w * h],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TVOptions {
    pub epsilon: f64,
    pub max_outer: usize,
    pub solve: SolveOptions,
    /// Neighbor count `k`; `t_i` is the squared distance to the `k`-th neighbor.
    pub knn: usize,
    /// `None` eliminates the constrained rows; `Some(β)` adds the penalty
    /// `(1/β) Σ_S (u − f)²` instead.
    pub constraint_beta: Option<f64>,
    /// Outer loop stops once `sup |u^{n+1} − u^n| <= stop_tol · range(f|_S)`.
    pub stop_tol: f64,
    /// Extra factor multiplying every kernel value.
    pub kernel_scale: f64,
}

impl Default for TVOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            max_outer: 50,
            solve: SolveOptions {
                rel_tol: 1e-12,
                ..SolveOptions::default()
            },
            knn: 20,
            constraint_beta: None,
            stop_tol: 1e-4,
            kernel_scale: 1.0,
        }
    }
}

impl TVOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(PimError::Validation(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.stop_tol >= 0.0) || !(self.kernel_scale > 0.0 && self.kernel_scale.is_finite()) {
            return Err(PimError::Validation(
                "stop_tol must be >= 0 and kernel_scale positive".into(),
            ));
        }
        if self.knn == 0 {
            return Err(PimError::Validation("knn must be positive".into()));
        }
        self.solve.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TvResult {
    pub image: GrayImage,
    /// Number of lagged-diffusivity updates after the initial `q ≡ 1` solve.
    pub outer_iterations: usize,
    pub converged: bool,
    /// `sup |u^{n+1} − u^n|` per outer iteration.
    pub changes: Vec<f64>,
    /// `(E_{q^n}(u^n), E_{q^n}(u^{n+1}))` per outer iteration.
    pub energy: Vec<(f64, f64)>,
    /// Nonlocal total variation `Σ |∇u_i|` of each iterate, starting with `u^0`.
    pub total_variation: Vec<f64>,
}

/// Restores the image whose known pixels are `samples` on the patch cloud's mask.
///
/// `samples` must have one value per pixel; only masked entries are read.
pub fn tv_inpaint(patches: &PatchCloud, samples: &[f64], options: &TVOptions) -> Result<TvResult> {
    options.validate()?;
    let n = patches.cloud.len();
    if samples.len() != n {
        return Err(PimError::Dimension {
            what: "image samples",
            expected: n,
            got: samples.len(),
        });
    }
    let ids = patches.sample_ids();
    if ids.is_empty() {
        return Err(PimError::Validation("sample mask is empty".into()));
    }
    let values: Vec<f64> = ids.iter().map(|&i| samples[i]).collect();
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(PimError::Validation(format!("sample value {v} is not finite")));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;

    let kernel = KernelSpec::new(KernelFamily::Gaussian, Bandwidth::Global(1.0), patches.intrinsic_dim)
        .with_scale(options.kernel_scale);
    let graph = WeightGraph::knn(&patches.cloud, &kernel, options.knn.min(n - 1).max(1))?;
    let solve = |q: &[f64], x0: Option<&[f64]>| match options.constraint_beta {
        None => graph.solve_constrained(q, &ids, &values, x0, &options.solve),
        Some(beta) => graph.solve_penalized(q, &ids, &values, beta, x0, &options.solve),
    };
    let tv = |g: &[Vec<f64>]| {
        g.iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .sum::<f64>()
    };

    let mut u = solve(&vec![1.0; n], None).map_err(|e| PimError::Outer {
        outer: 0,
        source: Box::new(e),
    })?;
    let mut grad = graph.gradient(&patches.cloud, &u)?;
    let mut changes = Vec::new();
    let mut energy = Vec::new();
    let mut total_variation = vec![tv(&grad)];
    let mut outer_iterations = 0;
    let mut converged = false;
    for outer in 1..=options.max_outer {
        let q: Vec<f64> = grad
            .iter()
            .map(|g| 1.0 / (g.iter().map(|x| x * x).sum::<f64>().sqrt() + options.epsilon))
            .collect();
        let before = graph.energy(&q, &u);
        let next = solve(&q, Some(&u)).map_err(|e| PimError::Outer {
            outer,
            source: Box::new(e),
        })?;
        let change = u.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        energy.push((before, graph.energy(&q, &next)));
        changes.push(change);
        outer_iterations = outer;
        u = next;
        grad = graph.gradient(&patches.cloud, &u)?;
        total_variation.push(tv(&grad));
        if change <= options.stop_tol * range {
            converged = true;
            break;
        }
    }
    Ok(TvResult {
        image: GrayImage::new(patches.width, patches.height, u)?,
        outer_iterations,
        converged,
        changes,
        energy,
        total_variation,
    })
}

/// Exactly `round(fraction · n)` (at least one) pixels drawn uniformly without replacement.
pub fn random_mask(n: usize, fraction: f64, seed: u64) -> Result<Vec<bool>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(PimError::Validation(format!(
            "subsample fraction {fraction} must lie in (0, 1]"
        )));
    }
    if n == 0 {
        return Err(PimError::Validation("cannot sample from an empty image".into()));
    }
    let count = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, count) {
        mask[i] = true;
    }
    Ok(mask)
}

/// Nonzero pixels of `image` are constrained.
pub fn mask_from_image(image: &GrayImage) -> Vec<bool> {
    image.values.iter().map(|&v| v != 0.0).collect()
}

/// Baseline fill: every pixel takes the value of the nearest masked pixel in
/// the image plane (ties go to the lowest index).
pub fn nearest_sample_fill(width: usize, height: usize, mask: &[bool], values: &[f64]) -> Result<Vec<f64>> {
    let n = width * height;
    if mask.len() != n || values.len() != n {
        return Err(PimError::Dimension {
            what: "mask or values",
            expected: n,
            got: mask.len().min(values.len()),
        });
    }
    let known: Vec<(isize, isize, f64)> = (0..n)
        .filter(|&i| mask[i])
        .map(|i| ((i / width) as isize, (i % width) as isize, values[i]))
        .collect();
    if known.is_empty() {
        return Err(PimError::Validation("sample mask is empty".into()));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let (r, c) = ((i / width) as isize, (i % width) as isize);
            let mut best = (isize::MAX, 0.0);
            for &(kr, kc, v) in &known {
                let d = (kr - r).pow(2) + (kc - c).pow(2);
                if d < best.0 {
                    best = (d, v);
                }
            }
            best.1
        })
        .collect())
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "rmse of vectors with different lengths");
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Peak signal-to-noise ratio in dB for values in `[0, 1]`; infinite when exact.
pub fn psnr(a: &[f64], b: &[f64]) -> f64 {
    let e = rmse(a, b);
    if e == 0.0 {
        f64::INFINITY
    } else {
        -20.0 * e.log10()
    }
}

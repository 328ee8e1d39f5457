//! Point clouds sampling a manifold, their neighbor structure and bandwidths.
//!
//! A [`PointCloud`] carries the sample points `P`, per-point volume weights
//! `V`, and the boundary subset `S ⊆ P` together with its area weights `A`.

mod bandwidth;
mod io;
pub(crate) mod kdtree;
mod neighbors;

pub use bandwidth::{knn_radii, knn_radii_brute_force, select_bandwidth_adaptive, select_bandwidth_global, Bandwidth};
pub use io::{load_cloud, parse_cloud, save_cloud, write_cloud};
pub use neighbors::{connected_components, NeighborIndex};

use crate::error::{PimError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    intrinsic_dim: usize,
    coords: Vec<f64>,
    volume: Vec<f64>,
    boundary_ids: Vec<usize>,
    area: Vec<f64>,
    boundary_slot: Vec<Option<usize>>,
}

impl PointCloud {
    /// Builds a validated cloud from flat row-major coordinates (`N * dim` values).
    pub fn new(
        dim: usize,
        intrinsic_dim: usize,
        coords: Vec<f64>,
        volume: Vec<f64>,
        boundary_ids: Vec<usize>,
        area: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(PimError::Validation("ambient dimension must be >= 1".into()));
        }
        if intrinsic_dim == 0 || intrinsic_dim > dim {
            return Err(PimError::Validation(format!(
                "intrinsic dimension {intrinsic_dim} must lie in 1..={dim}"
            )));
        }
        if coords.len() % dim != 0 {
            return Err(PimError::Validation(format!(
                "coordinate buffer length {} is not a multiple of {dim}",
                coords.len()
            )));
        }
        let n = coords.len() / dim;
        if n == 0 {
            return Err(PimError::Validation("cloud must contain at least one point".into()));
        }
        if volume.len() != n {
            return Err(PimError::Dimension {
                what: "volume weights",
                expected: n,
                got: volume.len(),
            });
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(PimError::Validation(format!(
                "point {} has a non-finite coordinate",
                i / dim
            )));
        }
        if let Some(i) = volume.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(PimError::Validation(format!(
                "point {i} has non-positive volume weight {}",
                volume[i]
            )));
        }
        if area.len() != boundary_ids.len() {
            return Err(PimError::Dimension {
                what: "boundary area weights",
                expected: boundary_ids.len(),
                got: area.len(),
            });
        }
        let mut boundary_slot = vec![None; n];
        for (slot, (&id, &a)) in boundary_ids.iter().zip(&area).enumerate() {
            if id >= n {
                return Err(PimError::Validation(format!("boundary index {id} out of range")));
            }
            if boundary_slot[id].is_some() {
                return Err(PimError::Validation(format!("boundary index {id} listed twice")));
            }
            if !(a > 0.0 && a.is_finite()) {
                return Err(PimError::Validation(format!(
                    "boundary point {id} has non-positive area weight {a}"
                )));
            }
            boundary_slot[id] = Some(slot);
        }
        Ok(PointCloud {
            dim,
            intrinsic_dim,
            coords,
            volume,
            boundary_ids,
            area,
            boundary_slot,
        })
    }

    pub fn len(&self) -> usize {
        self.volume.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volume.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn volume(&self) -> &[f64] {
        &self.volume
    }

    pub fn boundary_ids(&self) -> &[usize] {
        &self.boundary_ids
    }

    pub fn area(&self) -> &[f64] {
        &self.area
    }

    pub fn num_boundary(&self) -> usize {
        self.boundary_ids.len()
    }

    /// Position of point `i` within the boundary list, if it is a boundary point.
    #[inline]
    pub fn boundary_slot(&self, i: usize) -> Option<usize> {
        self.boundary_slot[i]
    }

    /// Same geometry with the boundary set removed.
    pub fn without_boundary(&self) -> PointCloud {
        PointCloud {
            boundary_ids: Vec::new(),
            area: Vec::new(),
            boundary_slot: vec![None; self.len()],
            ..self.clone()
        }
    }
}

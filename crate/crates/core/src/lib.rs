//! Point integral solvers for `-div(p² ∇u) = f`
//! on point clouds sampling a manifold.
//!
//! The differential operator is replaced by a kernel integral operator
//! evaluated by quadrature over the cloud, which gives sparse systems that
//! need no mesh. Boundary conditions of Neumann, Robin and Dirichlet type
//! are supported, the last through an augmented Lagrangian outer iteration.
//!
//! Modules:
//! * [`cloud`]: point clouds, neighbor search, bandwidth selection
//! * [`kernel`]: kernel profiles and normalization
//! * [`assembly`]: stiffness, mass, boundary terms, interpolation
//! * [`solve`]: linear solves, ALM loop, generalized eigenproblems
//! * [`bench`]: manufactured-solution test cases and convergence studies
//! * [`tv`]: nonlocal total variation inpainting on image patches

pub mod assembly;
pub mod bench;
pub mod cloud;
pub mod error;
pub mod kernel;
pub mod solve;
pub mod sparse;
pub mod tv;

pub use assembly::{Assembler, BoundaryCondition, OperatorBundle, ProblemSpec};
pub use cloud::{Bandwidth, NeighborIndex, PointCloud};
pub use error::{PimError, Result};
pub use kernel::{KernelFamily, KernelSpec};
pub use solve::{Solution, SolveOptions};
pub use sparse::CsrMatrix;

//! Shared fixtures for the benchmarks.

use pim_core::bench::{Geometry, TestCase};
use pim_core::cloud::select_bandwidth_global;
use pim_core::kernel::DEFAULT_GAUSSIAN_TRUNCATION;
use pim_core::{KernelFamily, KernelSpec};

/// Structured disk test case with its default Gaussian kernel (knn 10).
pub fn disk(n: usize) -> (TestCase, KernelSpec) {
    let case = TestCase::new(Geometry::Disk, n).expect("disk case");
    let bandwidth = select_bandwidth_global(&case.cloud, 10).expect("bandwidth");
    let kernel = KernelSpec::new(KernelFamily::Gaussian, bandwidth, case.cloud.intrinsic_dim())
        .with_truncation(DEFAULT_GAUSSIAN_TRUNCATION);
    (case, kernel)
}

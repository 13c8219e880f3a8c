//! Memory-access characterization of the matrix-multiplication kernel.
//!
//! The kernel is the textbook `i, j, k` loop nest over row-major matrices:
//!
//! ```text
//! for i in 0..n { for j in 0..m { for k in 0..k_dim {
//!     C[i][j] += A[i][k] * B[k][j];
//! }}}
//! ```
//!
//! Only data accesses are traced. Traces feed a two-level LRU cache model whose
//! L1 miss count is the number of L2 accesses.

mod cache;
mod sweep;
mod trace;

pub use cache::{Cache, CacheConfig, CacheStats, Hierarchy, Lookup};
pub use sweep::{sweep_dimension, sweep_to_csv, SweepDim, SweepParams, SweepPoint};
pub use trace::{gen_matmul_trace, MatMulSpec, MatMulTrace, RegionGranularity};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CharacError {
    #[error("invalid cache configuration: {0}")]
    InvalidCache(String),
    #[error("invalid matmul spec: {0}")]
    InvalidSpec(String),
    #[error("matrix {0} does not fit in the 64-bit address space")]
    AddressOverflow(char),
    #[error("address {address:#x} lies outside every declared matrix range")]
    AddressOutOfRange { address: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Access {
    pub address: u64,
    pub kind: AccessKind,
    pub region: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessTrace {
    pub accesses: Vec<Access>,
    /// Number of regions; ids are `0..regions`.
    pub regions: u32,
}

/// Simulates `trace` through an L1/L2 hierarchy.
pub fn simulate_cache(
    trace: &AccessTrace,
    l1: CacheConfig,
    l2: CacheConfig,
) -> Result<CacheStats, CharacError> {
    simulate_stream(trace.accesses.iter().copied(), trace.regions as usize, l1, l2)
}

/// Same as [`simulate_cache`] over a streamed trace, so large kernels never
/// have to be materialized.
pub fn simulate_stream(
    accesses: impl IntoIterator<Item = Access>,
    regions: usize,
    l1: CacheConfig,
    l2: CacheConfig,
) -> Result<CacheStats, CharacError> {
    let mut h = Hierarchy::new(l1, l2, regions)?;
    for a in accesses {
        h.access(&a);
    }
    Ok(h.into_stats())
}

/// Streams the kernel described by `spec` straight into the simulator.
pub fn simulate_matmul(
    spec: &MatMulSpec,
    l1: CacheConfig,
    l2: CacheConfig,
) -> Result<CacheStats, CharacError> {
    spec.validate()?;
    simulate_stream(spec.trace(), spec.region_count() as usize, l1, l2)
}

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate_matmul, CacheConfig, CharacError, MatMulSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SweepDim {
    N,
    K,
    M,
}

impl SweepDim {
    pub const ALL: [SweepDim; 3] = [SweepDim::N, SweepDim::K, SweepDim::M];
}

impl fmt::Display for SweepDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepDim::N => "N",
            SweepDim::K => "K",
            SweepDim::M => "M",
        })
    }
}

impl FromStr for SweepDim {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "N" | "n" => Ok(SweepDim::N),
            "K" | "k" => Ok(SweepDim::K),
            "M" | "m" => Ok(SweepDim::M),
            _ => Err(format!("unknown dimension `{s}`, expected N, K or M")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepParams {
    pub start: u64,
    pub step: u64,
    pub limit: u64,
    pub fixed_value: u64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            start: 64,
            step: 128,
            limit: 4096,
            fixed_value: 32,
        }
    }
}

impl SweepParams {
    pub fn values(&self) -> Vec<u64> {
        if self.step == 0 {
            return Vec::new();
        }
        (0..)
            .map(|i| self.start + i * self.step)
            .take_while(|&v| v <= self.limit)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub dim: SweepDim,
    pub value: u64,
    pub l2_accesses: u64,
}

/// L2 accesses of the kernel as one dimension varies and the other two are
/// pinned to `fixed_value`. Points are simulated in parallel and returned
/// in ascending order of the swept value.
///
/// The element size, region granularity and starting address come from
/// `base`; the three matrices are re-packed for every point.
pub fn sweep_dimension(
    base: &MatMulSpec,
    dim: SweepDim,
    params: SweepParams,
    l1: CacheConfig,
    l2: CacheConfig,
) -> Result<Vec<SweepPoint>, CharacError> {
    if params.start == 0 || params.step == 0 || params.limit == 0 || params.fixed_value == 0 {
        return Err(CharacError::InvalidSpec(
            "sweep start, step, limit and fixed value must be positive".into(),
        ));
    }
    let fixed = params.fixed_value;
    params
        .values()
        .into_par_iter()
        .map(|v| {
            let (n, k, m) = match dim {
                SweepDim::N => (v, fixed, fixed),
                SweepDim::K => (fixed, v, fixed),
                SweepDim::M => (fixed, fixed, v),
            };
            let spec = MatMulSpec::packed_at(n, k, m, base.element_size, base.a_base)
                .with_granularity(base.granularity);
            let stats = simulate_matmul(&spec, l1, l2)?;
            Ok(SweepPoint {
                dim,
                value: v,
                l2_accesses: stats.l2_accesses(),
            })
        })
        .collect()
}

/// CSV with columns `dim,value,l2_accesses`.
pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dim", "value", "l2_accesses"])
        .expect("in-memory write");
    for p in points {
        w.write_record([p.dim.to_string(), p.value.to_string(), p.l2_accesses.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
}

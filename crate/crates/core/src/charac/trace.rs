use serde::{Deserialize, Serialize};

use super::{Access, AccessKind, AccessTrace, CharacError};

const PAGE: u64 = 4096;

/// How observation points split the loop nest into regions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionGranularity {
    /// The whole nest is region 0.
    Kernel,
    /// Observation points around each execution of the `j` loop: region `i`.
    #[default]
    Outer,
    /// Observation points around each execution of the `k` loop: region `i * m + j`.
    Middle,
}

/// A is `n x k`, B is `k x m`, C is `n x m`, all row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatMulSpec {
    pub n: u64,
    pub k: u64,
    pub m: u64,
    pub element_size: u64,
    pub a_base: u64,
    pub b_base: u64,
    pub c_base: u64,
    #[serde(default)]
    pub granularity: RegionGranularity,
}

fn align_up(v: u64, align: u64) -> Option<u64> {
    v.checked_add(align - 1).map(|x| x / align * align)
}

impl MatMulSpec {
    /// `int` elements with A, B and C laid out back to back on page boundaries.
    pub fn packed(n: u64, k: u64, m: u64) -> Self {
        Self::packed_at(n, k, m, 4, 0)
    }

    /// Lays A, B and C out consecutively from `base`, each starting on a page
    /// boundary. Sizes that overflow saturate and are caught by `validate`.
    pub fn packed_at(n: u64, k: u64, m: u64, element_size: u64, base: u64) -> Self {
        let bytes = |r: u64, c: u64| {
            r.checked_mul(c)
                .and_then(|x| x.checked_mul(element_size))
                .unwrap_or(u64::MAX)
        };
        let next = |start: u64, len: u64| {
            start
                .checked_add(len)
                .and_then(|end| align_up(end, PAGE))
                .unwrap_or(u64::MAX)
        };
        let a_base = align_up(base, PAGE).unwrap_or(u64::MAX);
        let b_base = next(a_base, bytes(n, k));
        let c_base = next(b_base, bytes(k, m));
        MatMulSpec {
            n,
            k,
            m,
            element_size,
            a_base,
            b_base,
            c_base,
            granularity: RegionGranularity::default(),
        }
    }

    pub fn with_granularity(mut self, granularity: RegionGranularity) -> Self {
        self.granularity = granularity;
        self
    }

    /// Half-open byte ranges of A, B and C.
    pub fn ranges(&self) -> Result<[(char, u64, u64); 3], CharacError> {
        let range = |name: char, base: u64, rows: u64, cols: u64| {
            rows.checked_mul(cols)
                .and_then(|e| e.checked_mul(self.element_size))
                .and_then(|len| base.checked_add(len))
                .map(|end| (name, base, end))
                .ok_or(CharacError::AddressOverflow(name))
        };
        Ok([
            range('A', self.a_base, self.n, self.k)?,
            range('B', self.b_base, self.k, self.m)?,
            range('C', self.c_base, self.n, self.m)?,
        ])
    }

    pub fn validate(&self) -> Result<(), CharacError> {
        if self.n == 0 || self.k == 0 || self.m == 0 {
            return Err(CharacError::InvalidSpec(format!(
                "dimensions must be at least 1, got n={} k={} m={}",
                self.n, self.k, self.m
            )));
        }
        if ![1, 2, 4, 8].contains(&self.element_size) {
            return Err(CharacError::InvalidSpec(format!(
                "element_size must be 1, 2, 4 or 8, got {}",
                self.element_size
            )));
        }
        let ranges = self.ranges()?;
        for (i, a) in ranges.iter().enumerate() {
            for b in &ranges[i + 1..] {
                if a.1 < b.2 && b.1 < a.2 {
                    return Err(CharacError::InvalidSpec(format!(
                        "matrices {} and {} overlap",
                        a.0, b.0
                    )));
                }
            }
        }
        if self.region_count_checked().is_none() {
            return Err(CharacError::InvalidSpec("too many regions".into()));
        }
        Ok(())
    }

    fn region_count_checked(&self) -> Option<u32> {
        let count = match self.granularity {
            RegionGranularity::Kernel => 1,
            RegionGranularity::Outer => self.n,
            RegionGranularity::Middle => self.n.checked_mul(self.m)?,
        };
        u32::try_from(count).ok()
    }

    pub fn region_count(&self) -> u32 {
        self.region_count_checked().unwrap_or(u32::MAX)
    }

    /// Number of accesses the kernel performs: four per innermost iteration.
    pub fn access_count(&self) -> u64 {
        4 * self.n * self.k * self.m
    }

    pub fn contains(&self, address: u64) -> bool {
        self.ranges()
            .map(|rs| rs.iter().any(|&(_, lo, hi)| (lo..hi).contains(&address)))
            .unwrap_or(false)
    }

    /// Lazy access stream of the kernel. Call `validate` first.
    pub fn trace(&self) -> MatMulTrace {
        MatMulTrace {
            spec: self.clone(),
            i: 0,
            j: 0,
            kk: 0,
            step: 0,
        }
    }
}

/// Iterator over the data accesses of the `i, j, k` kernel. Each innermost
/// iteration reads `A[i][k]`, `B[k][j]`, `C[i][j]` and then writes `C[i][j]`.
#[derive(Debug, Clone)]
pub struct MatMulTrace {
    spec: MatMulSpec,
    i: u64,
    j: u64,
    kk: u64,
    step: u8,
}

impl Iterator for MatMulTrace {
    type Item = Access;

    fn next(&mut self) -> Option<Access> {
        let s = &self.spec;
        if self.i >= s.n {
            return None;
        }
        let es = s.element_size;
        let region = match s.granularity {
            RegionGranularity::Kernel => 0,
            RegionGranularity::Outer => self.i as u32,
            RegionGranularity::Middle => (self.i * s.m + self.j) as u32,
        };
        let c_addr = s.c_base + (self.i * s.m + self.j) * es;
        let (address, kind) = match self.step {
            0 => (s.a_base + (self.i * s.k + self.kk) * es, AccessKind::Read),
            1 => (s.b_base + (self.kk * s.m + self.j) * es, AccessKind::Read),
            2 => (c_addr, AccessKind::Read),
            _ => (c_addr, AccessKind::Write),
        };
        self.step += 1;
        if self.step == 4 {
            self.step = 0;
            self.kk += 1;
            if self.kk == s.k {
                self.kk = 0;
                self.j += 1;
                if self.j == s.m {
                    self.j = 0;
                    self.i += 1;
                }
            }
        }
        Some(Access {
            address,
            kind,
            region,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let s = &self.spec;
        if self.i >= s.n {
            return (0, Some(0));
        }
        let done = 4 * ((self.i * s.m + self.j) * s.k + self.kk) + self.step as u64;
        let left = usize::try_from(s.access_count() - done).ok();
        (left.unwrap_or(usize::MAX), left)
    }
}

/// Materializes the kernel's access trace.
pub fn gen_matmul_trace(spec: &MatMulSpec) -> Result<AccessTrace, CharacError> {
    spec.validate()?;
    Ok(AccessTrace {
        accesses: spec.trace().collect(),
        regions: spec.region_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pretty(t: &AccessTrace, spec: &MatMulSpec) -> Vec<String> {
        t.accesses
            .iter()
            .map(|a| {
                let (name, lo) = spec
                    .ranges()
                    .unwrap()
                    .into_iter()
                    .find(|&(_, lo, hi)| (lo..hi).contains(&a.address))
                    .map(|(n, lo, _)| (n, lo))
                    .unwrap();
                let idx = (a.address - lo) / spec.element_size;
                let k = if a.kind == AccessKind::Read { 'r' } else { 'w' };
                format!("{k}{name}{idx}")
            })
            .collect()
    }

    #[test]
    fn single_iteration() {
        let spec = MatMulSpec::packed(1, 1, 1);
        let t = gen_matmul_trace(&spec).unwrap();
        assert_eq!(t.accesses.len(), 4);
        let writes = t
            .accesses
            .iter()
            .filter(|a| a.kind == AccessKind::Write)
            .count();
        assert_eq!(writes, 1);
        assert_eq!(pretty(&t, &spec), ["rA0", "rB0", "rC0", "wC0"]);
    }

    #[test]
    fn row_stride_of_a() {
        let spec = MatMulSpec::packed(1, 2, 1);
        let t = gen_matmul_trace(&spec).unwrap();
        assert_eq!(t.accesses.len(), 8);
        assert_eq!(t.accesses[4].address - t.accesses[0].address, spec.element_size);
    }

    #[test]
    fn two_by_two_matches_hand_unrolling() {
        let spec = MatMulSpec::packed(2, 2, 2);
        let t = gen_matmul_trace(&spec).unwrap();
        // Flat indices: A[i][k] = 2i+k, B[k][j] = 2k+j, C[i][j] = 2i+j.
        #[rustfmt::skip]
        let want = [
            "rA0","rB0","rC0","wC0", "rA1","rB2","rC0","wC0",
            "rA0","rB1","rC1","wC1", "rA1","rB3","rC1","wC1",
            "rA2","rB0","rC2","wC2", "rA3","rB2","rC2","wC2",
            "rA2","rB1","rC3","wC3", "rA3","rB3","rC3","wC3",
        ];
        assert_eq!(pretty(&t, &spec), want);
        let regions: Vec<u32> = t.accesses.iter().map(|a| a.region).collect();
        assert!(regions[..16].iter().all(|&r| r == 0));
        assert!(regions[16..].iter().all(|&r| r == 1));
        assert_eq!(t.regions, 2);
    }

    #[test]
    fn middle_granularity_regions_are_contiguous() {
        let spec = MatMulSpec::packed(2, 3, 2).with_granularity(RegionGranularity::Middle);
        let t = gen_matmul_trace(&spec).unwrap();
        let mut ids: Vec<u32> = t.accesses.iter().map(|a| a.region).collect();
        ids.dedup();
        assert_eq!(ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn invalid_specs() {
        assert!(MatMulSpec::packed(0, 1, 1).validate().is_err());
        let mut s = MatMulSpec::packed(2, 2, 2);
        s.element_size = 3;
        assert!(s.validate().is_err());
        let mut s = MatMulSpec::packed(2, 2, 2);
        s.b_base = s.a_base + 4;
        assert!(matches!(s.validate(), Err(CharacError::InvalidSpec(_))));
        let mut s = MatMulSpec::packed(2, 2, 2);
        s.c_base = u64::MAX - 4;
        assert_eq!(s.validate(), Err(CharacError::AddressOverflow('C')));
        let huge = MatMulSpec::packed(u64::MAX / 2, 4, 1);
        assert!(huge.validate().is_err());
    }

    #[test]
    fn size_hint_is_exact() {
        let spec = MatMulSpec::packed(3, 5, 2);
        let mut it = spec.trace();
        assert_eq!(it.size_hint(), (120, Some(120)));
        it.nth(6);
        assert_eq!(it.size_hint(), (113, Some(113)));
        assert_eq!(it.count(), 113);
    }
}

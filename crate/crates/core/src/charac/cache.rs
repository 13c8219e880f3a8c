use serde::{Deserialize, Serialize};

use super::{Access, AccessKind, CharacError};

/// Geometry of one set-associative cache level. Replacement is always LRU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheConfig {
    pub size: u64,
    pub line_size: u64,
    pub associativity: u64,
}

impl CacheConfig {
    pub fn new(size: u64, line_size: u64, associativity: u64) -> Result<Self, CharacError> {
        let cfg = CacheConfig {
            size,
            line_size,
            associativity,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cortex-A72 private L1 data cache: 32 KiB, 64 B lines, 2 ways.
    pub fn a72_l1d() -> Self {
        CacheConfig {
            size: 32 * 1024,
            line_size: 64,
            associativity: 2,
        }
    }

    /// Cortex-A72 cluster L2: 1 MiB, 64 B lines, 16 ways.
    pub fn a72_l2() -> Self {
        CacheConfig {
            size: 1024 * 1024,
            line_size: 64,
            associativity: 16,
        }
    }

    pub fn validate(&self) -> Result<(), CharacError> {
        let fields = [
            ("size", self.size),
            ("line_size", self.line_size),
            ("associativity", self.associativity),
        ];
        for (name, v) in fields {
            if v == 0 || !v.is_power_of_two() {
                return Err(CharacError::InvalidCache(format!(
                    "{name} = {v} must be a positive power of two"
                )));
            }
        }
        let way_bytes = self
            .line_size
            .checked_mul(self.associativity)
            .ok_or_else(|| CharacError::InvalidCache("line_size x associativity overflows".into()))?;
        if self.size % way_bytes != 0 {
            return Err(CharacError::InvalidCache(format!(
                "size {} is not divisible by line_size x associativity = {way_bytes}",
                self.size
            )));
        }
        Ok(())
    }

    pub fn sets(&self) -> u64 {
        self.size / (self.line_size * self.associativity)
    }

    /// Parses `SIZE:LINE:WAYS`, where SIZE accepts a `K` or `M` suffix.
    pub fn parse(text: &str) -> Result<Self, CharacError> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(CharacError::InvalidCache(format!(
                "expected SIZE:LINE:WAYS, got `{text}`"
            )));
        }
        let num = |s: &str| -> Result<u64, CharacError> {
            let s = s.trim();
            let (digits, mult) = match s.chars().last() {
                Some('K' | 'k') => (&s[..s.len() - 1], 1024),
                Some('M' | 'm') => (&s[..s.len() - 1], 1024 * 1024),
                _ => (s, 1),
            };
            digits
                .parse::<u64>()
                .map(|v| v * mult)
                .map_err(|_| CharacError::InvalidCache(format!("bad number `{s}`")))
        };
        Self::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Way {
    tag: u64,
    dirty: bool,
}

/// Result of a single cache lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lookup {
    pub hit: bool,
    /// Line address of a dirty victim, when the fill evicted one.
    pub writeback: Option<u64>,
}

/// One set-associative LRU cache level, write-allocate and write-back.
///
/// Each set holds its ways most-recently-used first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cache {
    config: CacheConfig,
    line_shift: u32,
    set_mask: u64,
    set_shift: u32,
    sets: Vec<Vec<Way>>,
}

impl Cache {
    pub fn new(config: CacheConfig) -> Result<Self, CharacError> {
        config.validate()?;
        let sets = config.sets();
        Ok(Cache {
            config,
            line_shift: config.line_size.trailing_zeros(),
            set_mask: sets - 1,
            set_shift: sets.trailing_zeros(),
            sets: vec![Vec::with_capacity(config.associativity as usize); sets as usize],
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn access(&mut self, address: u64, kind: AccessKind) -> Lookup {
        let line = address >> self.line_shift;
        let set_idx = (line & self.set_mask) as usize;
        let tag = line >> self.set_shift;
        let write = kind == AccessKind::Write;
        let ways = self.config.associativity as usize;
        let set = &mut self.sets[set_idx];

        if let Some(pos) = set.iter().position(|w| w.tag == tag) {
            let mut way = set.remove(pos);
            way.dirty |= write;
            set.insert(0, way);
            return Lookup {
                hit: true,
                writeback: None,
            };
        }

        let mut writeback = None;
        if set.len() == ways {
            let victim = set.pop().expect("full set has a victim");
            if victim.dirty {
                let victim_line = (victim.tag << self.set_shift) | set_idx as u64;
                writeback = Some(victim_line << self.line_shift);
            }
        }
        set.insert(0, Way { tag, dirty: write });
        Lookup {
            hit: false,
            writeback,
        }
    }
}

/// Aggregate counters of a two-level simulation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheStats {
    pub l1_accesses: u64,
    /// Every L1 miss issues exactly one L2 access.
    pub l1_misses: u64,
    pub l2_misses: u64,
    /// Dirty L1 evictions. Informational; they are not issued as L2 accesses.
    pub l1_writebacks: u64,
    pub per_region_l2: Vec<u64>,
}

impl CacheStats {
    pub fn l2_accesses(&self) -> u64 {
        self.l1_misses
    }
}

/// Private L1 in front of an L2.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    l1: Cache,
    l2: Cache,
    stats: CacheStats,
}

impl Hierarchy {
    pub fn new(l1: CacheConfig, l2: CacheConfig, regions: usize) -> Result<Self, CharacError> {
        if l2.size < l1.size {
            return Err(CharacError::InvalidCache(format!(
                "L2 size {} is smaller than L1 size {}",
                l2.size, l1.size
            )));
        }
        Ok(Hierarchy {
            l1: Cache::new(l1)?,
            l2: Cache::new(l2)?,
            stats: CacheStats {
                per_region_l2: vec![0; regions],
                ..CacheStats::default()
            },
        })
    }

    #[inline]
    pub fn access(&mut self, access: &Access) {
        self.stats.l1_accesses += 1;
        let l1 = self.l1.access(access.address, access.kind);
        if l1.writeback.is_some() {
            self.stats.l1_writebacks += 1;
        }
        if l1.hit {
            return;
        }
        self.stats.l1_misses += 1;
        let region = access.region as usize;
        if region >= self.stats.per_region_l2.len() {
            self.stats.per_region_l2.resize(region + 1, 0);
        }
        self.stats.per_region_l2[region] += 1;
        // the L2 sees the fill as a read; dirtiness lives in the L1
        if !self.l2.access(access.address, AccessKind::Read).hit {
            self.stats.l2_misses += 1;
        }
    }

    pub fn stats(&self) -> &CacheStats {
        &self.stats
    }

    pub fn into_stats(self) -> CacheStats {
        self.stats
    }
}

//! Edge-weight sources: the cost table, a functional LRU cache hierarchy and
//! branch outcome models.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::hash::keyed_unit;
use crate::trace::{InstructionRecord, OpClass};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostTable {
    /// Execution latency per op class.
    pub latency: BTreeMap<OpClass, u32>,
    /// F to D (or F to E when there is no D vertex).
    pub decode_cycles: u32,
    /// D to E.
    pub dispatch_cycles: u32,
    /// M to C for ops that do not access memory.
    pub stage_cycles: u32,
    /// Cleanup cycles after a mispredicted branch resolves.
    pub mispredict_penalty: u32,
    /// Charged on every I-cache line fetch on top of the cache latency.
    pub base_fetch_cycles: u32,
    pub fetch_bytes_per_cycle: u32,
}

impl Default for CostTable {
    fn default() -> Self {
        let latency = [
            (OpClass::IntAlu, 1),
            (OpClass::IntMul, 3),
            (OpClass::IntDiv, 12),
            (OpClass::FpAlu, 2),
            (OpClass::FpMul, 4),
            (OpClass::FpDiv, 12),
            (OpClass::Load, 1),
            (OpClass::Store, 1),
            (OpClass::Branch, 1),
            (OpClass::EdgeRead, 1),
            (OpClass::EdgeMov, 1),
            (OpClass::EdgeNull, 1),
            (OpClass::Other, 1),
        ]
        .into_iter()
        .collect();
        CostTable {
            latency,
            decode_cycles: 1,
            dispatch_cycles: 1,
            stage_cycles: 1,
            mispredict_penalty: 0,
            base_fetch_cycles: 0,
            fetch_bytes_per_cycle: 16,
        }
    }
}

impl CostTable {
    pub fn latency(&self, op: OpClass) -> Result<u32> {
        self.latency
            .get(&op)
            .copied()
            .ok_or(Error::MissingLatency(op))
    }

    pub fn validate(&self) -> Result<()> {
        if self.fetch_bytes_per_cycle == 0 {
            return Err(Error::InvalidConfig(
                "cost.fetch_bytes_per_cycle must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheLevelConfig {
    #[serde(default)]
    pub name: String,
    pub capacity: u64,
    pub line_size: u64,
    pub associativity: u32,
    pub hit_latency: u32,
}

/// Split L1s in front of optional shared levels and memory.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheConfig {
    pub l1i: Option<CacheLevelConfig>,
    pub l1d: Option<CacheLevelConfig>,
    pub shared: Vec<CacheLevelConfig>,
    pub memory_latency: u32,
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        for path in [self.l1i.as_ref(), self.l1d.as_ref()] {
            let levels: Vec<&CacheLevelConfig> =
                path.into_iter().chain(self.shared.iter()).collect();
            for l in &levels {
                let bad = |m: &str| {
                    Err(Error::InvalidConfig(format!(
                        "cache level `{}`: {m}",
                        l.name
                    )))
                };
                if !l.line_size.is_power_of_two() {
                    return bad("line_size must be a power of two");
                }
                if l.associativity == 0 {
                    return bad("associativity must be >= 1");
                }
                let set_bytes = l.line_size * u64::from(l.associativity);
                if l.capacity == 0 || l.capacity % set_bytes != 0 {
                    return bad(
                        "capacity must be a positive multiple of line_size * associativity",
                    );
                }
            }
            for pair in levels.windows(2) {
                if pair[1].hit_latency <= pair[0].hit_latency {
                    return Err(Error::InvalidConfig(
                        "cache hit latencies must strictly increase with level".into(),
                    ));
                }
            }
            if let Some(last) = levels.last() {
                if self.memory_latency <= last.hit_latency {
                    return Err(Error::InvalidConfig(
                        "memory latency must exceed the last cache level's hit latency".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Level {
    line_shift: u32,
    sets: u64,
    ways: usize,
    hit_latency: u32,
    /// Per set, tags ordered most recently used first.
    tags: Vec<Vec<u64>>,
}

impl Level {
    fn new(c: &CacheLevelConfig) -> Self {
        let sets = c.capacity / (c.line_size * u64::from(c.associativity));
        Level {
            line_shift: c.line_size.trailing_zeros(),
            sets,
            ways: c.associativity as usize,
            hit_latency: c.hit_latency,
            tags: alloc::vec![Vec::new(); sets as usize],
        }
    }

    /// Looks up `addr`, updating recency; allocates on miss.
    fn access(&mut self, addr: u64) -> bool {
        let line = addr >> self.line_shift;
        let set = &mut self.tags[(line % self.sets) as usize];
        let tag = line / self.sets;
        if let Some(pos) = set.iter().position(|&t| t == tag) {
            set[..=pos].rotate_right(1);
            return true;
        }
        if set.len() == self.ways {
            set.pop();
        }
        set.insert(0, tag);
        false
    }
}

/// Functional cache hierarchy state for one pass.
#[derive(Clone, Debug)]
pub struct CacheModel {
    l1i: Option<Level>,
    l1d: Option<Level>,
    shared: Vec<Level>,
    memory_latency: u32,
}

impl CacheModel {
    pub fn new(cfg: &CacheConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(CacheModel {
            l1i: cfg.l1i.as_ref().map(Level::new),
            l1d: cfg.l1d.as_ref().map(Level::new),
            shared: cfg.shared.iter().map(Level::new).collect(),
            memory_latency: cfg.memory_latency,
        })
    }

    /// Cycles to service `addr`: the hit latencies of every level looked
    /// at, plus memory latency when all of them miss.
    pub fn access(&mut self, addr: u64, is_instruction: bool) -> u32 {
        let first = if is_instruction {
            self.l1i.as_mut()
        } else {
            self.l1d.as_mut()
        };
        let mut total = 0;
        for level in first.into_iter().chain(self.shared.iter_mut()) {
            total += level.hit_latency;
            if level.access(addr) {
                return total;
            }
        }
        total + self.memory_latency
    }

    pub fn l1_hit_latency(&self, is_instruction: bool) -> u32 {
        let first = if is_instruction {
            self.l1i.as_ref()
        } else {
            self.l1d.as_ref()
        };
        first.or(self.shared.first()).map_or(0, |l| l.hit_latency)
    }

    pub fn iline_shift(&self) -> u32 {
        self.l1i.as_ref().map_or(6, |l| l.line_shift)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode")]
#[derive(Default)]
pub enum BranchModel {
    #[default]
    Recorded,
    Stochastic { accuracy: f64, seed: u64 },
}


impl BranchModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            BranchModel::Stochastic { accuracy, .. } if !(0.0..=1.0).contains(accuracy) => Err(
                Error::InvalidConfig("branch.accuracy must lie in [0, 1]".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn with_seed(&self, new_seed: u64) -> Self {
        match self {
            BranchModel::Stochastic { accuracy, .. } => BranchModel::Stochastic {
                accuracy: *accuracy,
                seed: new_seed,
            },
            BranchModel::Recorded => BranchModel::Recorded,
        }
    }

    /// Whether the branch in `rec` was predicted correctly. A recorded
    /// outcome always wins.
    pub fn predict(&self, rec: &InstructionRecord) -> Result<bool> {
        if let Some(ok) = rec.recorded.bp_correct {
            return Ok(ok);
        }
        match self {
            BranchModel::Recorded => Err(Error::MissingBranchOutcome { seq: rec.seq }),
            BranchModel::Stochastic { accuracy, seed } => {
                Ok(keyed_unit(*seed, rec.seq) < *accuracy)
            }
        }
    }
}

/// Lane-independent costs of one instruction. Lane-dependent parts (the
/// cost table) are combined with these when edge weights are built.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedCosts {
    /// Recorded fetch cycles; replaces the cache-derived fetch weight.
    pub fetch_cycles: Option<u32>,
    /// Recorded fetch cycles after a redirect.
    pub refetch_cycles: Option<u32>,
    /// I-cache cycles for this instruction's line.
    pub line_access: u32,
    /// The instruction starts a new I-cache line.
    pub new_line: bool,
    /// Memory access cycles (memory ops only).
    pub mem_cycles: u32,
    /// Portion of `mem_cycles` spent beyond the L1 hit.
    pub miss_cycles: u32,
    /// Recorded or rule-imposed execution latency.
    pub exec_cycles: Option<u32>,
    /// Branches only.
    pub bp_correct: Option<bool>,
}

impl ResolvedCosts {
    /// w_f under `table`.
    pub fn fetch(&self, table: &CostTable) -> u32 {
        match self.fetch_cycles {
            Some(c) => c,
            None if self.new_line => table.base_fetch_cycles + self.line_access,
            None => 0,
        }
    }

    /// w_f' under `table`: the line is always re-requested.
    pub fn refetch(&self, table: &CostTable) -> u32 {
        match (self.refetch_cycles, self.fetch_cycles) {
            (Some(c), _) | (None, Some(c)) => c,
            (None, None) => table.base_fetch_cycles + self.line_access,
        }
    }

    pub fn exec(&self, op: OpClass, table: &CostTable) -> Result<u32> {
        match self.exec_cycles {
            Some(c) => Ok(c),
            None => table.latency(op),
        }
    }

    pub fn is_miss(&self) -> bool {
        self.miss_cycles > 0
    }
}

/// Sequential cost resolution over a trace.
#[derive(Clone, Debug)]
pub struct Resolver {
    cache: CacheModel,
    branch: BranchModel,
    last_line: Option<u64>,
}

impl Resolver {
    pub fn new(cache: &CacheConfig, branch: &BranchModel) -> Result<Self> {
        branch.validate()?;
        Ok(Resolver {
            cache: CacheModel::new(cache)?,
            branch: branch.clone(),
            last_line: None,
        })
    }

    /// Fails if `table` has no latency for the op and none was recorded.
    pub fn resolve(&mut self, rec: &InstructionRecord, table: &CostTable) -> Result<ResolvedCosts> {
        self.resolve_with(rec, table, true)
    }

    /// I-cache cycles of fetching the line holding `pc` unconditionally.
    pub fn fetch_line(&mut self, pc: u64) -> u32 {
        self.last_line = Some(pc >> self.cache.iline_shift());
        self.cache.access(pc, true)
    }

    /// As [`Resolver::resolve`]; with `fetch` off the I-cache is left alone
    /// (block members are fetched with their block).
    pub fn resolve_with(
        &mut self,
        rec: &InstructionRecord,
        table: &CostTable,
        fetch: bool,
    ) -> Result<ResolvedCosts> {
        if rec.recorded.exec_cycles.is_none() {
            table.latency(rec.op)?;
        }
        let line = rec.pc >> self.cache.iline_shift();
        let new_line = fetch && self.last_line != Some(line);
        if fetch {
            self.last_line = Some(line);
        }
        let line_access = if rec.recorded.fetch_cycles.is_some() || !fetch {
            0
        } else if new_line {
            self.cache.access(rec.pc, true)
        } else {
            self.cache.l1_hit_latency(true)
        };

        let (mem_cycles, miss_cycles) = match rec.mem_addr {
            Some(addr) => {
                let mem = match rec.recorded.mem_cycles {
                    Some(m) => m,
                    None => self.cache.access(addr, false),
                };
                (mem, mem.saturating_sub(self.cache.l1_hit_latency(false)))
            }
            None => (0, 0),
        };

        let bp_correct = if rec.op == OpClass::Branch {
            Some(self.branch.predict(rec)?)
        } else {
            None
        };

        Ok(ResolvedCosts {
            fetch_cycles: rec.recorded.fetch_cycles,
            refetch_cycles: None,
            line_access,
            new_line,
            mem_cycles,
            miss_cycles,
            exec_cycles: rec.recorded.exec_cycles,
            bp_correct,
        })
    }
}

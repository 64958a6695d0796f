//! Machine configuration and the full analysis configuration bundle.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cost::{BranchModel, CacheConfig, CostTable};
use crate::edge_isa::BlockFormat;
use crate::hash::Fnv64;
use crate::trace::OpClass;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    #[default]
    InOrder,
    OutOfOrder,
    Edge,
}

/// Which instructions get an M vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemStage {
    All,
    #[default]
    MemoryOps,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct VertexSchema {
    /// Separate D vertex between F and E.
    pub dispatch: bool,
    pub memory: MemStage,
}

impl VertexSchema {
    pub fn has_m(&self, op: OpClass) -> bool {
        match self.memory {
            MemStage::All => true,
            MemStage::MemoryOps => op.is_memory(),
            MemStage::None => false,
        }
    }
}

/// A class of functional units serving a set of op classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitConfig {
    pub name: String,
    pub ops: Vec<OpClass>,
    pub count: u32,
    #[serde(default = "yes")]
    pub pipelined: bool,
    /// Maximum instructions in flight per unit (pipelined units only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipe_depth: Option<u32>,
}

fn yes() -> bool {
    true
}

/// Parameters of block-structured cores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeCoreConfig {
    pub format: BlockFormat,
    pub store_commits_per_cycle: u32,
    pub gpr_commits_per_cycle: u32,
    /// Blocks in flight when each one is small.
    pub max_blocks: u32,
    pub small_block: u32,
    /// Instruction capacity of the window.
    pub window_instructions: u32,
    /// Extra cycles for a value crossing window partitions.
    pub partition_cost: u32,
    pub partitions: u32,
}

impl Default for EdgeCoreConfig {
    fn default() -> Self {
        EdgeCoreConfig {
            format: BlockFormat::default(),
            store_commits_per_cycle: 2,
            gpr_commits_per_cycle: 4,
            max_blocks: 4,
            small_block: 32,
            window_instructions: 128,
            partition_cost: 1,
            partitions: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MachineConfig {
    pub pipeline: PipelineKind,
    pub schema: VertexSchema,
    pub fetch_width: u32,
    /// D-vertex bandwidth; defaults to the fetch width.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dispatch_width: Option<u32>,
    pub issue_width: u32,
    pub commit_width: u32,
    /// Op classes not listed in any unit have unlimited units.
    pub units: Vec<UnitConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lsq_size: Option<u32>,
    /// Outstanding L1D misses; unlimited when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mshrs: Option<u32>,
    /// Scheduling window (ROB) size for out-of-order cores.
    pub window: u32,
    /// Resident instruction slots kept after retirement.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lookback: Option<u64>,
    /// Largest trace the two-pass out-of-order model accepts.
    pub basic_cap: u64,
    pub edge: EdgeCoreConfig,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            pipeline: PipelineKind::InOrder,
            schema: VertexSchema::default(),
            fetch_width: 1,
            dispatch_width: None,
            issue_width: 1,
            commit_width: 1,
            units: Vec::new(),
            lsq_size: None,
            mshrs: None,
            window: 192,
            lookback: None,
            basic_cap: 1_000_000,
            edge: EdgeCoreConfig::default(),
        }
    }
}

impl MachineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for (name, w) in [
            ("fetch_width", self.fetch_width),
            ("issue_width", self.issue_width),
            ("commit_width", self.commit_width),
            ("window", self.window),
            ("dispatch_width", self.dispatch_width.unwrap_or(1)),
            ("lsq_size", self.lsq_size.unwrap_or(1)),
            ("mshrs", self.mshrs.unwrap_or(1)),
        ] {
            if w == 0 {
                return bad(format!("machine.{name} must be >= 1"));
            }
        }
        let mut seen: Vec<OpClass> = Vec::new();
        for u in &self.units {
            if u.count == 0 {
                return bad(format!("unit `{}`: count must be >= 1", u.name));
            }
            if u.pipe_depth == Some(0) {
                return bad(format!("unit `{}`: pipe_depth must be >= 1", u.name));
            }
            for &op in &u.ops {
                if seen.contains(&op) {
                    return bad(format!("op class {op} is served by two unit classes"));
                }
                seen.push(op);
            }
        }
        let e = &self.edge;
        if e.store_commits_per_cycle == 0 || e.gpr_commits_per_cycle == 0 || e.partitions == 0 {
            return bad("machine.edge commit rates and partitions must be >= 1".into());
        }
        if e.max_blocks == 0 || e.window_instructions == 0 {
            return bad("machine.edge window must hold at least one block".into());
        }
        e.format.validate()
    }

    /// Index of the unit class serving `op`, if any.
    pub fn unit_for(&self, op: OpClass) -> Option<usize> {
        self.units.iter().position(|u| u.ops.contains(&op))
    }

    pub fn dispatch_width(&self) -> u32 {
        self.dispatch_width.unwrap_or(self.fetch_width)
    }

    pub fn lookback(&self) -> u64 {
        self.lookback.unwrap_or_else(|| {
            let bw = 4 * u64::from(
                self.fetch_width
                    .max(self.commit_width)
                    .max(self.issue_width),
            );
            u64::from(self.window)
                .max(bw)
                .max(crate::deg::DEFAULT_LOOKBACK)
        })
    }
}

/// Everything needed to analyze a trace.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub machine: MachineConfig,
    pub cost: CostTable,
    pub cache: CacheConfig,
    pub branch: BranchModel,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.machine.validate()?;
        self.cost.validate()?;
        self.cache.validate()?;
        self.branch.validate()
    }

    /// Stable digest of the canonical JSON form.
    pub fn digest(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h = Fnv64::default();
        h.write(json.as_bytes());
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = Config::default();
        c.validate().unwrap();
        let json = serde_json::to_string(&c).unwrap();
        let back: Config = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
    }

    #[test]
    fn zero_widths_and_shared_ops_are_rejected() {
        let mut m = MachineConfig::default();
        m.issue_width = 0;
        assert!(m.validate().is_err());
        let mut m = MachineConfig::default();
        let unit = |name: &str| UnitConfig {
            name: name.into(),
            ops: alloc::vec![OpClass::IntAlu],
            count: 1,
            pipelined: true,
            pipe_depth: None,
        };
        m.units = alloc::vec![unit("a"), unit("b")];
        assert!(m.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: Config = serde_json::from_str(r#"{"machine":{"issue_width":4}}"#).unwrap();
        assert_eq!(c.machine.issue_width, 4);
        assert_eq!(c.machine.fetch_width, 1);
        assert_eq!(c.cost, CostTable::default());
    }
}

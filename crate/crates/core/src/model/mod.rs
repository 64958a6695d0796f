//! Core models that turn a resolved trace into an event-dependence graph.
//!
//! * [`model_ino_core`]: in-order issue, one pass, constant memory.
//! * [`model_ooo_core_basic`]: out-of-order issue over the whole graph held
//!   in memory, scheduling E vertices in critical-path order.
//! * [`model_ooo_core_advanced`]: the same scheduling over a sliding window,
//!   exact or approximate.

pub(crate) mod base;
mod ino;
mod ooo;
pub(crate) mod scoreboard;

use alloc::vec::Vec;

use serde::Serialize;
use smallvec::SmallVec;

use crate::config::MachineConfig;
use crate::cost::{CostTable, ResolvedCosts};
use crate::deg::{CriticalPath, Deg, Edge, VertexId, WeightVector};
use crate::edge_isa::BlockFormat;
use crate::oracle::ScheduleEntry;
use crate::trace::InstructionRecord;
use crate::Result;

pub use ino::model_ino_core;
pub use ooo::{model_ooo_core_advanced, model_ooo_core_basic};
pub use scoreboard::{Scoreboard, SlotGrant};

/// Per-lane cost parameters of one pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LaneParams {
    pub cost: CostTable,
    /// Zero every fetch-cycle component.
    pub ideal_fetch: bool,
    /// Block format for block-structured cores; the machine's otherwise.
    pub block_format: Option<BlockFormat>,
}

impl LaneParams {
    pub fn new(cost: CostTable) -> Self {
        LaneParams {
            cost,
            ideal_fetch: false,
            block_format: None,
        }
    }
}

/// How value prediction treats a load's outgoing register edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueMark {
    /// Consumers do not wait for the load.
    Predicted,
    /// Consumers wait for the load plus a recovery penalty.
    Mispredicted { penalty: u32 },
}

/// A trace record with its lane-independent resolved costs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedInstr {
    pub rec: InstructionRecord,
    pub costs: ResolvedCosts,
    pub value: Option<ValueMark>,
}

impl ResolvedInstr {
    pub fn new(rec: InstructionRecord, costs: ResolvedCosts) -> Self {
        ResolvedInstr {
            rec,
            costs,
            value: None,
        }
    }

    fn mispredicted(&self) -> bool {
        self.costs.bp_correct == Some(false)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BuildOptions {
    /// Record argmax parents and backtrack every lane's critical path.
    pub provenance: bool,
    /// Keep every edge (small graphs only).
    pub edge_log: bool,
    /// Record per-instruction event times for replay checking.
    pub schedule: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ModelOutput {
    /// Cycles per lane: cp of the last instruction's final vertex.
    pub totals: Vec<u64>,
    /// Committed program instructions.
    pub instructions: u64,
    /// Records processed (after transformations).
    pub records: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub paths: Vec<CriticalPath>,
    #[serde(skip)]
    pub edges: Option<Vec<Edge>>,
    /// Per lane, per instruction event times.
    #[serde(skip)]
    pub schedule: Option<Vec<Vec<ScheduleEntry>>>,
    pub peak_live: u64,
}

/// Lane-expanded weights of one instruction.
#[derive(Clone, Debug)]
pub(crate) struct LaneWeights {
    pub exec: WeightVector,
    pub decode: WeightVector,
    pub dispatch: WeightVector,
    pub stage: WeightVector,
    pub penalty: WeightVector,
    pub fetch: WeightVector,
    pub refetch: WeightVector,
}

impl LaneWeights {
    pub fn new(ins: &ResolvedInstr, lanes: &[LaneParams]) -> Result<Self> {
        let mut exec: SmallVec<[u64; 4]> = SmallVec::with_capacity(lanes.len());
        for l in lanes {
            exec.push(u64::from(ins.costs.exec(ins.rec.op, &l.cost)?));
        }
        let n = lanes.len();
        let by =
            |f: &dyn Fn(&LaneParams) -> u32| WeightVector::from_fn(n, |i| u64::from(f(&lanes[i])));
        Ok(LaneWeights {
            exec: WeightVector::from_slice(&exec),
            decode: by(&|l| l.cost.decode_cycles),
            dispatch: by(&|l| l.cost.dispatch_cycles),
            stage: by(&|l| l.cost.stage_cycles),
            penalty: by(&|l| l.cost.mispredict_penalty),
            fetch: by(&|l| {
                if l.ideal_fetch {
                    0
                } else {
                    ins.costs.fetch(&l.cost)
                }
            }),
            refetch: by(&|l| {
                if l.ideal_fetch {
                    0
                } else {
                    ins.costs.refetch(&l.cost)
                }
            }),
        })
    }
}

/// Vertices created for one instruction.
#[derive(Clone, Debug)]
pub(crate) struct InstrVertices {
    pub seq: u64,
    pub f: VertexId,
    pub d: Option<VertexId>,
    pub e: VertexId,
    pub m: Option<VertexId>,
    pub ec: Option<VertexId>,
    pub c: VertexId,
    pub unit: Option<usize>,
    pub mem: bool,
    pub exec: WeightVector,
}

impl InstrVertices {
    pub fn all(&self) -> impl Iterator<Item = VertexId> + '_ {
        [
            Some(self.f),
            self.d,
            Some(self.e),
            self.m,
            self.ec,
            Some(self.c),
        ]
        .into_iter()
        .flatten()
    }
}

/// A bounded FIFO of vertices kept pinned in the graph.
#[derive(Clone, Debug)]
pub(crate) struct PinnedRing<T> {
    cap: usize,
    items: alloc::collections::VecDeque<(VertexId, T)>,
}

impl<T> PinnedRing<T> {
    pub fn new(cap: usize) -> Self {
        PinnedRing {
            cap,
            items: alloc::collections::VecDeque::with_capacity(cap.min(1024)),
        }
    }

    /// Element `k` positions back from the newest (1 = newest).
    pub fn back(&self, k: usize) -> Option<&(VertexId, T)> {
        let n = self.items.len();
        (k >= 1 && k <= n).then(|| &self.items[n - k])
    }

    pub fn is_full(&self) -> bool {
        self.items.len() == self.cap
    }

    pub fn oldest(&self) -> Option<&(VertexId, T)> {
        self.items.front()
    }

    pub fn push(&mut self, g: &mut Deg, v: VertexId, t: T) -> Result<()> {
        if self.cap == 0 {
            return Ok(());
        }
        if self.items.len() == self.cap {
            if let Some((old, _)) = self.items.pop_front() {
                g.unpin(old);
            }
        }
        g.pin(v)?;
        self.items.push_back((v, t));
        Ok(())
    }
}

pub(crate) fn finish_output(
    g: &Deg,
    last: Option<VertexId>,
    instructions: u64,
    records: u64,
    opts: &BuildOptions,
    schedule: Option<Vec<Vec<ScheduleEntry>>>,
) -> Result<ModelOutput> {
    let lanes = g.lanes();
    let totals = match last {
        Some(v) => g.cp(v)?.as_slice().to_vec(),
        None => alloc::vec![0; lanes],
    };
    let mut paths = Vec::new();
    if opts.provenance {
        if let Some(v) = last {
            for lane in 0..lanes {
                paths.push(g.backtrack_critical_path(v, lane)?);
            }
        }
    }
    Ok(ModelOutput {
        totals,
        instructions,
        records,
        paths,
        edges: g.edge_log().map(<[Edge]>::to_vec),
        schedule,
        peak_live: g.peak_live(),
    })
}

fn schedule_entries(g: &Deg, iv: &InstrVertices) -> Result<Vec<ScheduleEntry>> {
    let f = g.cp(iv.f)?;
    let e = g.cp(iv.e)?;
    let c = g.cp(iv.c)?;
    let d = iv.d.map(|d| g.cp(d)).transpose()?;
    Ok((0..g.lanes())
        .map(|l| ScheduleEntry {
            seq: iv.seq,
            unit: iv.unit,
            mem: iv.mem,
            fetch: f[l],
            dispatch: d.map(|d| d[l]),
            issue: e[l],
            latency: iv.exec[l],
            commit: c[l],
        })
        .collect())
}

pub(crate) fn push_schedule(
    sched: &mut Option<Vec<Vec<ScheduleEntry>>>,
    g: &Deg,
    iv: &InstrVertices,
) -> Result<()> {
    if let Some(s) = sched.as_mut() {
        for (lane, entry) in schedule_entries(g, iv)?.into_iter().enumerate() {
            s[lane].push(entry);
        }
    }
    Ok(())
}

pub(crate) fn check_lanes(machine: &MachineConfig, lanes: &[LaneParams]) -> Result<()> {
    machine.validate()?;
    if lanes.is_empty() {
        return Err(crate::Error::InvalidConfig(
            "a pass needs at least one lane".into(),
        ));
    }
    for l in lanes {
        l.cost.validate()?;
    }
    Ok(())
}

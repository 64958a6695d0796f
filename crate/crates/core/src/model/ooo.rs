//! Out-of-order issue: E vertices are scheduled in ascending order of their
//! critical-path length (ties to the older instruction); each scheduled E
//! receives issue-bandwidth and functional-unit edges from the E vertices
//! scheduled before it.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec::Vec;

use super::base::BaseBuilder;
use super::scoreboard::Scoreboard;
use super::{
    check_lanes, finish_output, push_schedule, BuildOptions, InstrVertices, LaneParams,
    ModelOutput, PinnedRing, ResolvedInstr,
};
use crate::config::{MachineConfig, PipelineKind};
use crate::deg::{Deg, DegOptions, EdgeKind, VertexId, VertexKind, WeightVector};
use crate::{Error, Result};

struct IssueState {
    ibw: usize,
    issued: PinnedRing<()>,
    sb: Scoreboard,
}

impl IssueState {
    fn new(machine: &MachineConfig) -> Self {
        IssueState {
            ibw: machine.issue_width as usize,
            issued: PinnedRing::new(machine.issue_width as usize),
            sb: Scoreboard::new(machine),
        }
    }

    /// Adds the structural edges of a newly scheduled E vertex.
    fn schedule(&mut self, g: &mut Deg, iv: &InstrVertices) -> Result<()> {
        if let Some(&(old, ())) = self.issued.back(self.ibw).filter(|_| self.issued.is_full()) {
            g.connect(
                old,
                iv.e,
                EdgeKind::IssueBandwidth,
                WeightVector::splat(g.lanes(), 1),
            )?;
        }
        self.issued.push(g, iv.e, ())?;
        if let Some(u) = iv.unit {
            self.sb.assign(g, u, iv.e, iv.ec, &iv.exec)?;
        }
        Ok(())
    }
}

fn check_ooo(machine: &MachineConfig, lanes: &[LaneParams]) -> Result<()> {
    check_lanes(machine, lanes)?;
    if machine.pipeline != PipelineKind::OutOfOrder {
        return Err(Error::WrongPipeline("out_of_order"));
    }
    Ok(())
}

/// Two passes over a graph held entirely in memory: build the in-order
/// base graph, then schedule E vertices by their current critical-path
/// length, propagating every structural delay to the descendants and
/// re-keying the affected E vertices before the next pick.
pub fn model_ooo_core_basic<I>(
    trace: I,
    machine: &MachineConfig,
    lanes: &[LaneParams],
    opts: &BuildOptions,
) -> Result<ModelOutput>
where
    I: IntoIterator<Item = Result<ResolvedInstr>>,
{
    check_ooo(machine, lanes)?;
    let n = lanes.len();
    let mut g = Deg::new(DegOptions {
        lanes: n,
        lookback: u64::MAX,
        provenance: opts.provenance,
        edge_log: opts.edge_log,
    });
    let mut base = BaseBuilder::new(machine, lanes);
    let mut ivs: Vec<InstrVertices> = Vec::new();
    for ins in trace {
        if ivs.len() as u64 >= machine.basic_cap {
            return Err(Error::TraceTooLarge {
                cap: machine.basic_cap,
            });
        }
        ivs.push(base.add(&mut g, &ins?)?);
    }
    let first = ivs.first().map_or(0, |iv| iv.seq);
    let idx = |v: VertexId| (v.seq - first) as usize;

    let mut keys: Vec<u64> = ivs
        .iter()
        .map(|iv| g.cp(iv.e).map(|w| w[0]))
        .collect::<Result<_>>()?;
    let mut popped = alloc::vec![false; ivs.len()];
    let mut list: BTreeSet<(u64, usize)> = keys.iter().copied().zip(0..).collect();
    let mut issue = IssueState::new(machine);
    let mut changed = Vec::new();
    while let Some((_, i)) = list.pop_first() {
        popped[i] = true;
        issue.schedule(&mut g, &ivs[i])?;
        changed.clear();
        g.propagate(ivs[i].e, &mut changed)?;
        for &c in &changed {
            if c.kind != VertexKind::E {
                continue;
            }
            let j = idx(c);
            if popped[j] {
                continue;
            }
            let k = g.cp(c)?[0];
            if k != keys[j] {
                list.remove(&(keys[j], j));
                keys[j] = k;
                list.insert((k, j));
            }
        }
    }

    g.set_track_release(true);
    let mut stack: Vec<VertexId> = ivs
        .iter()
        .flat_map(|iv| iv.all())
        .filter(|&v| g.pending(v) == 0)
        .collect();
    stack.reverse();
    while let Some(v) = stack.pop() {
        g.finalize_vertex(v)?;
        g.take_released(&mut stack);
    }
    let mut schedule = opts.schedule.then(|| alloc::vec![Vec::new(); n]);
    for iv in &ivs {
        if !g.is_finalized(iv.c) {
            return Err(Error::Cycle);
        }
        push_schedule(&mut schedule, &g, iv)?;
    }
    let last = ivs.last().map(|iv| iv.c);
    finish_output(&g, last, base.instructions, base.records, opts, schedule)
}

struct Slot {
    iv: InstrVertices,
    scheduled: bool,
}

/// Sliding-window scheduler. In exact mode an E vertex becomes a candidate
/// once all of its parents are final, keyed by its final critical-path
/// length. In approximate mode every E is keyed once, by its length when
/// its instruction enters the window, and never re-keyed.
struct WindowEngine {
    g: Deg,
    base: BaseBuilder,
    issue: IssueState,
    exact: bool,
    window: usize,
    /// Admitted instructions that are not yet retired, oldest first.
    slots: VecDeque<Slot>,
    /// Seq of `slots[0]`.
    front_seq: u64,
    /// Oldest not yet scheduled instruction.
    head: u64,
    next_seq: u64,
    ready: BTreeSet<(u64, u64)>,
    work: Vec<VertexId>,
    schedule: Option<Vec<Vec<ScheduleRows>>>,
    last: Option<VertexId>,
}

type ScheduleRows = crate::oracle::ScheduleEntry;

impl WindowEngine {
    fn slot(&self, seq: u64) -> &Slot {
        &self.slots[(seq - self.front_seq) as usize]
    }

    fn admit(&mut self, ins: ResolvedInstr) -> Result<()> {
        let iv = self.base.add(&mut self.g, &ins)?;
        if self.slots.is_empty() {
            self.front_seq = iv.seq;
            self.head = iv.seq;
        }
        self.next_seq = iv.seq + 1;
        if !self.exact {
            let k = self.g.cp(iv.e)?[0];
            self.ready.insert((k, iv.seq));
        }
        let roots: Vec<VertexId> = iv.all().filter(|&v| self.g.pending(v) == 0).collect();
        self.slots.push_back(Slot {
            iv,
            scheduled: false,
        });
        self.work.extend(roots.into_iter().rev());
        self.cascade()
    }

    /// Finalizes everything in the work list and whatever that releases.
    fn cascade(&mut self) -> Result<()> {
        while let Some(v) = self.work.pop() {
            if v.kind == VertexKind::E {
                if self.exact {
                    let k = self.g.cp(v)?[0];
                    self.ready.insert((k, v.seq));
                }
                continue;
            }
            self.g.finalize_vertex(v)?;
            self.g.take_released(&mut self.work);
        }
        Ok(())
    }

    fn pop(&mut self) -> Result<bool> {
        let Some((_, seq)) = self.ready.pop_first() else {
            return Ok(false);
        };
        let iv = self.slot(seq).iv.clone();
        if self.g.pending(iv.e) > 0 {
            return Err(Error::UnfinalizedParent(iv.e));
        }
        self.issue.schedule(&mut self.g, &iv)?;
        self.g.finalize_vertex(iv.e)?;
        self.g.take_released(&mut self.work);
        self.cascade()?;
        let i = (seq - self.front_seq) as usize;
        self.slots[i].scheduled = true;
        while self.head < self.next_seq && self.slot(self.head).scheduled {
            self.head += 1;
        }
        Ok(true)
    }

    fn retire(&mut self) -> Result<()> {
        while let Some(front) = self.slots.front() {
            if !front.scheduled || !front.iv.all().all(|v| self.g.is_finalized(v)) {
                break;
            }
            let slot = self.slots.pop_front().expect("non-empty");
            push_schedule(&mut self.schedule, &self.g, &slot.iv)?;
            self.g.retire_through(slot.iv.seq)?;
            self.last = Some(slot.iv.c);
            self.front_seq += 1;
        }
        Ok(())
    }

    fn in_window(&self) -> usize {
        (self.next_seq - self.head) as usize
    }
}

/// Sliding-window scheduling with memory bounded by the window and the
/// look-back. With the whole trace inside one window, exact mode gives the
/// same result as [`model_ooo_core_basic`].
pub fn model_ooo_core_advanced<I>(
    trace: I,
    machine: &MachineConfig,
    lanes: &[LaneParams],
    opts: &BuildOptions,
    approximate: bool,
) -> Result<ModelOutput>
where
    I: IntoIterator<Item = Result<ResolvedInstr>>,
{
    check_ooo(machine, lanes)?;
    let n = lanes.len();
    let mut g = Deg::new(DegOptions {
        lanes: n,
        lookback: machine.lookback(),
        provenance: opts.provenance,
        edge_log: opts.edge_log,
    });
    g.set_track_release(true);
    let mut eng = WindowEngine {
        g,
        base: BaseBuilder::new(machine, lanes),
        issue: IssueState::new(machine),
        exact: !approximate,
        window: machine.window as usize,
        slots: VecDeque::new(),
        front_seq: 0,
        head: 0,
        next_seq: 0,
        ready: BTreeSet::new(),
        work: Vec::new(),
        schedule: opts.schedule.then(|| alloc::vec![Vec::new(); n]),
        last: None,
    };
    let mut trace = trace.into_iter();
    let mut exhausted = false;
    loop {
        while !exhausted && (eng.slots.is_empty() || eng.in_window() < eng.window) {
            match trace.next() {
                Some(ins) => eng.admit(ins?)?,
                None => exhausted = true,
            }
        }
        if !eng.pop()? {
            break;
        }
        eng.retire()?;
    }
    eng.retire()?;
    if !eng.slots.is_empty() {
        return Err(Error::Cycle);
    }
    let WindowEngine {
        g,
        base,
        schedule,
        last,
        ..
    } = eng;
    finish_output(&g, last, base.instructions, base.records, opts, schedule)
}

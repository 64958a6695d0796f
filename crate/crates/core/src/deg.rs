//! The streaming, vector-weighted event-dependence graph.
//!
//! Vertices are grouped per dynamic instruction into slots held in a deque.
//! Slots older than the look-back window are evicted once retired; vertices
//! that builders still need to reference after eviction are kept alive in a
//! small frozen map through [`Deg::pin`].

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;
use core::fmt;
use core::ops::Index;

use serde::Serialize;
use smallvec::SmallVec;

use crate::trace::OpClass;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum VertexKind {
    F,
    D,
    E,
    M,
    EC,
    C,
    BF,
    BC,
}

impl VertexKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VertexKind::F => "F",
            VertexKind::D => "D",
            VertexKind::E => "E",
            VertexKind::M => "M",
            VertexKind::EC => "EC",
            VertexKind::C => "C",
            VertexKind::BF => "BF",
            VertexKind::BC => "BC",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct VertexId {
    pub seq: u64,
    pub kind: VertexKind,
}

impl VertexId {
    pub const fn new(seq: u64, kind: VertexKind) -> Self {
        VertexId { seq, kind }
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.as_str(), self.seq)
    }
}

/// Shorthand constructors, e.g. `v::e(3)`.
pub mod v {
    use super::{VertexId, VertexKind};

    pub const fn f(seq: u64) -> VertexId {
        VertexId::new(seq, VertexKind::F)
    }
    pub const fn d(seq: u64) -> VertexId {
        VertexId::new(seq, VertexKind::D)
    }
    pub const fn e(seq: u64) -> VertexId {
        VertexId::new(seq, VertexKind::E)
    }
    pub const fn m(seq: u64) -> VertexId {
        VertexId::new(seq, VertexKind::M)
    }
    pub const fn ec(seq: u64) -> VertexId {
        VertexId::new(seq, VertexKind::EC)
    }
    pub const fn c(seq: u64) -> VertexId {
        VertexId::new(seq, VertexKind::C)
    }
    pub const fn bf(seq: u64) -> VertexId {
        VertexId::new(seq, VertexKind::BF)
    }
    pub const fn bc(seq: u64) -> VertexId {
        VertexId::new(seq, VertexKind::BC)
    }
}

/// One cycle count per lane.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct WeightVector(SmallVec<[u64; 4]>);

impl WeightVector {
    pub fn zeros(lanes: usize) -> Self {
        WeightVector(SmallVec::from_elem(0, lanes))
    }

    pub fn splat(lanes: usize, w: u64) -> Self {
        WeightVector(SmallVec::from_elem(w, lanes))
    }

    pub fn from_slice(w: &[u64]) -> Self {
        WeightVector(SmallVec::from_slice(w))
    }

    pub fn from_fn(lanes: usize, f: impl FnMut(usize) -> u64) -> Self {
        WeightVector((0..lanes).map(f).collect())
    }

    pub fn lanes(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.0.iter().copied()
    }

    pub fn set(&mut self, lane: usize, w: u64) {
        self.0[lane] = w;
    }

    pub fn checked_add(&self, other: &WeightVector) -> Result<WeightVector> {
        let mut out = self.clone();
        for (a, b) in out.0.iter_mut().zip(other.0.iter()) {
            *a = a.checked_add(*b).ok_or(Error::Overflow)?;
        }
        Ok(out)
    }

    /// Lane-wise `self = max(self, other)`; true if any lane grew.
    pub fn max_assign(&mut self, other: &WeightVector) -> bool {
        let mut grew = false;
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            if *b > *a {
                *a = *b;
                grew = true;
            }
        }
        grew
    }

    pub fn max_lane(&self) -> u64 {
        self.iter().max().unwrap_or(0)
    }
}

impl Index<usize> for WeightVector {
    type Output = u64;

    fn index(&self, lane: usize) -> &u64 {
        &self.0[lane]
    }
}

/// Critical-path breakdown buckets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Category {
    Fetch,
    DecodeDispatch,
    Int,
    Fp,
    MulDiv,
    Load,
    Store,
    Commit,
    BranchResolve,
    IssueStructural,
    BlockCommit,
    Other,
}

impl Category {
    pub const ALL: [Category; 12] = [
        Category::Fetch,
        Category::DecodeDispatch,
        Category::Int,
        Category::Fp,
        Category::MulDiv,
        Category::Load,
        Category::Store,
        Category::Commit,
        Category::BranchResolve,
        Category::IssueStructural,
        Category::BlockCommit,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Fetch => "fetch",
            Category::DecodeDispatch => "decode_dispatch",
            Category::Int => "int",
            Category::Fp => "fp",
            Category::MulDiv => "mul_div",
            Category::Load => "load",
            Category::Store => "store",
            Category::Commit => "commit",
            Category::BranchResolve => "branch_resolve",
            Category::IssueStructural => "issue_structural",
            Category::BlockCommit => "block_commit",
            Category::Other => "other",
        }
    }

    /// Bucket charged for executing an op of class `op`.
    pub fn of_op(op: OpClass) -> Category {
        match op {
            OpClass::IntAlu | OpClass::Other => Category::Int,
            OpClass::EdgeRead | OpClass::EdgeMov | OpClass::EdgeNull => Category::Int,
            OpClass::FpAlu => Category::Fp,
            OpClass::IntMul | OpClass::IntDiv | OpClass::FpMul | OpClass::FpDiv => Category::MulDiv,
            OpClass::Load => Category::Load,
            OpClass::Store => Category::Store,
            OpClass::Branch => Category::BranchResolve,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum EdgeKind {
    PipelineFD,
    PipelineDE,
    /// F straight to E when the schema has no D vertex.
    PipelineFE,
    PipelineEM(OpClass),
    /// M to C.
    PipelineMC(OpClass),
    /// E straight to C when the schema has no M vertex.
    PipelineEC(OpClass),
    /// E to EC (execution completed).
    PipelineExecDone(OpClass),
    FetchOrder,
    FetchBandwidth,
    ControlMispredict,
    /// Carries the producer's op class.
    DataRegister(OpClass),
    DataMemory,
    IssueOrder,
    IssueBandwidth,
    DispatchOrder,
    DispatchBandwidth,
    ResourceFU,
    ResourcePipeDepth,
    ResourceLsq,
    ResourceMshr,
    /// Block window full: a block fetch waits for an older block commit.
    ResourceWindow,
    CommitOrder,
    CommitBandwidth,
    BlockFetch,
    BlockFetchToE,
    EToBlockCommit(OpClass),
    BlockFetchToCommit,
    BlockCommit,
    Custom(&'static str),
}

impl EdgeKind {
    pub fn category(self) -> Category {
        use EdgeKind::*;
        match self {
            PipelineFD | PipelineDE | PipelineFE | DispatchOrder | DispatchBandwidth => {
                Category::DecodeDispatch
            }
            PipelineEM(op) | PipelineEC(op) | PipelineExecDone(op) | DataRegister(op) => {
                Category::of_op(op)
            }
            EToBlockCommit(op) => Category::of_op(op),
            PipelineMC(op) => match op {
                OpClass::Load => Category::Load,
                OpClass::Store => Category::Store,
                _ => Category::Commit,
            },
            FetchOrder | FetchBandwidth | BlockFetch | BlockFetchToE => Category::Fetch,
            ControlMispredict => Category::BranchResolve,
            DataMemory => Category::Store,
            IssueOrder | IssueBandwidth | ResourceFU | ResourcePipeDepth | ResourceLsq
            | ResourceMshr | ResourceWindow => Category::IssueStructural,
            CommitOrder | CommitBandwidth => Category::Commit,
            BlockFetchToCommit | BlockCommit => Category::BlockCommit,
            Custom(_) => Category::Other,
        }
    }

    pub fn label(self) -> &'static str {
        use EdgeKind::*;
        match self {
            PipelineFD => "PipelineFD",
            PipelineDE => "PipelineDE",
            PipelineFE => "PipelineFE",
            PipelineEM(_) => "PipelineEM",
            PipelineMC(_) => "PipelineMC",
            PipelineEC(_) => "PipelineEC",
            PipelineExecDone(_) => "PipelineExecDone",
            FetchOrder => "FetchOrder",
            FetchBandwidth => "FetchBandwidth",
            ControlMispredict => "ControlMispredict",
            DataRegister(_) => "DataRegister",
            DataMemory => "DataMemory",
            IssueOrder => "IssueOrder",
            IssueBandwidth => "IssueBandwidth",
            DispatchOrder => "DispatchOrder",
            DispatchBandwidth => "DispatchBandwidth",
            ResourceFU => "ResourceFU",
            ResourcePipeDepth => "ResourcePipeDepth",
            ResourceLsq => "ResourceLsq",
            ResourceMshr => "ResourceMshr",
            ResourceWindow => "ResourceWindow",
            CommitOrder => "CommitOrder",
            CommitBandwidth => "CommitBandwidth",
            BlockFetch => "BlockFetch",
            BlockFetchToE => "BlockFetchToE",
            EToBlockCommit(_) => "EToBlockCommit",
            BlockFetchToCommit => "BlockFetchToCommit",
            BlockCommit => "BlockCommit",
            Custom(label) => label,
        }
    }
}

/// Per-category split of a composite edge weight. Lane-wise the parts sum
/// to the edge weight.
pub type Parts = Vec<(Category, WeightVector)>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub src: VertexId,
    pub dst: VertexId,
    pub weight: WeightVector,
    pub kind: EdgeKind,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub parts: Parts,
}

impl Edge {
    pub fn new(src: VertexId, dst: VertexId, kind: EdgeKind, weight: WeightVector) -> Self {
        Edge {
            src,
            dst,
            weight,
            kind,
            parts: Vec::new(),
        }
    }

    pub fn with_parts(mut self, parts: Parts) -> Self {
        self.parts = parts;
        self
    }
}

#[derive(Clone, Debug)]
struct InEdge {
    src: VertexId,
    weight: WeightVector,
    kind: EdgeKind,
    parts: Parts,
}

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Vertex {
    kind: VertexKind,
    cp: WeightVector,
    incoming: Vec<InEdge>,
    children: Vec<VertexId>,
    /// Parents not yet finalized.
    pending: u32,
    finalized: bool,
    pins: u32,
    /// Per lane, index into `incoming` of the argmax parent.
    parent: SmallVec<[u32; 4]>,
}

#[derive(Clone, Debug, Default)]
struct Slot {
    verts: SmallVec<[Vertex; 4]>,
    retired: bool,
}

impl Slot {
    fn get(&self, kind: VertexKind) -> Option<&Vertex> {
        self.verts.iter().find(|v| v.kind == kind)
    }

    fn get_mut(&mut self, kind: VertexKind) -> Option<&mut Vertex> {
        self.verts.iter_mut().find(|v| v.kind == kind)
    }
}

#[derive(Clone, Debug)]
struct Frozen {
    cp: WeightVector,
    pins: u32,
    /// Unfinalized children that still need `cp`.
    waiting: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegOptions {
    pub lanes: usize,
    /// Resident instruction slots kept after retirement.
    pub lookback: u64,
    /// Record argmax parents so critical paths can be backtracked.
    pub provenance: bool,
    /// Keep every added edge (used by oracles and graph dumps).
    pub edge_log: bool,
}

impl DegOptions {
    pub fn lanes(lanes: usize) -> Self {
        DegOptions {
            lanes,
            lookback: DEFAULT_LOOKBACK,
            provenance: false,
            edge_log: false,
        }
    }
}

pub const DEFAULT_LOOKBACK: u64 = 10_000;

/// One step of a backtracked critical path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PathStep {
    pub src: VertexId,
    pub dst: VertexId,
    pub kind: EdgeKind,
    pub cycles: u64,
    /// Category split of `cycles`; empty when the edge is not composite.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<(Category, u64)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CriticalPath {
    pub lane: usize,
    /// Source first, terminal last.
    pub vertices: Vec<VertexId>,
    pub steps: Vec<PathStep>,
}

impl CriticalPath {
    pub fn total(&self) -> u64 {
        self.steps.iter().map(|s| s.cycles).sum()
    }
}

#[derive(Clone, Debug)]
pub struct Deg {
    opts: DegOptions,
    base: u64,
    slots: VecDeque<Slot>,
    frozen: BTreeMap<VertexId, Frozen>,
    retired_upto: Option<u64>,
    edge_log: Vec<Edge>,
    track_release: bool,
    released: Vec<VertexId>,
    live: u64,
    peak_live: u64,
}

impl Deg {
    pub fn new(opts: DegOptions) -> Self {
        assert!(opts.lanes >= 1, "a graph needs at least one lane");
        Deg {
            opts,
            base: 0,
            slots: VecDeque::new(),
            frozen: BTreeMap::new(),
            retired_upto: None,
            edge_log: Vec::new(),
            track_release: false,
            released: Vec::new(),
            live: 0,
            peak_live: 0,
        }
    }

    pub fn with_lanes(lanes: usize) -> Self {
        Deg::new(DegOptions::lanes(lanes))
    }

    pub fn lanes(&self) -> usize {
        self.opts.lanes
    }

    pub fn options(&self) -> &DegOptions {
        &self.opts
    }

    /// When on, vertices whose last unfinalized parent gets finalized are
    /// queued for [`Deg::take_released`].
    pub fn set_track_release(&mut self, on: bool) {
        self.track_release = on;
    }

    pub fn take_released(&mut self, out: &mut Vec<VertexId>) {
        out.append(&mut self.released);
    }

    /// Vertices currently held in resident slots.
    pub fn live(&self) -> u64 {
        self.live
    }

    pub fn peak_live(&self) -> u64 {
        self.peak_live
    }

    pub fn edge_log(&self) -> Option<&[Edge]> {
        self.opts.edge_log.then_some(self.edge_log.as_slice())
    }

    fn slot_index(&self, seq: u64) -> Option<usize> {
        if seq < self.base {
            return None;
        }
        let i = (seq - self.base) as usize;
        (i < self.slots.len()).then_some(i)
    }

    fn vertex(&self, v: VertexId) -> Option<&Vertex> {
        self.slot_index(v.seq)
            .and_then(|i| self.slots[i].get(v.kind))
    }

    fn vertex_mut(&mut self, v: VertexId) -> Option<&mut Vertex> {
        let i = self.slot_index(v.seq)?;
        self.slots[i].get_mut(v.kind)
    }

    fn behind_horizon(&self, seq: u64) -> bool {
        self.retired_upto.is_some_and(|r| seq <= r)
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.vertex(v).is_some() || self.frozen.contains_key(&v)
    }

    pub fn add_vertex(&mut self, id: VertexId) -> Result<()> {
        if self.behind_horizon(id.seq) {
            return Err(Error::BehindHorizon(id));
        }
        if self.slots.is_empty() {
            self.base = id.seq;
        }
        if id.seq < self.base {
            return Err(Error::BehindHorizon(id));
        }
        let i = (id.seq - self.base) as usize;
        while self.slots.len() <= i {
            self.slots.push_back(Slot::default());
        }
        let slot = &mut self.slots[i];
        if slot.get(id.kind).is_some() {
            return Err(Error::DuplicateVertex(id));
        }
        slot.verts.push(Vertex {
            kind: id.kind,
            cp: WeightVector::zeros(self.opts.lanes),
            incoming: Vec::new(),
            children: Vec::new(),
            pending: 0,
            finalized: false,
            pins: 0,
            parent: SmallVec::from_elem(NO_PARENT, self.opts.lanes),
        });
        self.live += 1;
        self.peak_live = self.peak_live.max(self.live);
        Ok(())
    }

    /// cp of a resident or frozen vertex.
    pub fn cp(&self, id: VertexId) -> Result<&WeightVector> {
        if let Some(vx) = self.vertex(id) {
            return Ok(&vx.cp);
        }
        if let Some(f) = self.frozen.get(&id) {
            return Ok(&f.cp);
        }
        if id.seq < self.base || self.behind_horizon(id.seq) {
            Err(Error::BehindHorizon(id))
        } else {
            Err(Error::UnknownVertex(id))
        }
    }

    pub fn is_finalized(&self, id: VertexId) -> bool {
        match self.vertex(id) {
            Some(vx) => vx.finalized,
            None => self.frozen.contains_key(&id),
        }
    }

    /// Number of parents of `id` that are not yet finalized.
    pub fn pending(&self, id: VertexId) -> u32 {
        self.vertex(id).map_or(0, |vx| vx.pending)
    }

    pub fn connect(
        &mut self,
        src: VertexId,
        dst: VertexId,
        kind: EdgeKind,
        weight: WeightVector,
    ) -> Result<()> {
        self.add_edge(Edge::new(src, dst, kind, weight))
    }

    pub fn add_edge(&mut self, e: Edge) -> Result<()> {
        if e.weight.lanes() != self.opts.lanes {
            return Err(Error::LaneMismatch {
                expected: self.opts.lanes,
                found: e.weight.lanes(),
            });
        }
        if e.src == e.dst {
            return Err(Error::SelfLoop(e.src));
        }
        let src_cp = self.cp(e.src)?.clone();
        let src_final = self.is_finalized(e.src);
        match self.vertex(e.dst) {
            None => {
                return Err(
                    if self.frozen.contains_key(&e.dst) || self.behind_horizon(e.dst.seq) {
                        Error::DestinationFinalized(e.dst)
                    } else {
                        Error::UnknownVertex(e.dst)
                    },
                )
            }
            Some(vx) if vx.finalized => return Err(Error::DestinationFinalized(e.dst)),
            Some(_) => {}
        }
        let cand = src_cp.checked_add(&e.weight)?;
        if self.opts.edge_log {
            self.edge_log.push(e.clone());
        }
        let dst = self.vertex_mut(e.dst).expect("checked above");
        if let Some(old) = dst.incoming.iter_mut().find(|x| x.src == e.src) {
            if e.weight.iter().zip(old.weight.iter()).any(|(n, o)| n > o)
                && e.weight[0] >= old.weight[0]
            {
                old.kind = e.kind;
                old.parts = e.parts;
            }
            old.weight.max_assign(&e.weight);
            dst.cp.max_assign(&cand);
            return Ok(());
        }
        dst.incoming.push(InEdge {
            src: e.src,
            weight: e.weight,
            kind: e.kind,
            parts: e.parts,
        });
        dst.cp.max_assign(&cand);
        if !src_final {
            dst.pending += 1;
        }
        if let Some(s) = self.vertex_mut(e.src) {
            s.children.push(e.dst);
        } else if let Some(f) = self.frozen.get_mut(&e.src) {
            f.waiting += 1;
        }
        Ok(())
    }

    fn recompute(&mut self, id: VertexId) -> Result<()> {
        let lanes = self.opts.lanes;
        let incoming = match self.vertex(id) {
            Some(vx) => vx.incoming.clone(),
            None => return Err(Error::UnknownVertex(id)),
        };
        let mut cp = WeightVector::zeros(lanes);
        for e in &incoming {
            cp.max_assign(&self.cp(e.src)?.checked_add(&e.weight)?);
        }
        self.vertex_mut(id).expect("resident").cp = cp;
        Ok(())
    }

    /// Rewrites the weight of an existing edge and recomputes `dst`.
    pub fn update_edge_weight(
        &mut self,
        src: VertexId,
        dst: VertexId,
        weight: WeightVector,
    ) -> Result<()> {
        if weight.lanes() != self.opts.lanes {
            return Err(Error::LaneMismatch {
                expected: self.opts.lanes,
                found: weight.lanes(),
            });
        }
        let vx = self
            .vertex_mut(dst)
            .ok_or(Error::EdgeNotFound { src, dst })?;
        if vx.finalized {
            return Err(Error::DestinationFinalized(dst));
        }
        let e = vx
            .incoming
            .iter_mut()
            .find(|x| x.src == src)
            .ok_or(Error::EdgeNotFound { src, dst })?;
        e.weight = weight.clone();
        e.parts.clear();
        if self.opts.edge_log {
            for le in self
                .edge_log
                .iter_mut()
                .filter(|le| le.src == src && le.dst == dst)
            {
                le.weight = weight.clone();
                le.parts.clear();
            }
        }
        self.recompute(dst)
    }

    pub fn remove_edge(&mut self, src: VertexId, dst: VertexId) -> Result<()> {
        let src_final = self.is_finalized(src);
        let vx = self
            .vertex_mut(dst)
            .ok_or(Error::EdgeNotFound { src, dst })?;
        if vx.finalized {
            return Err(Error::DestinationFinalized(dst));
        }
        let pos = vx
            .incoming
            .iter()
            .position(|x| x.src == src)
            .ok_or(Error::EdgeNotFound { src, dst })?;
        vx.incoming.remove(pos);
        if !src_final {
            vx.pending -= 1;
        }
        if let Some(s) = self.vertex_mut(src) {
            if let Some(p) = s.children.iter().position(|c| *c == dst) {
                s.children.swap_remove(p);
            }
        }
        if self.opts.edge_log {
            self.edge_log.retain(|le| !(le.src == src && le.dst == dst));
        }
        self.recompute(dst)
    }

    /// Pushes cp increases of `from` through its unfinalized descendants.
    /// Every vertex whose cp grew is appended to `changed`.
    pub fn propagate(&mut self, from: VertexId, changed: &mut Vec<VertexId>) -> Result<()> {
        let mut work: VecDeque<VertexId> = VecDeque::new();
        work.push_back(from);
        while let Some(u) = work.pop_front() {
            let (cp_u, children) = match self.vertex(u) {
                Some(vx) => (vx.cp.clone(), vx.children.clone()),
                None => continue,
            };
            for c in children {
                let Some(cv) = self.vertex_mut(c) else {
                    continue;
                };
                let Some(e) = cv.incoming.iter().find(|x| x.src == u) else {
                    continue;
                };
                let cand = cp_u.checked_add(&e.weight)?;
                if cv.cp.max_assign(&cand) {
                    if cv.finalized {
                        return Err(Error::DestinationFinalized(c));
                    }
                    changed.push(c);
                    work.push_back(c);
                }
            }
        }
        Ok(())
    }

    /// Fixes the cp of `id` from its incoming edges. All parents must be
    /// finalized. Ties between parents go to the highest `(seq, kind)`.
    pub fn finalize_vertex(&mut self, id: VertexId) -> Result<WeightVector> {
        let lanes = self.opts.lanes;
        let provenance = self.opts.provenance;
        match self.vertex(id) {
            None => return Err(Error::UnknownVertex(id)),
            Some(vx) if vx.finalized => return Err(Error::AlreadyFinalized(id)),
            Some(vx) if vx.pending > 0 => return Err(Error::UnfinalizedParent(id)),
            Some(_) => {}
        }
        let incoming = core::mem::take(&mut self.vertex_mut(id).expect("resident").incoming);
        let mut cp = WeightVector::zeros(lanes);
        let mut parent: SmallVec<[u32; 4]> = SmallVec::from_elem(NO_PARENT, lanes);
        for (idx, e) in incoming.iter().enumerate() {
            let src_cp = self.cp(e.src)?;
            for lane in 0..lanes {
                let c = src_cp[lane]
                    .checked_add(e.weight[lane])
                    .ok_or(Error::Overflow)?;
                let best = parent[lane];
                let take = best == NO_PARENT
                    || c > cp[lane]
                    || (c == cp[lane] && e.src > incoming[best as usize].src);
                if take {
                    cp.set(lane, c);
                    parent[lane] = idx as u32;
                }
            }
        }
        for e in &incoming {
            if let Some(f) = self.frozen.get_mut(&e.src) {
                f.waiting = f.waiting.saturating_sub(1);
                if f.pins == 0 && f.waiting == 0 {
                    self.frozen.remove(&e.src);
                }
            }
        }
        let track = self.track_release;
        let vx = self.vertex_mut(id).expect("resident");
        vx.incoming = incoming;
        vx.cp = cp.clone();
        vx.finalized = true;
        if provenance {
            vx.parent = parent;
        }
        let children = vx.children.clone();
        for c in children {
            if let Some(cv) = self.vertex_mut(c) {
                // Once all parents are final a vertex's cp is exact.
                if let Some(e) = cv.incoming.iter().find(|x| x.src == id) {
                    let cand = cp.checked_add(&e.weight)?;
                    cv.cp.max_assign(&cand);
                }
                cv.pending -= 1;
                if cv.pending == 0 && track {
                    self.released.push(c);
                }
            }
        }
        Ok(cp)
    }

    /// Keeps the cp of `id` queryable after its slot is evicted.
    pub fn pin(&mut self, id: VertexId) -> Result<()> {
        if let Some(vx) = self.vertex_mut(id) {
            vx.pins += 1;
            return Ok(());
        }
        match self.frozen.get_mut(&id) {
            Some(f) => {
                f.pins += 1;
                Ok(())
            }
            None => Err(Error::UnknownVertex(id)),
        }
    }

    pub fn unpin(&mut self, id: VertexId) {
        if let Some(vx) = self.vertex_mut(id) {
            vx.pins = vx.pins.saturating_sub(1);
            return;
        }
        if let Some(f) = self.frozen.get_mut(&id) {
            f.pins = f.pins.saturating_sub(1);
            if f.pins == 0 && f.waiting == 0 {
                self.frozen.remove(&id);
            }
        }
    }

    /// Retires every instruction slot up to and including `seq`.
    pub fn retire_through(&mut self, seq: u64) -> Result<()> {
        let start = self
            .retired_upto
            .map_or(self.base, |r| r + 1)
            .max(self.base);
        if seq < start {
            return Ok(());
        }
        let end = seq.min((self.base + self.slots.len() as u64).saturating_sub(1));
        for s in (start..=end).filter(|_| !self.slots.is_empty()) {
            let i = (s - self.base) as usize;
            if let Some(vx) = self.slots[i].verts.iter().find(|vx| !vx.finalized) {
                return Err(Error::UnfinalizedInRange(VertexId::new(s, vx.kind)));
            }
        }
        let provenance = self.opts.provenance;
        for s in start..=seq {
            let Some(i) = self.slot_index(s) else { break };
            let slot = &mut self.slots[i];
            slot.retired = true;
            for vx in slot.verts.iter_mut() {
                if provenance {
                    compact_to_parents(vx);
                } else {
                    vx.incoming = Vec::new();
                }
            }
            self.live -= slot.verts.len() as u64;
        }
        self.retired_upto = Some(seq);
        if !provenance {
            while self.slots.len() as u64 > self.opts.lookback
                && self.slots.front().is_some_and(|s| s.retired)
            {
                let slot = self.slots.pop_front().expect("non-empty");
                let seq = self.base;
                self.base += 1;
                for vx in slot.verts {
                    let waiting = vx
                        .children
                        .iter()
                        .filter(|&&c| self.vertex(c).is_some_and(|cv| !cv.finalized))
                        .count() as u32;
                    if vx.pins > 0 || waiting > 0 {
                        self.frozen.insert(
                            VertexId::new(seq, vx.kind),
                            Frozen {
                                cp: vx.cp,
                                pins: vx.pins,
                                waiting,
                            },
                        );
                    }
                }
            }
        }
        Ok(())
    }

    /// Walks per-lane argmax parents back from `terminal`.
    pub fn backtrack_critical_path(&self, terminal: VertexId, lane: usize) -> Result<CriticalPath> {
        if !self.opts.provenance {
            return Err(Error::ProvenanceDisabled);
        }
        if lane >= self.opts.lanes {
            return Err(Error::LaneMismatch {
                expected: self.opts.lanes,
                found: lane + 1,
            });
        }
        let mut vertices = alloc::vec![terminal];
        let mut steps = Vec::new();
        let mut cur = terminal;
        loop {
            let vx = self.vertex(cur).ok_or(Error::UnknownVertex(cur))?;
            if !vx.finalized {
                return Err(Error::UnfinalizedInRange(cur));
            }
            let p = vx.parent[lane];
            if p == NO_PARENT {
                break;
            }
            let e = &vx.incoming[p as usize];
            let parts = e.parts.iter().map(|(cat, w)| (*cat, w[lane])).collect();
            steps.push(PathStep {
                src: e.src,
                dst: cur,
                kind: e.kind,
                cycles: e.weight[lane],
                parts,
            });
            cur = e.src;
            vertices.push(cur);
        }
        vertices.reverse();
        steps.reverse();
        Ok(CriticalPath {
            lane,
            vertices,
            steps,
        })
    }
}

fn compact_to_parents(vx: &mut Vertex) {
    let mut keep: SmallVec<[u32; 4]> = vx
        .parent
        .iter()
        .copied()
        .filter(|&p| p != NO_PARENT)
        .collect();
    keep.sort_unstable();
    keep.dedup();
    let old = core::mem::take(&mut vx.incoming);
    for p in vx.parent.iter_mut() {
        if *p != NO_PARENT {
            *p = keep.iter().position(|k| k == p).expect("kept") as u32;
        }
    }
    vx.incoming = keep.iter().map(|&k| old[k as usize].clone()).collect();
}

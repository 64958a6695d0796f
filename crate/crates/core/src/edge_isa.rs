//! Block-structured (EDGE) cores.
//!
//! Each block gets one block-fetch (BF) and one block-commit (BC) vertex;
//! members only get E vertices (plus EC for depth-limited units). Members
//! become ready `bf_to_e_weight` cycles after their block is fetched, which
//! is where the three block formats differ.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::{MachineConfig, PipelineKind};
use crate::cost::{CostTable, ResolvedCosts, Resolver};
use crate::deg::{Category, Deg, DegOptions, Edge, EdgeKind, VertexId, VertexKind, WeightVector};
use crate::model::scoreboard::Scoreboard;
use crate::model::{
    check_lanes, finish_output, BuildOptions, LaneParams, ModelOutput, ResolvedInstr,
};
use crate::trace::{BlockHeader, InstructionRecord, OpClass, TraceItem};
use crate::{Error, Result};

pub const MAX_BLOCK_MEMBERS: usize = 128;
pub const MIN_INSTR_BYTES: u8 = 2;
pub const MAX_INSTR_BYTES: u8 = 13;
/// Fixed-size base of every block instruction.
pub const BASE_BYTES: u64 = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockLayout {
    /// Header, all bases, all extended fields, all immediates.
    #[default]
    FourSegment,
    /// Header, all bases, then each member's remaining bytes in order.
    TwoSegment,
    /// Header, then each member's full encoding in order.
    Contiguous,
}

impl BlockLayout {
    pub const ALL: [BlockLayout; 3] = [
        BlockLayout::FourSegment,
        BlockLayout::TwoSegment,
        BlockLayout::Contiguous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BlockLayout::FourSegment => "four_segment",
            BlockLayout::TwoSegment => "two_segment",
            BlockLayout::Contiguous => "contiguous",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockFormat {
    pub layout: BlockLayout,
    pub fetch_bytes_per_cycle: u32,
    pub extra_decode_cycles: u32,
}

impl Default for BlockFormat {
    fn default() -> Self {
        BlockFormat {
            layout: BlockLayout::FourSegment,
            fetch_bytes_per_cycle: 16,
            extra_decode_cycles: 0,
        }
    }
}

impl BlockFormat {
    pub fn new(layout: BlockLayout) -> Self {
        BlockFormat {
            layout,
            ..BlockFormat::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fetch_bytes_per_cycle == 0 {
            return Err(Error::InvalidConfig(
                "block format: fetch_bytes_per_cycle must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Encoded size of one block member.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemberShape {
    pub len: u8,
    /// Immediate bytes among the optional ones.
    pub imm: u8,
}

impl MemberShape {
    pub fn of(rec: &InstructionRecord) -> Self {
        MemberShape {
            len: rec.len,
            imm: rec.imm.unwrap_or(0),
        }
    }

    fn optional(self) -> u64 {
        u64::from(self.len).saturating_sub(BASE_BYTES)
    }

    fn imm(self) -> u64 {
        u64::from(self.imm).min(self.optional())
    }

    fn ext(self) -> u64 {
        self.optional() - self.imm()
    }
}

/// Byte offset (from the block start) just past the last byte member `i`
/// needs, for every member.
pub fn member_offsets(header_bytes: u8, shapes: &[MemberShape], layout: BlockLayout) -> Vec<u64> {
    let h = u64::from(header_bytes);
    let n = shapes.len() as u64;
    let bases_end = h + BASE_BYTES * n;
    match layout {
        BlockLayout::Contiguous => shapes
            .iter()
            .scan(h, |end, s| {
                *end += u64::from(s.len);
                Some(*end)
            })
            .collect(),
        BlockLayout::TwoSegment => {
            let mut opt_end = bases_end;
            shapes
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let base = h + BASE_BYTES * (i as u64 + 1);
                    opt_end += s.optional();
                    if s.optional() > 0 {
                        base.max(opt_end)
                    } else {
                        base
                    }
                })
                .collect()
        }
        BlockLayout::FourSegment => {
            let total_ext: u64 = shapes.iter().map(|s| s.ext()).sum();
            let mut ext_end = bases_end;
            let mut imm_end = bases_end + total_ext;
            shapes
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut end = h + BASE_BYTES * (i as u64 + 1);
                    ext_end += s.ext();
                    imm_end += s.imm();
                    if s.ext() > 0 {
                        end = end.max(ext_end);
                    }
                    if s.imm() > 0 {
                        end = end.max(imm_end);
                    }
                    end
                })
                .collect()
        }
    }
}

/// Byte offset just past each member's fixed base.
pub fn base_offsets(header_bytes: u8, shapes: &[MemberShape], layout: BlockLayout) -> Vec<u64> {
    let h = u64::from(header_bytes);
    match layout {
        BlockLayout::Contiguous => shapes
            .iter()
            .scan(h, |start, s| {
                let end = *start + BASE_BYTES;
                *start += u64::from(s.len);
                Some(end)
            })
            .collect(),
        _ => (1..=shapes.len() as u64)
            .map(|i| h + BASE_BYTES * i)
            .collect(),
    }
}

fn offset_weight(offset: u64, format: &BlockFormat, decode_cycles: u32) -> u64 {
    u64::from(decode_cycles)
        + u64::from(format.extra_decode_cycles)
        + offset / u64::from(format.fetch_bytes_per_cycle.max(1))
}

/// Cycles from block fetch until member `i` can execute.
pub fn bf_to_e_weight(
    block: &BlockRecord,
    i: usize,
    format: &BlockFormat,
    decode_cycles: u32,
) -> u64 {
    let shapes: Vec<MemberShape> = block.members.iter().map(MemberShape::of).collect();
    let off = member_offsets(block.header.bytes, &shapes, format.layout)[i];
    offset_weight(off, format, decode_cycles)
}

/// Weight of BC_n -> BC_n+1: the slower of store and register commit.
pub fn block_commit_cycles(stores: u64, gpr_writes: u64, store_rate: u32, gpr_rate: u32) -> u64 {
    stores
        .div_ceil(u64::from(store_rate.max(1)))
        .max(gpr_writes.div_ceil(u64::from(gpr_rate.max(1))))
}

/// A block header and its member records.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub header: BlockHeader,
    pub members: Vec<InstructionRecord>,
}

fn malformed(block: u64, reason: String) -> Error {
    Error::MalformedBlock { block, reason }
}

fn validate_members<'a>(
    header: &BlockHeader,
    members: impl ExactSizeIterator<Item = &'a InstructionRecord>,
) -> Result<()> {
    let id = header.id;
    let n = members.len();
    if n == 0 || n > MAX_BLOCK_MEMBERS {
        return Err(malformed(
            id,
            format!("has {n} members, expected 1..={MAX_BLOCK_MEMBERS}"),
        ));
    }
    for (i, rec) in members.enumerate() {
        if !(MIN_INSTR_BYTES..=MAX_INSTR_BYTES).contains(&rec.len) {
            return Err(malformed(
                id,
                format!("member {i} (seq {}) is {} bytes long", rec.seq, rec.len),
            ));
        }
        if rec.block_id.is_some_and(|b| b != id) {
            return Err(malformed(
                id,
                format!("member {i} (seq {}) is tagged with another block", rec.seq),
            ));
        }
        for &t in &rec.target_ids {
            if usize::from(t) >= n || usize::from(t) == i {
                return Err(malformed(
                    id,
                    format!("member {i} targets invalid member {t}"),
                ));
            }
        }
    }
    Ok(())
}

impl BlockRecord {
    pub fn validate(&self) -> Result<()> {
        validate_members(&self.header, self.members.iter())
    }

    pub fn shapes(&self) -> Vec<MemberShape> {
        self.members.iter().map(MemberShape::of).collect()
    }
}

/// Groups a trace-item stream into blocks. Every instruction must follow a
/// block header.
pub fn group_blocks<I>(items: I) -> GroupBlocks<I::IntoIter>
where
    I: IntoIterator<Item = Result<TraceItem>>,
{
    GroupBlocks {
        items: items.into_iter(),
        pending: None,
        done: false,
    }
}

pub struct GroupBlocks<I> {
    items: I,
    pending: Option<BlockHeader>,
    done: bool,
}

impl<I> Iterator for GroupBlocks<I>
where
    I: Iterator<Item = Result<TraceItem>>,
{
    type Item = Result<BlockRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut members = Vec::new();
        loop {
            match self.items.next() {
                None => {
                    self.done = true;
                    let header = self.pending.take()?;
                    return Some(finish_block(header, members));
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e));
                }
                Some(Ok(TraceItem::BlockHeader(h))) => match self.pending.replace(h) {
                    Some(prev) => return Some(finish_block(prev, members)),
                    None if members.is_empty() => {}
                    None => unreachable!("members without a header are rejected"),
                },
                Some(Ok(TraceItem::Instr(rec))) => {
                    if self.pending.is_none() {
                        self.done = true;
                        return Some(Err(malformed(
                            rec.block_id.unwrap_or(0),
                            format!("instruction seq {} precedes any block header", rec.seq),
                        )));
                    }
                    members.push(rec);
                }
            }
        }
    }
}

fn finish_block(header: BlockHeader, members: Vec<InstructionRecord>) -> Result<BlockRecord> {
    let b = BlockRecord { header, members };
    b.validate()?;
    Ok(b)
}

/// A block with lane-independent costs resolved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedBlock {
    pub header: BlockHeader,
    /// Block fetch costs (`fetch_cycles`, `line_access`).
    pub fetch: ResolvedCosts,
    pub members: Vec<ResolvedInstr>,
}

impl ResolvedBlock {
    /// Wraps members whose costs are already known.
    pub fn new(header: BlockHeader, members: Vec<ResolvedInstr>) -> Self {
        ResolvedBlock {
            fetch: ResolvedCosts {
                fetch_cycles: header.fetch_cycles,
                new_line: true,
                ..ResolvedCosts::default()
            },
            header,
            members,
        }
    }
}

/// Resolves a block: one I-cache access for the header line, members
/// resolved without touching the I-cache.
pub fn resolve_block(
    res: &mut Resolver,
    block: BlockRecord,
    table: &CostTable,
) -> Result<ResolvedBlock> {
    let line_access = match block.header.fetch_cycles {
        Some(_) => 0,
        None => res.fetch_line(block.header.pc),
    };
    let mut members = Vec::with_capacity(block.members.len());
    for rec in block.members {
        let costs = res.resolve_with(&rec, table, false)?;
        members.push(ResolvedInstr::new(rec, costs));
    }
    let mut b = ResolvedBlock::new(block.header, members);
    b.fetch.line_access = line_access;
    Ok(b)
}

#[derive(Clone, Debug)]
struct Producer {
    e: VertexId,
    weight: WeightVector,
    op: OpClass,
    partition: u32,
}

struct PrevBlock {
    bf: VertexId,
    bc: VertexId,
    commit: u64,
    mispredicts: Vec<(VertexId, WeightVector)>,
    first_issued: Option<VertexId>,
}

struct EdgeBuilder {
    machine: MachineConfig,
    lanes: Vec<LaneParams>,
    formats: Vec<BlockFormat>,
    sb: Scoreboard,
    has_ec: Vec<bool>,
    prev: Option<PrevBlock>,
    /// Blocks in flight: BC vertex and member count.
    window: VecDeque<(VertexId, u32)>,
    regs: BTreeMap<u16, Producer>,
    words: BTreeMap<u64, Producer>,
    ordinal: u64,
    instructions: u64,
    records: u64,
    last: Option<VertexId>,
}

impl EdgeBuilder {
    fn n(&self) -> usize {
        self.lanes.len()
    }

    fn lane_vec(&self, f: impl Fn(&LaneParams) -> u64) -> WeightVector {
        WeightVector::from_fn(self.n(), |i| f(&self.lanes[i]))
    }

    fn partition_of(&self, i: usize, size: usize) -> u32 {
        let e = &self.machine.edge;
        if size > e.small_block as usize {
            (i / e.small_block.max(1) as usize) as u32 % e.partitions
        } else {
            (self.ordinal % u64::from(e.partitions)) as u32
        }
    }

    /// Edge from `p` into `dst`, plus the hop cost when partitions differ.
    fn data_edge(
        &self,
        g: &mut Deg,
        p: &Producer,
        dst: VertexId,
        part: u32,
        kind: EdgeKind,
    ) -> Result<()> {
        let cost = u64::from(self.machine.edge.partition_cost);
        if p.partition == part || cost == 0 {
            return g.connect(p.e, dst, kind, p.weight.clone());
        }
        let hop = WeightVector::splat(self.n(), cost);
        let w = p.weight.checked_add(&hop)?;
        let parts = alloc::vec![
            (kind.category(), p.weight.clone()),
            (Category::IssueStructural, hop)
        ];
        g.add_edge(Edge::new(p.e, dst, kind, w).with_parts(parts))
    }

    fn replace_pinned(g: &mut Deg, map_old: Option<Producer>) {
        if let Some(old) = map_old {
            g.unpin(old.e);
        }
    }

    fn add_block(&mut self, g: &mut Deg, b: &ResolvedBlock) -> Result<()> {
        validate_members(&b.header, b.members.iter().map(|m| &m.rec))?;
        let n = self.n();
        let size = b.members.len();
        let first = b.members[0].rec.seq;
        let bf = VertexId::new(first, VertexKind::BF);
        let bc = VertexId::new(first, VertexKind::BC);
        g.add_vertex(bf)?;
        let es: Vec<VertexId> = b
            .members
            .iter()
            .map(|m| VertexId::new(m.rec.seq, VertexKind::E))
            .collect();
        let units: Vec<Option<usize>> = b
            .members
            .iter()
            .map(|m| self.machine.unit_for(m.rec.op))
            .collect();
        let mut ecs: Vec<Option<VertexId>> = Vec::with_capacity(size);
        let mut execs: Vec<WeightVector> = Vec::with_capacity(size);
        let mut outs: Vec<WeightVector> = Vec::with_capacity(size);
        let mut parts: Vec<u32> = Vec::with_capacity(size);
        for (i, m) in b.members.iter().enumerate() {
            g.add_vertex(es[i])?;
            let ec = units[i]
                .filter(|&u| self.has_ec[u])
                .map(|_| VertexId::new(m.rec.seq, VertexKind::EC));
            if let Some(ec) = ec {
                g.add_vertex(ec)?;
            }
            ecs.push(ec);
            let mut exec = Vec::with_capacity(n);
            for l in &self.lanes {
                exec.push(u64::from(m.costs.exec(m.rec.op, &l.cost)?));
            }
            let exec = WeightVector::from_slice(&exec);
            let mem = WeightVector::splat(n, u64::from(m.costs.mem_cycles));
            outs.push(exec.checked_add(&mem)?);
            execs.push(exec);
            parts.push(self.partition_of(i, size));
        }
        g.add_vertex(bc)?;

        // Block fetch, control and the block window.
        let fetch = self.lane_vec(|l| {
            if l.ideal_fetch {
                0
            } else {
                u64::from(b.fetch.fetch(&l.cost))
            }
        });
        let refetch = self.lane_vec(|l| {
            if l.ideal_fetch {
                0
            } else {
                u64::from(b.fetch.refetch(&l.cost))
            }
        });
        let penalty = self.lane_vec(|l| u64::from(l.cost.mispredict_penalty));
        if let Some(p) = &self.prev {
            if p.mispredicts.is_empty() {
                g.connect(p.bf, bf, EdgeKind::BlockFetch, fetch.clone())?;
            } else {
                g.connect(p.bf, bf, EdgeKind::BlockFetch, WeightVector::zeros(n))?;
                for (e, exec) in &p.mispredicts {
                    let resolve = exec.checked_add(&penalty)?;
                    let w = resolve.checked_add(&refetch)?;
                    let parts = alloc::vec![
                        (Category::BranchResolve, resolve),
                        (Category::Fetch, refetch.clone())
                    ];
                    g.add_edge(
                        Edge::new(*e, bf, EdgeKind::ControlMispredict, w).with_parts(parts),
                    )?;
                }
            }
            g.connect(
                p.bc,
                bc,
                EdgeKind::BlockCommit,
                WeightVector::splat(n, p.commit),
            )?;
        }
        let max_blocks = self.machine.edge.max_blocks as usize;
        let cap = self.machine.edge.window_instructions;
        let mut blocker = None;
        let mut held: u32 = self.window.iter().map(|w| w.1).sum();
        while !self.window.is_empty()
            && (self.window.len() + 1 > max_blocks || held + size as u32 > cap)
        {
            let (old, sz) = self.window.pop_front().expect("non-empty");
            held -= sz;
            if let Some(prev) = blocker.replace(old) {
                g.unpin(prev);
            }
        }
        if let Some(old) = blocker {
            g.connect(old, bf, EdgeKind::ResourceWindow, WeightVector::zeros(n))?;
            g.unpin(old);
        }
        g.pin(bc)?;
        self.window.push_back((bc, size as u32));
        g.connect(bf, bc, EdgeKind::BlockFetchToCommit, WeightVector::zeros(n))?;

        // Member availability after block fetch.
        let shapes: Vec<MemberShape> = b.members.iter().map(|m| MemberShape::of(&m.rec)).collect();
        let offsets: Vec<Vec<u64>> = self
            .formats
            .iter()
            .map(|f| member_offsets(b.header.bytes, &shapes, f.layout))
            .collect();
        for i in 0..size {
            let w = WeightVector::from_fn(n, |l| {
                offset_weight(
                    offsets[l][i],
                    &self.formats[l],
                    self.lanes[l].cost.decode_cycles,
                )
            });
            g.connect(bf, es[i], EdgeKind::BlockFetchToE, w)?;
            if let Some(ec) = ecs[i] {
                g.connect(
                    es[i],
                    ec,
                    EdgeKind::PipelineExecDone(b.members[i].rec.op),
                    execs[i].clone(),
                )?;
            }
        }

        // Intra-block dataflow.
        let mut channels: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
        for (i, m) in b.members.iter().enumerate() {
            if let Some(ch) = m.rec.broadcast {
                channels.entry(ch).or_default().push(i);
            }
        }
        for (i, m) in b.members.iter().enumerate() {
            let p = Producer {
                e: es[i],
                weight: outs[i].clone(),
                op: m.rec.op,
                partition: parts[i],
            };
            for &t in &m.rec.target_ids {
                let t = usize::from(t);
                self.data_edge(g, &p, es[t], parts[t], EdgeKind::DataRegister(p.op))?;
            }
        }
        for (i, m) in b.members.iter().enumerate() {
            for ch in &m.rec.listen {
                for &s in channels.get(ch).map(Vec::as_slice).unwrap_or(&[]) {
                    if s == i {
                        continue;
                    }
                    let p = Producer {
                        e: es[s],
                        weight: outs[s].clone(),
                        op: b.members[s].rec.op,
                        partition: parts[s],
                    };
                    self.data_edge(g, &p, es[i], parts[i], EdgeKind::DataRegister(p.op))?;
                }
            }
        }

        // Register reads of earlier blocks' writes; memory dependences.
        for (i, m) in b.members.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &r in &m.rec.src {
                if !seen.insert(r) {
                    continue;
                }
                if let Some(p) = self.regs.get(&r).cloned() {
                    self.data_edge(g, &p, es[i], parts[i], EdgeKind::DataRegister(p.op))?;
                }
            }
            let Some((lo, hi)) = m.rec.mem_range() else {
                continue;
            };
            let words = (lo >> 3)..=((hi.max(lo + 1) - 1) >> 3);
            if m.rec.op == OpClass::Load {
                let mut from = BTreeSet::new();
                for w in words {
                    if let Some(p) = self.words.get(&w) {
                        if from.insert(p.e) {
                            let p = p.clone();
                            self.data_edge(g, &p, es[i], parts[i], EdgeKind::DataMemory)?;
                        }
                    }
                }
            } else {
                for w in words {
                    g.pin(es[i])?;
                    let p = Producer {
                        e: es[i],
                        weight: outs[i].clone(),
                        op: m.rec.op,
                        partition: parts[i],
                    };
                    Self::replace_pinned(g, self.words.insert(w, p));
                }
            }
        }

        // Commit.
        let mut stores = 0u64;
        let mut gprs = 0u64;
        let mut mispredicts = Vec::new();
        for (i, m) in b.members.iter().enumerate() {
            let op = m.rec.op;
            let writes = !m.rec.dst.is_empty();
            if op == OpClass::Branch || op == OpClass::Store || writes {
                g.connect(es[i], bc, EdgeKind::EToBlockCommit(op), outs[i].clone())?;
            }
            stores += u64::from(op == OpClass::Store);
            gprs += m.rec.dst.len() as u64;
            if m.costs.bp_correct == Some(false) {
                mispredicts.push((es[i], execs[i].clone()));
            }
        }

        let first_issued = self.schedule(g, b, &es, &ecs, &units, &execs, bf)?;
        g.finalize_vertex(bc)?;

        for (i, m) in b.members.iter().enumerate() {
            for &r in &m.rec.dst {
                g.pin(es[i])?;
                let p = Producer {
                    e: es[i],
                    weight: outs[i].clone(),
                    op: m.rec.op,
                    partition: parts[i],
                };
                Self::replace_pinned(g, self.regs.insert(r, p));
            }
            self.instructions += u64::from(m.rec.count);
            self.records += 1;
        }
        let commit = block_commit_cycles(
            stores,
            gprs,
            self.machine.edge.store_commits_per_cycle,
            self.machine.edge.gpr_commits_per_cycle,
        );
        if let Some(p) = self.prev.take() {
            g.unpin(p.bf);
            g.unpin(p.bc);
            for (e, _) in &p.mispredicts {
                g.unpin(*e);
            }
            if let Some(f) = p.first_issued {
                g.unpin(f);
            }
        }
        g.pin(bf)?;
        g.pin(bc)?;
        for (e, _) in &mispredicts {
            g.pin(*e)?;
        }
        if let Some(f) = first_issued {
            g.pin(f)?;
        }
        self.prev = Some(PrevBlock {
            bf,
            bc,
            commit,
            mispredicts,
            first_issued,
        });
        self.last = Some(bc);
        self.ordinal += 1;
        let last_seq = b.members[size - 1].rec.seq;
        g.retire_through(last_seq)
    }

    /// Issues the block's E vertices in critical-path order once their
    /// parents are final. Returns the first E issued.
    #[allow(clippy::too_many_arguments)]
    fn schedule(
        &mut self,
        g: &mut Deg,
        b: &ResolvedBlock,
        es: &[VertexId],
        ecs: &[Option<VertexId>],
        units: &[Option<usize>],
        execs: &[WeightVector],
        bf: VertexId,
    ) -> Result<Option<VertexId>> {
        let n = self.n();
        let first_seq = es[0].seq;
        let idx = |v: VertexId| (v.seq - first_seq) as usize;
        g.take_released(&mut Vec::new());
        g.finalize_vertex(bf)?;
        let mut released = Vec::new();
        g.take_released(&mut released);
        let mut ready: BTreeSet<(u64, usize)> = BTreeSet::new();
        let mut seen = alloc::vec![false; es.len()];
        let push_ready = |g: &Deg,
                          v: VertexId,
                          ready: &mut BTreeSet<(u64, usize)>,
                          seen: &mut Vec<bool>|
         -> Result<()> {
            if v.kind == VertexKind::E && v.seq >= first_seq && idx(v) < es.len() && !seen[idx(v)] {
                seen[idx(v)] = true;
                ready.insert((g.cp(v)?[0], idx(v)));
            }
            Ok(())
        };
        for &e in es {
            if g.pending(e) == 0 {
                push_ready(g, e, &mut ready, &mut seen)?;
            }
        }
        let ibw = self.machine.issue_width as usize;
        let mut issued: VecDeque<VertexId> = VecDeque::with_capacity(ibw);
        let mut first_issued = None;
        while let Some((_, i)) = ready.pop_first() {
            let e = es[i];
            match first_issued {
                None => {
                    if let Some(pf) = self.prev.as_ref().and_then(|p| p.first_issued) {
                        g.connect(pf, e, EdgeKind::IssueOrder, WeightVector::zeros(n))?;
                    }
                    first_issued = Some(e);
                }
                Some(_) if issued.len() == ibw => {
                    let old = issued.pop_front().expect("full");
                    g.connect(old, e, EdgeKind::IssueBandwidth, WeightVector::splat(n, 1))?;
                }
                Some(_) => {}
            }
            if let Some(u) = units[i] {
                self.sb.assign(g, u, e, ecs[i], &execs[i])?;
            }
            g.finalize_vertex(e)?;
            issued.push_back(e);
            if let Some(ec) = ecs[i] {
                g.finalize_vertex(ec)?;
            }
            released.clear();
            g.take_released(&mut released);
            for &v in &released {
                push_ready(g, v, &mut ready, &mut seen)?;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(
                if b.members
                    .iter()
                    .any(|m| !m.rec.target_ids.is_empty() || !m.rec.listen.is_empty())
                {
                    malformed(b.header.id, "intra-block dependences form a cycle".into())
                } else {
                    Error::Cycle
                },
            );
        }
        Ok(first_issued)
    }
}

/// Builds and analyzes the graph of a block-structured core, one block at
/// a time. Blocks are issued in order; within a block E vertices issue in
/// critical-path order, limited by the issue width and the shared units.
pub fn model_edge_core<I>(
    blocks: I,
    machine: &MachineConfig,
    lanes: &[LaneParams],
    opts: &BuildOptions,
) -> Result<ModelOutput>
where
    I: IntoIterator<Item = Result<ResolvedBlock>>,
{
    check_lanes(machine, lanes)?;
    if machine.pipeline != PipelineKind::Edge {
        return Err(Error::WrongPipeline("edge"));
    }
    let formats: Vec<BlockFormat> = lanes
        .iter()
        .map(|l| {
            l.block_format
                .clone()
                .unwrap_or_else(|| machine.edge.format.clone())
        })
        .collect();
    for f in &formats {
        f.validate()?;
    }
    let lookback = machine
        .lookback()
        .max(2 * u64::from(machine.edge.window_instructions) + MAX_BLOCK_MEMBERS as u64);
    let mut g = Deg::new(DegOptions {
        lanes: lanes.len(),
        lookback,
        provenance: opts.provenance,
        edge_log: opts.edge_log,
    });
    g.set_track_release(true);
    let mut eb = EdgeBuilder {
        has_ec: machine
            .units
            .iter()
            .map(|u| u.pipelined && u.pipe_depth.is_some())
            .collect(),
        sb: Scoreboard::new(machine),
        machine: machine.clone(),
        lanes: lanes.to_vec(),
        formats,
        prev: None,
        window: VecDeque::new(),
        regs: BTreeMap::new(),
        words: BTreeMap::new(),
        ordinal: 0,
        instructions: 0,
        records: 0,
        last: None,
    };
    for b in blocks {
        eb.add_block(&mut g, &b?)?;
    }
    finish_output(&g, eb.last, eb.instructions, eb.records, opts, None)
}

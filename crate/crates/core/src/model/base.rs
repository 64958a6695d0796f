//! Edges every core model shares: pipeline, fetch, control, data, memory
//! dependence, dispatch, LSQ, MSHR and commit.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use smallvec::SmallVec;

use super::{InstrVertices, LaneParams, LaneWeights, PinnedRing, ResolvedInstr, ValueMark};
use crate::config::MachineConfig;
use crate::deg::{Category, Deg, Edge, EdgeKind, VertexId, VertexKind, WeightVector};
use crate::trace::OpClass;
use crate::Result;

/// Where and when an instruction's result becomes available.
#[derive(Clone, Debug)]
struct Writer {
    src: VertexId,
    weight: WeightVector,
    op: OpClass,
    value: Option<ValueMark>,
}

#[derive(Clone, Debug)]
struct StoreWord {
    /// Newest store seq touching this word.
    seq: u64,
    entries: SmallVec<[(u8, Writer); 1]>,
}

/// Last writer per register and per memory byte.
#[derive(Clone, Debug, Default)]
struct DataState {
    regs: BTreeMap<u16, Writer>,
    words: BTreeMap<u64, StoreWord>,
}

const STORE_WORD_CAP: usize = 1 << 16;

fn byte_masks(addr: u64, size: u64) -> impl Iterator<Item = (u64, u8)> {
    let end = addr.saturating_add(size.max(1));
    let first = addr >> 3;
    let last = (end - 1) >> 3;
    (first..=last).map(move |w| {
        let lo = addr.max(w << 3) - (w << 3);
        let hi = end.min((w + 1) << 3) - (w << 3);
        let mask = ((1u16 << hi) - (1u16 << lo)) as u8;
        (w, mask)
    })
}

#[derive(Clone, Debug)]
struct Prev {
    f: VertexId,
    e: VertexId,
    exec: WeightVector,
    mispredicted: bool,
}

pub(crate) struct BaseBuilder {
    machine: MachineConfig,
    lanes: Vec<LaneParams>,
    prev: Option<Prev>,
    fetch: PinnedRing<()>,
    dispatch: PinnedRing<()>,
    commit: PinnedRing<()>,
    lsq: PinnedRing<()>,
    mshr: PinnedRing<WeightVector>,
    data: DataState,
    has_ec: Vec<bool>,
    pub instructions: u64,
    pub records: u64,
}

impl BaseBuilder {
    pub fn new(machine: &MachineConfig, lanes: &[LaneParams]) -> Self {
        let has_ec = machine
            .units
            .iter()
            .map(|u| u.pipelined && u.pipe_depth.is_some())
            .collect();
        BaseBuilder {
            fetch: PinnedRing::new(machine.fetch_width as usize),
            dispatch: PinnedRing::new(machine.dispatch_width() as usize),
            commit: PinnedRing::new(machine.commit_width as usize),
            lsq: PinnedRing::new(machine.lsq_size.unwrap_or(0) as usize),
            mshr: PinnedRing::new(machine.mshrs.unwrap_or(0) as usize),
            machine: machine.clone(),
            lanes: lanes.to_vec(),
            prev: None,
            data: DataState::default(),
            has_ec,
            instructions: 0,
            records: 0,
        }
    }

    fn zeros(&self) -> WeightVector {
        WeightVector::zeros(self.lanes.len())
    }

    fn ones(&self) -> WeightVector {
        WeightVector::splat(self.lanes.len(), 1)
    }

    /// Creates the instruction's vertices and all in-order edges into them.
    pub fn add(&mut self, g: &mut Deg, ins: &ResolvedInstr) -> Result<InstrVertices> {
        let rec = &ins.rec;
        let seq = rec.seq;
        let op = rec.op;
        let w = LaneWeights::new(ins, &self.lanes)?;
        let schema = self.machine.schema;
        let unit = self.machine.unit_for(op);
        let iv = InstrVertices {
            seq,
            f: VertexId::new(seq, VertexKind::F),
            d: schema.dispatch.then_some(VertexId::new(seq, VertexKind::D)),
            e: VertexId::new(seq, VertexKind::E),
            m: schema
                .has_m(op)
                .then_some(VertexId::new(seq, VertexKind::M)),
            ec: unit
                .filter(|&u| self.has_ec[u])
                .map(|_| VertexId::new(seq, VertexKind::EC)),
            c: VertexId::new(seq, VertexKind::C),
            unit,
            mem: op.is_memory(),
            exec: w.exec.clone(),
        };
        for v in iv.all() {
            g.add_vertex(v)?;
        }
        let mem = WeightVector::splat(self.lanes.len(), u64::from(ins.costs.mem_cycles));
        // Edges are added destination by destination in F, D, E, M, EC, C
        // order, so every source cp is complete when an edge leaves it.

        // Fetch order, control and fetch bandwidth.
        if let Some(p) = self.prev.take() {
            if p.mispredicted {
                let weight = p.exec.checked_add(&w.penalty)?.checked_add(&w.refetch)?;
                let parts = alloc::vec![
                    (Category::BranchResolve, p.exec.checked_add(&w.penalty)?),
                    (Category::Fetch, w.refetch.clone()),
                ];
                g.add_edge(
                    Edge::new(p.e, iv.f, EdgeKind::ControlMispredict, weight).with_parts(parts),
                )?;
                g.connect(p.f, iv.f, EdgeKind::FetchOrder, self.zeros())?;
            } else {
                g.connect(p.f, iv.f, EdgeKind::FetchOrder, w.fetch.clone())?;
            }
        }
        let fbw = self.machine.fetch_width as usize;
        if let Some(&(old, ())) = self.fetch.back(fbw).filter(|_| self.fetch.is_full()) {
            g.connect(old, iv.f, EdgeKind::FetchBandwidth, self.ones())?;
        }
        self.fetch.push(g, iv.f, ())?;

        match iv.d {
            Some(d) => {
                g.connect(iv.f, d, EdgeKind::PipelineFD, w.decode.clone())?;
                let dbw = self.machine.dispatch_width() as usize;
                if let Some(&(prev, ())) = self.dispatch.back(1) {
                    g.connect(prev, d, EdgeKind::DispatchOrder, self.zeros())?;
                }
                if let Some(&(old, ())) =
                    self.dispatch.back(dbw).filter(|_| self.dispatch.is_full())
                {
                    g.connect(old, d, EdgeKind::DispatchBandwidth, self.ones())?;
                }
                self.dispatch.push(g, d, ())?;
                g.connect(d, iv.e, EdgeKind::PipelineDE, w.dispatch.clone())?;
            }
            None => g.connect(iv.f, iv.e, EdgeKind::PipelineFE, w.decode.clone())?,
        }

        // Register data dependences.
        let mut seen: SmallVec<[u16; 4]> = SmallVec::new();
        for &r in &rec.src {
            if seen.contains(&r) {
                continue;
            }
            seen.push(r);
            let Some(wr) = self.data.regs.get(&r) else {
                continue;
            };
            let weight = match wr.value {
                None => wr.weight.clone(),
                Some(ValueMark::Predicted) => continue,
                Some(ValueMark::Mispredicted { penalty }) => wr
                    .weight
                    .checked_add(&WeightVector::splat(self.lanes.len(), u64::from(penalty)))?,
            };
            g.connect(wr.src, iv.e, EdgeKind::DataRegister(wr.op), weight)?;
        }

        // Memory dependences: loads wait for overlapping older stores.
        let result = match iv.m {
            Some(m) if iv.mem => Writer {
                src: m,
                weight: mem.clone(),
                op,
                value: ins.value,
            },
            _ => Writer {
                src: iv.e,
                weight: w.exec.checked_add(&mem)?,
                op,
                value: ins.value,
            },
        };
        if let Some((addr, end)) = rec.mem_range() {
            if op == OpClass::Load {
                let mut deps: SmallVec<[VertexId; 2]> = SmallVec::new();
                for (word, mask) in byte_masks(addr, end - addr) {
                    let Some(sw) = self.data.words.get(&word) else {
                        continue;
                    };
                    for (m, wr) in &sw.entries {
                        if m & mask != 0 && !deps.contains(&wr.src) {
                            deps.push(wr.src);
                            g.connect(wr.src, iv.e, EdgeKind::DataMemory, wr.weight.clone())?;
                        }
                    }
                }
            } else {
                self.record_store(g, addr, end - addr, seq, &result)?;
            }
        }

        for &r in &rec.dst {
            g.pin(result.src)?;
            if let Some(old) = self.data.regs.insert(r, result.clone()) {
                g.unpin(old.src);
            }
        }

        // LSQ and MSHR.
        if iv.mem {
            if let Some(&(old_c, ())) = self.lsq.oldest().filter(|_| self.lsq.is_full()) {
                g.connect(old_c, iv.e, EdgeKind::ResourceLsq, self.zeros())?;
            }
            self.lsq.push(g, iv.c, ())?;
            if ins.costs.is_miss() && self.machine.mshrs.is_some() {
                let miss = WeightVector::splat(self.lanes.len(), u64::from(ins.costs.miss_cycles));
                let (src_v, own) = match iv.m {
                    Some(m) => (m, miss.clone()),
                    None => (iv.e, w.exec.checked_add(&miss)?),
                };
                if let Some((old, wgt)) = self.mshr.oldest().filter(|_| self.mshr.is_full()) {
                    let (old, wgt) = (*old, wgt.clone());
                    g.connect(old, src_v, EdgeKind::ResourceMshr, wgt)?;
                }
                self.mshr.push(g, src_v, own)?;
            }
        }

        // Rest of the pipeline.
        match iv.m {
            Some(m) => {
                g.connect(iv.e, m, EdgeKind::PipelineEM(op), w.exec.clone())?;
                let mc = if iv.mem { mem.clone() } else { w.stage.clone() };
                g.connect(m, iv.c, EdgeKind::PipelineMC(op), mc)?;
            }
            None => {
                let ec = w.exec.checked_add(&mem)?;
                g.connect(iv.e, iv.c, EdgeKind::PipelineEC(op), ec)?;
            }
        }
        if let Some(ec) = iv.ec {
            g.connect(iv.e, ec, EdgeKind::PipelineExecDone(op), w.exec.clone())?;
        }

        // Commit.
        let cbw = self.machine.commit_width as usize;
        if let Some(&(prev, ())) = self.commit.back(1) {
            g.connect(prev, iv.c, EdgeKind::CommitOrder, self.zeros())?;
        }
        if let Some(&(old, ())) = self.commit.back(cbw).filter(|_| self.commit.is_full()) {
            g.connect(old, iv.c, EdgeKind::CommitBandwidth, self.ones())?;
        }
        self.commit.push(g, iv.c, ())?;

        self.prev = Some(Prev {
            f: iv.f,
            e: iv.e,
            exec: w.exec,
            mispredicted: ins.mispredicted(),
        });
        self.instructions += u64::from(rec.count);
        self.records += 1;
        Ok(iv)
    }

    fn record_store(
        &mut self,
        g: &mut Deg,
        addr: u64,
        size: u64,
        seq: u64,
        result: &Writer,
    ) -> Result<()> {
        for (word, mask) in byte_masks(addr, size) {
            let sw = self.data.words.entry(word).or_insert_with(|| StoreWord {
                seq,
                entries: SmallVec::new(),
            });
            sw.seq = seq;
            let mut dropped: SmallVec<[VertexId; 2]> = SmallVec::new();
            sw.entries.retain(|(m, wr)| {
                *m &= !mask;
                if *m == 0 {
                    dropped.push(wr.src);
                    false
                } else {
                    true
                }
            });
            sw.entries.push((mask, result.clone()));
            for d in dropped {
                g.unpin(d);
            }
            g.pin(result.src)?;
        }
        if self.data.words.len() > STORE_WORD_CAP {
            let horizon = seq.saturating_sub(self.machine.lookback());
            let mut keep = BTreeMap::new();
            for (word, sw) in core::mem::take(&mut self.data.words) {
                if sw.seq >= horizon {
                    keep.insert(word, sw);
                } else {
                    for (_, wr) in sw.entries {
                        g.unpin(wr.src);
                    }
                }
            }
            self.data.words = keep;
        }
        Ok(())
    }
}

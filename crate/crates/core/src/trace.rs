//! Enriched instruction records and synthetic trace generation.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize};

use crate::{Error, Result};

/// Register ids at or above this value are micro-op temporaries introduced
/// by instruction cracking; they never appear in input traces.
pub const TEMP_REG_BASE: u16 = 0xff00;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OpClass {
    IntAlu,
    IntMul,
    IntDiv,
    FpAlu,
    FpMul,
    FpDiv,
    Load,
    Store,
    Branch,
    EdgeRead,
    EdgeMov,
    EdgeNull,
    Other,
}

impl OpClass {
    pub const ALL: [OpClass; 13] = [
        OpClass::IntAlu,
        OpClass::IntMul,
        OpClass::IntDiv,
        OpClass::FpAlu,
        OpClass::FpMul,
        OpClass::FpDiv,
        OpClass::Load,
        OpClass::Store,
        OpClass::Branch,
        OpClass::EdgeRead,
        OpClass::EdgeMov,
        OpClass::EdgeNull,
        OpClass::Other,
    ];

    pub fn is_memory(self) -> bool {
        matches!(self, OpClass::Load | OpClass::Store)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OpClass::IntAlu => "IntAlu",
            OpClass::IntMul => "IntMul",
            OpClass::IntDiv => "IntDiv",
            OpClass::FpAlu => "FpAlu",
            OpClass::FpMul => "FpMul",
            OpClass::FpDiv => "FpDiv",
            OpClass::Load => "Load",
            OpClass::Store => "Store",
            OpClass::Branch => "Branch",
            OpClass::EdgeRead => "EdgeRead",
            OpClass::EdgeMov => "EdgeMov",
            OpClass::EdgeNull => "EdgeNull",
            OpClass::Other => "Other",
        }
    }

    pub fn parse(token: &str) -> Option<OpClass> {
        OpClass::ALL.iter().copied().find(|op| op.as_str() == token)
    }
}

impl fmt::Display for OpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Costs measured by a higher-fidelity simulator and carried with the trace.
/// Anything left empty is filled in by the cost models.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedCosts {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetch_cycles: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mem_cycles: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bp_correct: Option<bool>,
    /// Execution latency override; set by fusion and cracking rules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_cycles: Option<u32>,
}

impl RecordedCosts {
    pub fn is_empty(&self) -> bool {
        *self == RecordedCosts::default()
    }
}

fn default_len() -> u8 {
    4
}

fn is_default_len(len: &u8) -> bool {
    *len == 4
}

fn default_count() -> u32 {
    1
}

fn is_default_count(count: &u32) -> bool {
    *count == 1
}

/// One dynamic instruction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub seq: u64,
    #[serde(deserialize_with = "int_or_hex")]
    pub pc: u64,
    pub op: OpClass,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dst: Vec<u16>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub src: Vec<u16>,
    #[serde(
        default,
        deserialize_with = "opt_int_or_hex",
        skip_serializing_if = "Option::is_none"
    )]
    pub mem_addr: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mem_size: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taken: Option<bool>,
    #[serde(flatten)]
    pub recorded: RecordedCosts,
    /// Encoded length in bytes.
    #[serde(default = "default_len", skip_serializing_if = "is_default_len")]
    pub len: u8,
    /// Committed program instructions this record stands for (fused pairs
    /// count 2, trailing micro-ops of a cracked instruction count 0).
    #[serde(default = "default_count", skip_serializing_if = "is_default_count")]
    pub count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_id: Option<u64>,
    /// Intra-block consumer indices (EDGE direct targets).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub target_ids: Vec<u16>,
    /// Broadcast channel this instruction sends on (EDGE).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub broadcast: Option<u16>,
    /// Broadcast channels this instruction receives from (EDGE).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub listen: Vec<u16>,
    /// Immediate bytes among the optional fields (EDGE block formats).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imm: Option<u8>,
}

impl InstructionRecord {
    pub fn new(seq: u64, pc: u64, op: OpClass) -> Self {
        InstructionRecord {
            seq,
            pc,
            op,
            dst: Vec::new(),
            src: Vec::new(),
            mem_addr: None,
            mem_size: None,
            taken: None,
            recorded: RecordedCosts::default(),
            len: 4,
            count: 1,
            block_id: None,
            target_ids: Vec::new(),
            broadcast: None,
            listen: Vec::new(),
            imm: None,
        }
    }

    pub fn with_dst(mut self, regs: &[u16]) -> Self {
        self.dst = regs.to_vec();
        self
    }

    pub fn with_src(mut self, regs: &[u16]) -> Self {
        self.src = regs.to_vec();
        self
    }

    pub fn with_mem(mut self, addr: u64, size: u32) -> Self {
        self.mem_addr = Some(addr);
        self.mem_size = Some(size);
        self
    }

    pub fn with_taken(mut self, taken: bool) -> Self {
        self.taken = Some(taken);
        self
    }

    /// Checks the per-record invariants. `reg_count` bounds architectural
    /// register ids when given.
    pub fn validate(&self, reg_count: Option<u16>) -> Result<()> {
        let bad = |field: &'static str, reason: &str| Error::InvalidRecord {
            seq: self.seq,
            field,
            reason: reason.to_string(),
        };
        let mem = self.op.is_memory();
        if mem != self.mem_addr.is_some() {
            return Err(bad("mem_addr", "present iff op is Load or Store"));
        }
        if !mem && self.mem_size.is_some() {
            return Err(bad("mem_size", "only Load and Store carry a size"));
        }
        if self.mem_size == Some(0) {
            return Err(bad("mem_size", "must be at least one byte"));
        }
        let branch = self.op == OpClass::Branch;
        if branch != self.taken.is_some() {
            return Err(bad("taken", "present iff op is Branch"));
        }
        if !branch && self.recorded.bp_correct.is_some() {
            return Err(bad(
                "bp_correct",
                "only branches carry a prediction outcome",
            ));
        }
        if self.len == 0 {
            return Err(bad("len", "must be at least one byte"));
        }
        if let Some(limit) = reg_count {
            for &r in self.dst.iter().chain(self.src.iter()) {
                if r >= limit && r < TEMP_REG_BASE {
                    return Err(Error::RegisterOutOfRange {
                        seq: self.seq,
                        reg: r,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn mem_range(&self) -> Option<(u64, u64)> {
        self.mem_addr
            .map(|a| (a, a.saturating_add(u64::from(self.mem_size.unwrap_or(8)))))
    }
}

/// Header of an EDGE block; precedes the block's member records.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub id: u64,
    #[serde(deserialize_with = "int_or_hex")]
    pub pc: u64,
    #[serde(default = "default_header_bytes")]
    pub bytes: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetch_cycles: Option<u32>,
}

fn default_header_bytes() -> u8 {
    4
}

/// One line of a trace file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceItem {
    Instr(InstructionRecord),
    BlockHeader(BlockHeader),
}

/// Enforces `seq` continuity over a record stream.
#[derive(Clone, Debug, Default)]
pub struct SeqChecker {
    records: u64,
    next: Option<u64>,
}

impl SeqChecker {
    pub fn check(&mut self, seq: u64) -> Result<()> {
        self.records += 1;
        if let Some(expected) = self.next {
            if seq != expected {
                return Err(Error::SeqDiscontinuity {
                    record: self.records,
                    expected,
                    found: seq,
                });
            }
        }
        self.next = Some(seq + 1);
        Ok(())
    }
}

/// Wraps a record iterator and fails on the first seq gap.
pub fn checked_seq<I>(records: I) -> impl Iterator<Item = Result<InstructionRecord>>
where
    I: IntoIterator<Item = Result<InstructionRecord>>,
{
    let mut checker = SeqChecker::default();
    records.into_iter().map(move |r| {
        let r = r?;
        checker.check(r.seq)?;
        Ok(r)
    })
}

struct IntOrHex;

impl<'de> serde::de::Visitor<'de> for IntOrHex {
    type Value = u64;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("an unsigned integer or a 0x-prefixed hex string")
    }

    fn visit_u64<E: serde::de::Error>(self, v: u64) -> core::result::Result<u64, E> {
        Ok(v)
    }

    fn visit_i64<E: serde::de::Error>(self, v: i64) -> core::result::Result<u64, E> {
        u64::try_from(v).map_err(|_| E::custom("negative address"))
    }

    fn visit_str<E: serde::de::Error>(self, v: &str) -> core::result::Result<u64, E> {
        let digits = v
            .strip_prefix("0x")
            .or_else(|| v.strip_prefix("0X"))
            .ok_or_else(|| E::custom("hex string must start with 0x"))?;
        u64::from_str_radix(digits, 16).map_err(|e| E::custom(format!("{e}")))
    }
}

fn int_or_hex<'de, D: Deserializer<'de>>(d: D) -> core::result::Result<u64, D::Error> {
    d.deserialize_any(IntOrHex)
}

fn opt_int_or_hex<'de, D: Deserializer<'de>>(d: D) -> core::result::Result<Option<u64>, D::Error> {
    struct Opt;
    impl<'de> serde::de::Visitor<'de> for Opt {
        type Value = Option<u64>;
        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("null, an unsigned integer or a hex string")
        }
        fn visit_none<E: serde::de::Error>(self) -> core::result::Result<Self::Value, E> {
            Ok(None)
        }
        fn visit_unit<E: serde::de::Error>(self) -> core::result::Result<Self::Value, E> {
            Ok(None)
        }
        fn visit_some<D2: Deserializer<'de>>(
            self,
            d: D2,
        ) -> core::result::Result<Self::Value, D2::Error> {
            d.deserialize_any(IntOrHex).map(Some)
        }
        fn visit_u64<E: serde::de::Error>(self, v: u64) -> core::result::Result<Self::Value, E> {
            Ok(Some(v))
        }
        fn visit_i64<E: serde::de::Error>(self, v: i64) -> core::result::Result<Self::Value, E> {
            IntOrHex.visit_i64(v).map(Some)
        }
        fn visit_str<E: serde::de::Error>(self, v: &str) -> core::result::Result<Self::Value, E> {
            IntOrHex.visit_str(v).map(Some)
        }
    }
    d.deserialize_option(Opt)
}

/// Parameters of a synthetic trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTraceSpec {
    pub instruction_count: u64,
    /// Probability per non-branch op class; must sum to 1.
    pub mix: BTreeMap<OpClass, f64>,
    pub reg_count: u16,
    /// Registers `0..live_in` are defined on entry.
    pub live_in: u16,
    /// Data footprint in bytes.
    pub mem_footprint: u64,
    /// Code footprint in bytes; taken branches jump inside it.
    pub code_footprint: u64,
    pub branch_freq: f64,
    pub taken_bias: f64,
    /// Probability that a source operand reads a recent producer.
    pub dep_prob: f64,
    /// Producer distance is drawn uniformly from `1..=max_dep_distance`.
    pub max_dep_distance: u32,
    pub seed: u64,
}

impl SyntheticTraceSpec {
    /// A RISC-like integer-heavy mix.
    pub fn typical(instruction_count: u64, seed: u64) -> Self {
        let mut mix = BTreeMap::new();
        mix.insert(OpClass::IntAlu, 0.45);
        mix.insert(OpClass::IntMul, 0.05);
        mix.insert(OpClass::IntDiv, 0.01);
        mix.insert(OpClass::FpAlu, 0.08);
        mix.insert(OpClass::FpMul, 0.05);
        mix.insert(OpClass::FpDiv, 0.01);
        mix.insert(OpClass::Load, 0.25);
        mix.insert(OpClass::Store, 0.10);
        SyntheticTraceSpec {
            instruction_count,
            mix,
            reg_count: 32,
            live_in: 8,
            mem_footprint: 64 * 1024,
            code_footprint: 16 * 1024,
            branch_freq: 0.15,
            taken_bias: 0.6,
            dep_prob: 0.7,
            max_dep_distance: 8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InfeasibleSpec(m.to_string()));
        if self.instruction_count == 0 {
            return bad("instruction_count must be > 0");
        }
        if self.mix.is_empty() {
            return bad("op-class mix is empty");
        }
        if self.mix.contains_key(&OpClass::Branch) {
            return bad("branches are controlled by branch_freq, not the mix");
        }
        if self.mix.values().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("mix probabilities must lie in [0, 1]");
        }
        let sum: f64 = self.mix.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad("mix probabilities must sum to 1");
        }
        if self.reg_count == 0 || self.reg_count >= TEMP_REG_BASE {
            return bad("reg_count out of range");
        }
        if self.live_in == 0 || self.live_in > self.reg_count {
            return bad("live_in must be in 1..=reg_count");
        }
        if self.mem_footprint < 8 || self.code_footprint < 4 {
            return bad("footprints must hold at least one access");
        }
        for (name, p) in [
            ("branch_freq", self.branch_freq),
            ("taken_bias", self.taken_bias),
            ("dep_prob", self.dep_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InfeasibleSpec(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.max_dep_distance == 0 {
            return bad("max_dep_distance must be > 0");
        }
        if u64::from(self.max_dep_distance) > self.instruction_count {
            return bad("max_dep_distance exceeds instruction_count");
        }
        Ok(())
    }
}

const CODE_BASE: u64 = 0x1000;
const DATA_BASE: u64 = 0x10_0000;

/// Deterministic generator over a [`SyntheticTraceSpec`].
pub struct SyntheticTrace {
    spec: SyntheticTraceSpec,
    rng: ChaCha8Rng,
    cumulative: Vec<(f64, OpClass)>,
    seq: u64,
    pc: u64,
    recent_dst: VecDeque<Option<u16>>,
    written: Vec<bool>,
    available: Vec<u16>,
}

pub fn generate_synthetic_trace(spec: &SyntheticTraceSpec) -> Result<SyntheticTrace> {
    spec.validate()?;
    let mut acc = 0.0;
    let cumulative = spec
        .mix
        .iter()
        .map(|(&op, &p)| {
            acc += p;
            (acc, op)
        })
        .collect();
    let mut written = alloc::vec![false; usize::from(spec.reg_count)];
    for w in written.iter_mut().take(usize::from(spec.live_in)) {
        *w = true;
    }
    Ok(SyntheticTrace {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        cumulative,
        seq: 0,
        pc: CODE_BASE,
        recent_dst: VecDeque::with_capacity(spec.max_dep_distance as usize),
        available: (0..spec.live_in).collect(),
        written,
        spec: spec.clone(),
    })
}

impl SyntheticTrace {
    fn pick_class(&mut self) -> OpClass {
        if self.rng.gen::<f64>() < self.spec.branch_freq {
            return OpClass::Branch;
        }
        let u: f64 = self.rng.gen();
        self.cumulative
            .iter()
            .find(|(c, _)| u < *c)
            .or(self.cumulative.last())
            .map(|&(_, op)| op)
            .unwrap_or(OpClass::IntAlu)
    }

    fn pick_src(&mut self) -> u16 {
        if self.rng.gen::<f64>() < self.spec.dep_prob && !self.recent_dst.is_empty() {
            let d = self.rng.gen_range(1..=self.spec.max_dep_distance as usize);
            if d <= self.recent_dst.len() {
                if let Some(r) = self.recent_dst[self.recent_dst.len() - d] {
                    return r;
                }
            }
        }
        let i = self.rng.gen_range(0..self.available.len());
        self.available[i]
    }

    fn pick_dst(&mut self) -> u16 {
        let r = self.rng.gen_range(0..self.spec.reg_count);
        if !self.written[usize::from(r)] {
            self.written[usize::from(r)] = true;
            self.available.push(r);
        }
        r
    }
}

impl Iterator for SyntheticTrace {
    type Item = InstructionRecord;

    fn next(&mut self) -> Option<InstructionRecord> {
        if self.seq >= self.spec.instruction_count {
            return None;
        }
        let op = self.pick_class();
        let (n_src, has_dst) = match op {
            OpClass::Load => (1, true),
            OpClass::Store => (2, false),
            OpClass::Branch => (2, false),
            OpClass::Other | OpClass::EdgeRead | OpClass::EdgeMov | OpClass::EdgeNull => (1, true),
            _ => (2, true),
        };
        let mut rec = InstructionRecord::new(self.seq, self.pc, op);
        for _ in 0..n_src {
            let r = self.pick_src();
            if !rec.src.contains(&r) {
                rec.src.push(r);
            }
        }
        let dst = if has_dst { Some(self.pick_dst()) } else { None };
        if let Some(d) = dst {
            rec.dst.push(d);
        }
        if op.is_memory() {
            let slots = self.spec.mem_footprint / 8;
            let addr = DATA_BASE + self.rng.gen_range(0..slots) * 8;
            rec = rec.with_mem(addr, 8);
        }
        let mut next_pc = self.pc + 4;
        if op == OpClass::Branch {
            let taken = self.rng.gen::<f64>() < self.spec.taken_bias;
            rec.taken = Some(taken);
            if taken {
                let slots = (self.spec.code_footprint / 4).max(1);
                next_pc = CODE_BASE + self.rng.gen_range(0..slots) * 4;
            }
        }
        if self.recent_dst.len() == self.spec.max_dep_distance as usize {
            self.recent_dst.pop_front();
        }
        self.recent_dst.push_back(dst);
        self.pc = next_pc;
        self.seq += 1;
        Some(rec)
    }
}

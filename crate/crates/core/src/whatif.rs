//! What-if scenarios bound to weight-vector lanes.
//!
//! Lane 0 is always the scenario-free baseline. Lanes whose scenarios only
//! change edge weights share one pass over the trace; lanes that change the
//! graph's shape (resources, transformations, ideal branch prediction,
//! value prediction) are grouped into further passes.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::iter::Peekable;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{compute_breakdown, cpi, digest_hex, AnalysisResult, LaneResult, PassInfo};
use crate::config::{Config, PipelineKind};
use crate::cost::{BranchModel, CostTable, Resolver};
use crate::deg::EdgeKind;
use crate::edge_isa::{group_blocks, model_edge_core, resolve_block, BlockFormat};
use crate::hash::{keyed_unit, Fnv64};
use crate::model::{
    model_ino_core, model_ooo_core_advanced, model_ooo_core_basic, BuildOptions, LaneParams,
    ModelOutput, ResolvedInstr, ValueMark,
};
use crate::trace::{checked_seq, InstructionRecord, OpClass, TraceItem, TEMP_REG_BASE};
use crate::{Error, Result};

/// Fuses two consecutive records into one macro-op.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FuseRule {
    pub first: OpClass,
    pub second: OpClass,
    pub latency: u32,
    /// Only fuse when the second record reads a register the first writes.
    #[serde(default = "yes")]
    pub require_dependency: bool,
}

fn yes() -> bool {
    true
}

/// A register operand of a micro-op, in terms of the cracked record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegRef {
    /// The parent's i-th source register.
    Src(usize),
    /// The parent's i-th destination register.
    Dst(usize),
    /// A temporary private to the cracked sequence.
    Temp(u16),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UopSpec {
    pub op: OpClass,
    /// Defaults to the cost table's latency for `op`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<u32>,
    #[serde(default)]
    pub src: Vec<RegRef>,
    #[serde(default)]
    pub dst: Vec<RegRef>,
}

/// Replaces every record of class `op` by a micro-op sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrackRule {
    pub op: OpClass,
    pub uops: Vec<UopSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TransformRule {
    Fuse(FuseRule),
    Crack(CrackRule),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VpMode {
    /// Every load is predicted independently with probability `coverage`.
    CriticalityUnaware {
        coverage: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Loads are chosen from the critical path, `step` of all loads per
    /// pass for `passes` passes, then by memory latency.
    CriticalityAware {
        coverage: f64,
        #[serde(default = "default_step")]
        step: f64,
        #[serde(default = "default_passes")]
        passes: u32,
    },
}

fn default_step() -> f64 {
    0.2
}

fn default_passes() -> u32 {
    3
}

impl VpMode {
    pub fn coverage(&self) -> f64 {
        match self {
            VpMode::CriticalityUnaware { coverage, .. }
            | VpMode::CriticalityAware { coverage, .. } => *coverage,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValuePrediction {
    pub mode: VpMode,
    /// Predictions are correct when absent; otherwise every predicted load
    /// costs its consumers this many extra cycles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mispredict_penalty: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Scenario {
    IdealFetch,
    IdealBranchPrediction,
    ValuePrediction(ValuePrediction),
    Fuse(FuseRule),
    Crack(CrackRule),
    /// Sets the configuration field at JSON pointer `key` (e.g.
    /// `/machine/mshrs` or `/cost/latency/IntMul`; dots also work).
    ParamOverride {
        key: String,
        value: Value,
    },
    BlockFormat(BlockFormat),
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        match self {
            Scenario::ValuePrediction(vp) => {
                let c = vp.mode.coverage();
                if !(0.0..=1.0).contains(&c) {
                    return bad(format!("coverage {c} outside [0, 1]"));
                }
                if let VpMode::CriticalityAware { step, .. } = vp.mode {
                    if !(step > 0.0 && step <= 1.0) {
                        return bad(format!("step {step} outside (0, 1]"));
                    }
                }
                Ok(())
            }
            Scenario::Crack(r) if r.uops.is_empty() => Err(Error::EmptyCrack),
            Scenario::Crack(r) => {
                for u in &r.uops {
                    if u.op == OpClass::Branch && r.op != OpClass::Branch {
                        return bad("only branches crack into a branch micro-op".into());
                    }
                    if u.op.is_memory() && !r.op.is_memory() {
                        return bad("only memory ops crack into memory micro-ops".into());
                    }
                }
                Ok(())
            }
            Scenario::ParamOverride { key, .. } if key.is_empty() => {
                bad("empty override key".into())
            }
            Scenario::BlockFormat(f) => f.validate(),
            _ => Ok(()),
        }
    }

    /// Short stable name used in reports.
    pub fn id(&self) -> String {
        match self {
            Scenario::IdealFetch => "ideal_fetch".into(),
            Scenario::IdealBranchPrediction => "ideal_bp".into(),
            Scenario::ValuePrediction(vp) => {
                let pen = vp
                    .mispredict_penalty
                    .map(|p| format!(",penalty={p}"))
                    .unwrap_or_default();
                match &vp.mode {
                    VpMode::CriticalityUnaware { coverage, seed } => {
                        format!("vp_unaware(coverage={coverage},seed={seed}{pen})")
                    }
                    VpMode::CriticalityAware { coverage, .. } => {
                        format!("vp_aware(coverage={coverage}{pen})")
                    }
                }
            }
            Scenario::Fuse(r) => format!("fuse({}+{}->{})", r.first, r.second, r.latency),
            Scenario::Crack(r) => format!("crack({}->{})", r.op, r.uops.len()),
            Scenario::ParamOverride { key, value } => format!("{key}={value}"),
            Scenario::BlockFormat(f) => format!("block_format({})", f.layout.as_str()),
        }
    }
}

/// One non-baseline lane of a scenario file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LaneSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

impl LaneSpec {
    pub fn new(scenarios: Vec<Scenario>) -> Self {
        LaneSpec {
            label: None,
            scenarios,
        }
    }
}

/// A scenario file: the lanes after the implicit baseline.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub lanes: Vec<LaneSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Ino,
    OooBasic,
    OooAdvanced,
    Edge,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ino => "ino",
            ModelKind::OooBasic => "ooo-basic",
            ModelKind::OooAdvanced => "ooo-advanced",
            ModelKind::Edge => "edge",
        }
    }

    pub fn for_pipeline(p: PipelineKind) -> Self {
        match p {
            PipelineKind::InOrder => ModelKind::Ino,
            PipelineKind::OutOfOrder => ModelKind::OooAdvanced,
            PipelineKind::Edge => ModelKind::Edge,
        }
    }

    pub fn pipeline(self) -> PipelineKind {
        match self {
            ModelKind::Ino => PipelineKind::InOrder,
            ModelKind::OooBasic | ModelKind::OooAdvanced => PipelineKind::OutOfOrder,
            ModelKind::Edge => PipelineKind::Edge,
        }
    }
}

/// A lane with its scenarios folded into an effective configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Lane {
    pub index: usize,
    pub label: String,
    pub scenario_ids: Vec<String>,
    pub config: Config,
    pub ideal_fetch: bool,
    pub ideal_bp: bool,
    pub block_format: Option<BlockFormat>,
    pub transforms: Vec<TransformRule>,
    pub value: Option<ValuePrediction>,
}

impl Lane {
    fn params(&self) -> LaneParams {
        LaneParams {
            cost: self.config.cost.clone(),
            ideal_fetch: self.ideal_fetch,
            block_format: self.block_format.clone(),
        }
    }

    fn seeds(&self) -> Vec<u64> {
        let mut s = Vec::new();
        if let BranchModel::Stochastic { seed, .. } = self.config.branch {
            s.push(seed);
        }
        if let Some(ValuePrediction {
            mode: VpMode::CriticalityUnaware { seed, .. },
            ..
        }) = self.value
        {
            s.push(seed);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LanePlan {
    pub model: ModelKind,
    pub lanes: Vec<Lane>,
    /// Lane indices of each pass; pass 0 holds lane 0.
    pub passes: Vec<Vec<usize>>,
}

fn pointer_of(key: &str) -> String {
    if key.starts_with('/') {
        key.into()
    } else {
        format!("/{}", key.replace('.', "/"))
    }
}

/// Applies JSON-pointer overrides to `base`. Keys must name existing
/// configuration fields; a key may appear only once per lane unless the
/// values agree.
pub fn apply_overrides(base: &Config, overrides: &[(String, Value)]) -> Result<Config> {
    let mut seen: Vec<(String, &Value)> = Vec::new();
    let mut json = serde_json::to_value(base).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    for (key, value) in overrides {
        let ptr = pointer_of(key);
        if let Some((_, v)) = seen.iter().find(|(k, _)| *k == ptr) {
            if *v != value {
                return Err(Error::ConflictingOverride(key.clone()));
            }
            continue;
        }
        seen.push((ptr.clone(), value));
        let (parent, field) = ptr.rsplit_once('/').expect("pointer starts with /");
        let unknown = || Error::InvalidScenario(format!("unknown configuration field `{key}`"));
        let obj = json
            .pointer_mut(parent)
            .and_then(Value::as_object_mut)
            .ok_or_else(unknown)?;
        obj.insert(field.into(), value.clone());
    }
    let cfg: Config = serde_json::from_value(json)
        .map_err(|e| Error::InvalidScenario(format!("override does not type-check: {e}")))?;
    let back = serde_json::to_value(&cfg).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    for (ptr, value) in &seen {
        let landed = match back.pointer(ptr) {
            Some(v) => v == *value,
            None => value.is_null(),
        };
        if !landed {
            return Err(Error::InvalidScenario(format!(
                "unknown configuration field `{ptr}`"
            )));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn build_lane(base: &Config, index: usize, spec: &LaneSpec) -> Result<Lane> {
    let mut overrides = Vec::new();
    let mut lane = Lane {
        index,
        label: String::new(),
        scenario_ids: spec.scenarios.iter().map(Scenario::id).collect(),
        config: base.clone(),
        ideal_fetch: false,
        ideal_bp: false,
        block_format: None,
        transforms: Vec::new(),
        value: None,
    };
    for s in &spec.scenarios {
        s.validate()?;
        match s {
            Scenario::IdealFetch => lane.ideal_fetch = true,
            Scenario::IdealBranchPrediction => lane.ideal_bp = true,
            Scenario::ValuePrediction(vp) => {
                if lane.value.replace(vp.clone()).is_some() {
                    return Err(Error::InvalidScenario(
                        "a lane takes at most one value-prediction scenario".into(),
                    ));
                }
            }
            Scenario::Fuse(r) => lane.transforms.push(TransformRule::Fuse(r.clone())),
            Scenario::Crack(r) => lane.transforms.push(TransformRule::Crack(r.clone())),
            Scenario::ParamOverride { key, value } => overrides.push((key.clone(), value.clone())),
            Scenario::BlockFormat(f) => {
                if lane
                    .block_format
                    .replace(f.clone())
                    .is_some_and(|old| old != *f)
                {
                    return Err(Error::ConflictingOverride("block_format".into()));
                }
            }
        }
    }
    if !overrides.is_empty() {
        lane.config = apply_overrides(base, &overrides)?;
    }
    lane.label = match &spec.label {
        Some(l) => l.clone(),
        None if lane.scenario_ids.is_empty() => "baseline".into(),
        None => lane.scenario_ids.join("+"),
    };
    Ok(lane)
}

/// What must agree between lanes sharing a pass.
fn topology_key(lane: &Lane, model: ModelKind) -> String {
    let c = &lane.config;
    let mut key = serde_json::to_string(&(
        &c.machine,
        &c.cache,
        &c.branch,
        &lane.transforms,
        lane.ideal_bp,
        &lane.value,
    ))
    .expect("plan serializes");
    // Critical-path-ordered issue is driven by lane 0's weights, so
    // latency changes get their own schedule.
    if model != ModelKind::Ino {
        key.push_str(&serde_json::to_string(&c.cost.latency).expect("latency serializes"));
    }
    key
}

/// Folds scenarios into per-lane configurations and groups lanes into
/// passes. `seed` replaces the branch model seed and every unaware
/// value-prediction seed.
pub fn build_lane_plan(
    base: &Config,
    specs: &[LaneSpec],
    model: ModelKind,
    seed: Option<u64>,
) -> Result<LanePlan> {
    let mut base = base.clone();
    if let Some(s) = seed {
        base.branch = base.branch.with_seed(s);
    }
    base.validate()?;
    if base.machine.pipeline != model.pipeline() {
        return Err(Error::WrongPipeline(match model.pipeline() {
            PipelineKind::InOrder => "in_order",
            PipelineKind::OutOfOrder => "out_of_order",
            PipelineKind::Edge => "edge",
        }));
    }
    let baseline = LaneSpec::default();
    let mut lanes = Vec::with_capacity(specs.len() + 1);
    for (i, spec) in core::iter::once(&baseline).chain(specs).enumerate() {
        let mut spec = spec.clone();
        if let Some(s) = seed {
            for sc in &mut spec.scenarios {
                if let Scenario::ValuePrediction(ValuePrediction {
                    mode: VpMode::CriticalityUnaware { seed: vs, .. },
                    ..
                }) = sc
                {
                    *vs = s;
                }
            }
        }
        let lane = build_lane(&base, i, &spec)?;
        if lane.config.machine.pipeline != base.machine.pipeline {
            return Err(Error::InvalidScenario(
                "overrides cannot change the pipeline kind".into(),
            ));
        }
        if model == ModelKind::Edge && (!lane.transforms.is_empty() || lane.value.is_some()) {
            return Err(Error::InvalidScenario(
                "fusion, cracking and value prediction apply to non-block traces only".into(),
            ));
        }
        lanes.push(lane);
    }
    let mut keys: Vec<String> = Vec::new();
    let mut passes: Vec<Vec<usize>> = Vec::new();
    for lane in &lanes {
        let k = topology_key(lane, model);
        match keys.iter().position(|x| *x == k) {
            Some(p) => passes[p].push(lane.index),
            None => {
                keys.push(k);
                passes.push(alloc::vec![lane.index]);
            }
        }
    }
    Ok(LanePlan {
        model,
        lanes,
        passes,
    })
}

/// The fused macro-op of `a` followed by `b`.
pub fn apply_fuse(
    rule: &FuseRule,
    a: &InstructionRecord,
    b: &InstructionRecord,
) -> InstructionRecord {
    let mem = [a, b].into_iter().find(|r| r.op.is_memory());
    let branch = [a, b].into_iter().find(|r| r.op == OpClass::Branch);
    let op = match (mem, branch) {
        (Some(m), _) => m.op,
        (None, Some(_)) => OpClass::Branch,
        (None, None) => a.op,
    };
    let mut src: Vec<u16> = Vec::new();
    for &r in a
        .src
        .iter()
        .chain(b.src.iter().filter(|r| !a.dst.contains(r)))
    {
        if !src.contains(&r) {
            src.push(r);
        }
    }
    let mut dst: Vec<u16> = Vec::new();
    for &r in a.dst.iter().chain(&b.dst) {
        if !dst.contains(&r) {
            dst.push(r);
        }
    }
    let mut out = InstructionRecord::new(a.seq, a.pc, op);
    out.src = src;
    out.dst = dst;
    out.recorded.fetch_cycles = a.recorded.fetch_cycles;
    out.recorded.exec_cycles = Some(rule.latency);
    if let Some(m) = mem.filter(|_| op.is_memory()) {
        out.mem_addr = m.mem_addr;
        out.mem_size = m.mem_size;
        out.recorded.mem_cycles = m.recorded.mem_cycles;
    }
    if let Some(br) = branch.filter(|_| op == OpClass::Branch) {
        out.taken = br.taken;
        out.recorded.bp_correct = br.recorded.bp_correct;
    }
    out.len = a.len.saturating_add(b.len);
    out.count = a.count + b.count;
    out
}

fn resolve_reg(rec: &InstructionRecord, r: RegRef) -> Result<u16> {
    let missing = |what: &str, i: usize| {
        Error::InvalidScenario(format!(
            "record seq {} has no {what} register {i} for a micro-op",
            rec.seq
        ))
    };
    match r {
        RegRef::Src(i) => rec.src.get(i).copied().ok_or_else(|| missing("source", i)),
        RegRef::Dst(i) => rec
            .dst
            .get(i)
            .copied()
            .ok_or_else(|| missing("destination", i)),
        RegRef::Temp(k) => Ok(TEMP_REG_BASE.saturating_add(k)),
    }
}

/// The micro-ops replacing `rec`. They keep `rec.seq`; callers renumber.
pub fn apply_crack(rule: &CrackRule, rec: &InstructionRecord) -> Result<Vec<InstructionRecord>> {
    if rule.uops.is_empty() {
        return Err(Error::EmptyCrack);
    }
    let mut out = Vec::with_capacity(rule.uops.len());
    for (i, u) in rule.uops.iter().enumerate() {
        let mut r = InstructionRecord::new(rec.seq, rec.pc, u.op);
        r.src = u
            .src
            .iter()
            .map(|&x| resolve_reg(rec, x))
            .collect::<Result<_>>()?;
        r.dst = u
            .dst
            .iter()
            .map(|&x| resolve_reg(rec, x))
            .collect::<Result<_>>()?;
        r.recorded.exec_cycles = u.latency;
        if u.op.is_memory() {
            if rec.mem_addr.is_none() {
                return Err(Error::InvalidScenario(format!(
                    "record seq {} has no address for a memory micro-op",
                    rec.seq
                )));
            }
            r.mem_addr = rec.mem_addr;
            r.mem_size = rec.mem_size;
            r.recorded.mem_cycles = rec.recorded.mem_cycles;
        }
        if u.op == OpClass::Branch {
            r.taken = rec.taken;
            r.recorded.bp_correct = rec.recorded.bp_correct;
        }
        r.recorded.fetch_cycles = match i {
            0 => rec.recorded.fetch_cycles,
            _ => rec.recorded.fetch_cycles.map(|_| 0),
        };
        r.len = rec.len;
        r.count = if i == 0 { rec.count } else { 0 };
        out.push(r);
    }
    Ok(out)
}

/// Applies fusion and cracking rules to a record stream and renumbers
/// `seq` densely from the first record's.
pub struct Transformed<I: Iterator<Item = Result<InstructionRecord>>> {
    input: Peekable<I>,
    rules: Vec<TransformRule>,
    queue: VecDeque<InstructionRecord>,
    next_seq: Option<u64>,
    failed: bool,
}

pub fn apply_transforms<I>(records: I, rules: &[TransformRule]) -> Transformed<I::IntoIter>
where
    I: IntoIterator<Item = Result<InstructionRecord>>,
{
    Transformed {
        input: records.into_iter().peekable(),
        rules: rules.to_vec(),
        queue: VecDeque::new(),
        next_seq: None,
        failed: false,
    }
}

fn fuse_for<'r>(
    rules: &'r [TransformRule],
    a: &InstructionRecord,
    b: &InstructionRecord,
) -> Option<&'r FuseRule> {
    rules.iter().find_map(|r| match r {
        TransformRule::Fuse(f)
            if f.first == a.op
                && f.second == b.op
                && (!f.require_dependency || b.src.iter().any(|s| a.dst.contains(s))) =>
        {
            Some(f)
        }
        _ => None,
    })
}

impl<I: Iterator<Item = Result<InstructionRecord>>> Transformed<I> {
    fn crack_for(&self, rec: &InstructionRecord) -> Option<&CrackRule> {
        self.rules.iter().find_map(|r| match r {
            TransformRule::Crack(c) if c.op == rec.op => Some(c),
            _ => None,
        })
    }

    fn expand(&mut self, rec: InstructionRecord) -> Result<()> {
        let rules = core::mem::take(&mut self.rules);
        let fused = match self.input.peek() {
            Some(Ok(next)) => fuse_for(&rules, &rec, next).cloned(),
            _ => None,
        };
        self.rules = rules;
        if let Some(rule) = fused {
            let next = self.input.next().expect("peeked")?;
            for r in [&rec, &next] {
                if self.crack_for(r).is_some() {
                    return Err(Error::RuleConflict { seq: r.seq });
                }
            }
            self.queue.push_back(apply_fuse(&rule, &rec, &next));
        } else if let Some(rule) = self.crack_for(&rec) {
            let uops = apply_crack(rule, &rec)?;
            self.queue.extend(uops);
        } else {
            self.queue.push_back(rec);
        }
        Ok(())
    }
}

impl<I: Iterator<Item = Result<InstructionRecord>>> Iterator for Transformed<I> {
    type Item = Result<InstructionRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if self.queue.is_empty() {
            let rec = match self.input.next()? {
                Ok(r) => r,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            };
            if self.next_seq.is_none() {
                self.next_seq = Some(rec.seq);
            }
            if let Err(e) = self.expand(rec) {
                self.failed = true;
                return Some(Err(e));
            }
        }
        let mut r = self.queue.pop_front()?;
        let seq = self.next_seq.expect("set with the first record");
        r.seq = seq;
        self.next_seq = Some(seq + 1);
        Some(Ok(r))
    }
}

/// Resolves lane-independent costs record by record.
pub fn resolve_records<I>(
    records: I,
    mut resolver: Resolver,
    table: CostTable,
) -> impl Iterator<Item = Result<ResolvedInstr>>
where
    I: IntoIterator<Item = Result<InstructionRecord>>,
{
    records.into_iter().map(move |r| {
        let rec = r?;
        let costs = resolver.resolve(&rec, &table)?;
        Ok(ResolvedInstr::new(rec, costs))
    })
}

/// Which loads get a value prediction in one run.
#[derive(Clone, Debug)]
enum Marks {
    None,
    Unaware { coverage: f64, seed: u64 },
    Set(BTreeSet<u64>),
}

impl Marks {
    fn covers(&self, seq: u64) -> bool {
        match self {
            Marks::None => false,
            Marks::Unaware { coverage, seed } => keyed_unit(*seed, seq) < *coverage,
            Marks::Set(s) => s.contains(&seq),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// `ooo-advanced` only: key every E vertex once, at admission.
    pub approximate: bool,
    /// Backtrack critical paths and compute breakdowns.
    pub critical_path: bool,
    pub edge_log: bool,
    pub schedule: bool,
}

/// Result of a plan plus the raw model output of every pass.
#[derive(Clone, Debug)]
pub struct PlanRun {
    pub result: AnalysisResult,
    pub outputs: Vec<ModelOutput>,
}

struct Hashing<'a, I> {
    inner: I,
    h: &'a mut Fnv64,
}

impl<I: Iterator<Item = Result<TraceItem>>> Iterator for Hashing<'_, I> {
    type Item = Result<TraceItem>;

    fn next(&mut self) -> Option<Self::Item> {
        let item = self.inner.next()?;
        if let Ok(it) = &item {
            let bytes = match it {
                TraceItem::Instr(r) => serde_json::to_vec(r),
                TraceItem::BlockHeader(b) => serde_json::to_vec(b),
            };
            if let Ok(b) = bytes {
                self.h.write(&b);
                self.h.write(b"\n");
            }
        }
        Some(item)
    }
}

struct RunOutput {
    out: ModelOutput,
    digest: u64,
    /// (seq, memory cycles) of every load.
    loads: Vec<(u64, u32)>,
}

fn run_once<F, I>(
    plan: &LanePlan,
    lanes: &[usize],
    marks: &Marks,
    penalty: Option<u32>,
    build: &BuildOptions,
    opts: &RunOptions,
    source: &mut F,
) -> Result<RunOutput>
where
    F: FnMut() -> Result<I>,
    I: Iterator<Item = Result<TraceItem>>,
{
    let lead = &plan.lanes[lanes[0]];
    let cfg = &lead.config;
    let params: Vec<LaneParams> = lanes.iter().map(|&i| plan.lanes[i].params()).collect();
    let resolver = Resolver::new(&cfg.cache, &cfg.branch)?;
    let mut h = Fnv64::default();
    let items = Hashing {
        inner: source()?,
        h: &mut h,
    };
    let ideal_bp = lead.ideal_bp;
    let fix_bp = move |mut ins: ResolvedInstr| {
        if ideal_bp && ins.rec.op == OpClass::Branch {
            ins.costs.bp_correct = Some(true);
        }
        ins
    };
    let mut loads = Vec::new();
    let out = if plan.model == ModelKind::Edge {
        let mut resolver = resolver;
        let table = cfg.cost.clone();
        let blocks = group_blocks(items).map(|b| {
            let mut rb = resolve_block(&mut resolver, b?, &table)?;
            rb.members = rb.members.into_iter().map(fix_bp).collect();
            Ok(rb)
        });
        model_edge_core(blocks, &cfg.machine, &params, build)?
    } else {
        let records = items.filter_map(|it| match it {
            Ok(TraceItem::Instr(r)) => Some(Ok(r)),
            Ok(TraceItem::BlockHeader(_)) => None,
            Err(e) => Some(Err(e)),
        });
        let records = apply_transforms(checked_seq(records), &lead.transforms);
        let mut mark = |mut ins: ResolvedInstr| {
            if ins.rec.op == OpClass::Load {
                loads.push((ins.rec.seq, ins.costs.mem_cycles));
                if marks.covers(ins.rec.seq) {
                    ins.value = Some(match penalty {
                        None => ValueMark::Predicted,
                        Some(p) => ValueMark::Mispredicted { penalty: p },
                    });
                }
            }
            ins
        };
        let trace = resolve_records(records, resolver, cfg.cost.clone())
            .map(move |r| r.map(fix_bp).map(&mut mark));
        match plan.model {
            ModelKind::Ino => model_ino_core(trace, &cfg.machine, &params, build)?,
            ModelKind::OooBasic => model_ooo_core_basic(trace, &cfg.machine, &params, build)?,
            ModelKind::OooAdvanced => {
                model_ooo_core_advanced(trace, &cfg.machine, &params, build, opts.approximate)?
            }
            ModelKind::Edge => unreachable!("handled above"),
        }
    };
    Ok(RunOutput {
        out,
        digest: h.finish(),
        loads,
    })
}

fn round_up_half(x: f64) -> usize {
    (x + 0.5) as usize
}

fn ceil(x: f64) -> usize {
    let t = x as usize;
    if (t as f64) < x {
        t + 1
    } else {
        t
    }
}

const AWARE_SEED: u64 = 0x5eed_c417;

/// Loads in the order the criticality-aware procedure predicts them: each
/// run adds a random `step` of the loads whose register edges lie on the
/// current critical path, then the rest follow by latency. Every coverage
/// takes a prefix, so larger coverages predict supersets.
#[allow(clippy::too_many_arguments)]
fn aware_order<F, I>(
    plan: &LanePlan,
    lanes: &[usize],
    step: f64,
    passes: u32,
    penalty: Option<u32>,
    opts: &RunOptions,
    source: &mut F,
    runs: &mut u32,
) -> Result<Vec<u64>>
where
    F: FnMut() -> Result<I>,
    I: Iterator<Item = Result<TraceItem>>,
{
    let build = BuildOptions {
        provenance: true,
        ..BuildOptions::default()
    };
    let mut order: Vec<u64> = Vec::new();
    let mut chosen = BTreeSet::new();
    let mut loads: BTreeMap<u64, u32> = BTreeMap::new();
    let mut chunk = 1;
    for pass in 0..passes.max(1) {
        let r = run_once(
            plan,
            lanes,
            &Marks::Set(chosen.clone()),
            penalty,
            &build,
            opts,
            source,
        )?;
        *runs += 1;
        if pass == 0 {
            loads = r.loads.into_iter().collect();
            chunk = ceil(step * loads.len() as f64).max(1);
        }
        if passes == 0 {
            break;
        }
        let path = r.out.paths.first().ok_or(Error::MissingCriticality)?;
        let mut critical: Vec<(u64, u32)> = path
            .steps
            .iter()
            .filter(|s| matches!(s.kind, EdgeKind::DataRegister(_)) && s.src.seq != s.dst.seq)
            .filter_map(|s| loads.get(&s.src.seq).map(|&c| (s.src.seq, c)))
            .filter(|(seq, _)| !chosen.contains(seq))
            .collect();
        critical.sort_by_key(|a| a.0);
        critical.dedup();
        // A random pick among the critical loads, reproducible per trace.
        critical.sort_by(|a, b| {
            keyed_unit(AWARE_SEED, a.0)
                .total_cmp(&keyed_unit(AWARE_SEED, b.0))
                .then(a.0.cmp(&b.0))
        });
        if critical.is_empty() {
            break;
        }
        for &(seq, _) in critical.iter().take(chunk) {
            chosen.insert(seq);
            order.push(seq);
        }
    }
    let mut rest: Vec<(u64, u32)> = loads
        .iter()
        .map(|(&s, &c)| (s, c))
        .filter(|(s, _)| !chosen.contains(s))
        .collect();
    rest.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    order.extend(rest.into_iter().map(|(s, _)| s));
    Ok(order)
}

/// Runs every pass of `plan`. `source` must yield the same trace on every
/// call.
pub fn run_plan<F, I>(plan: &LanePlan, mut source: F, opts: &RunOptions) -> Result<PlanRun>
where
    F: FnMut() -> Result<I>,
    I: Iterator<Item = Result<TraceItem>>,
{
    let build = BuildOptions {
        provenance: opts.critical_path,
        edge_log: opts.edge_log,
        schedule: opts.schedule,
    };
    let mut digest: Option<u64> = None;
    let mut lane_results: Vec<Option<LaneResult>> = alloc::vec![None; plan.lanes.len()];
    let mut passes = Vec::new();
    let mut outputs = Vec::new();
    for (p, lanes) in plan.passes.iter().enumerate() {
        let lead = &plan.lanes[lanes[0]];
        let penalty = lead.value.as_ref().and_then(|v| v.mispredict_penalty);
        let mut runs = 0;
        let marks = match lead.value.as_ref().map(|v| &v.mode) {
            None => Marks::None,
            Some(&VpMode::CriticalityUnaware { coverage, seed }) => {
                Marks::Unaware { coverage, seed }
            }
            Some(&VpMode::CriticalityAware {
                coverage,
                step,
                passes,
            }) => {
                let order = aware_order(
                    plan,
                    lanes,
                    step,
                    passes,
                    penalty,
                    opts,
                    &mut source,
                    &mut runs,
                )?;
                let budget = round_up_half(coverage * order.len() as f64);
                Marks::Set(order.into_iter().take(budget).collect())
            }
        };
        let r = run_once(plan, lanes, &marks, penalty, &build, opts, &mut source)?;
        runs += 1;
        match digest {
            Some(d) if d != r.digest => return Err(Error::DigestMismatch),
            _ => digest = Some(r.digest),
        }
        for (k, &li) in lanes.iter().enumerate() {
            let lane = &plan.lanes[li];
            let path = r.out.paths.iter().find(|path| path.lane == k).cloned();
            let total = r.out.totals[k];
            lane_results[li] = Some(LaneResult {
                lane: li,
                pass: p,
                label: lane.label.clone(),
                total_cycles: total,
                instructions: r.out.instructions,
                cpi: cpi(total, r.out.instructions),
                config_digest: digest_hex(lane.config.digest()),
                scenarios: lane.scenario_ids.clone(),
                seeds: lane.seeds(),
                breakdown: path.as_ref().map(compute_breakdown),
                critical_path: path.map(|mut path| {
                    path.lane = li;
                    path
                }),
            });
        }
        passes.push(PassInfo {
            index: p,
            lanes: lanes.clone(),
            runs,
            records: r.out.records,
            peak_live: r.out.peak_live,
        });
        outputs.push(r.out);
    }
    Ok(PlanRun {
        result: AnalysisResult {
            model: plan.model.as_str().into(),
            trace_digest: digest_hex(digest.unwrap_or(Fnv64::default().finish())),
            passes,
            lanes: lane_results
                .into_iter()
                .map(|l| l.expect("every lane is in a pass"))
                .collect(),
        },
        outputs,
    })
}

/// Baseline-only analysis of `config`.
pub fn analyze<F, I>(
    config: &Config,
    model: ModelKind,
    source: F,
    opts: &RunOptions,
) -> Result<PlanRun>
where
    F: FnMut() -> Result<I>,
    I: Iterator<Item = Result<TraceItem>>,
{
    let plan = build_lane_plan(config, &[], model, None)?;
    run_plan(&plan, source, opts)
}

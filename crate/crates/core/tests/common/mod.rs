#![allow(dead_code)]

use degkit_core::config::{Config, MemStage, PipelineKind, UnitConfig};
use degkit_core::cost::{BranchModel, CacheConfig, CacheLevelConfig};
use degkit_core::deg::{v, VertexId};
use degkit_core::oracle::brute_force_critical_path;
use degkit_core::trace::{
    generate_synthetic_trace, InstructionRecord, OpClass, SyntheticTraceSpec, TraceItem,
};
use degkit_core::whatif::{build_lane_plan, run_plan, LaneSpec, ModelKind, PlanRun, RunOptions};

pub fn synthetic(n: u64, seed: u64) -> Vec<InstructionRecord> {
    generate_synthetic_trace(&SyntheticTraceSpec::typical(n, seed))
        .unwrap()
        .collect()
}

pub fn items(recs: &[InstructionRecord]) -> Vec<degkit_core::Result<TraceItem>> {
    recs.iter()
        .cloned()
        .map(|r| Ok(TraceItem::Instr(r)))
        .collect()
}

pub fn unit(name: &str, ops: &[OpClass], count: u32, pipelined: bool) -> UnitConfig {
    UnitConfig {
        name: name.into(),
        ops: ops.to_vec(),
        count,
        pipelined,
        pipe_depth: None,
    }
}

pub fn caches() -> CacheConfig {
    let level = |name: &str, cap, hit| CacheLevelConfig {
        name: name.into(),
        capacity: cap,
        line_size: 64,
        associativity: 4,
        hit_latency: hit,
    };
    CacheConfig {
        l1i: Some(level("l1i", 8 * 1024, 1)),
        l1d: Some(level("l1d", 8 * 1024, 2)),
        shared: vec![level("l2", 64 * 1024, 10)],
        memory_latency: 60,
    }
}

/// Three resource configurations per pipeline kind.
pub fn configs(pipeline: PipelineKind) -> Vec<Config> {
    let mut out = Vec::new();
    for variant in 0..3 {
        let mut c = Config::default();
        c.machine.pipeline = pipeline;
        c.cache = caches();
        c.branch = BranchModel::Stochastic {
            accuracy: 0.9,
            seed: 3,
        };
        c.cost.mispredict_penalty = 3;
        c.cost.base_fetch_cycles = 1;
        match variant {
            0 => {}
            1 => {
                c.machine.fetch_width = 2;
                c.machine.issue_width = 2;
                c.machine.commit_width = 2;
                c.machine.schema.dispatch = true;
                c.machine.units = vec![
                    unit(
                        "alu",
                        &[OpClass::IntAlu, OpClass::Branch, OpClass::Other],
                        2,
                        true,
                    ),
                    unit("muldiv", &[OpClass::IntMul, OpClass::IntDiv], 1, false),
                    unit(
                        "fpu",
                        &[OpClass::FpAlu, OpClass::FpMul, OpClass::FpDiv],
                        1,
                        true,
                    ),
                    unit("mem", &[OpClass::Load, OpClass::Store], 1, true),
                ];
                c.machine.lsq_size = Some(4);
                c.machine.mshrs = Some(2);
            }
            _ => {
                c.machine.fetch_width = 4;
                c.machine.issue_width = 3;
                c.machine.commit_width = 4;
                c.machine.schema.memory = MemStage::All;
                let mut fpu = unit(
                    "fpu",
                    &[OpClass::FpAlu, OpClass::FpMul, OpClass::FpDiv],
                    1,
                    true,
                );
                fpu.pipe_depth = Some(2);
                c.machine.units = vec![fpu, unit("div", &[OpClass::IntDiv], 1, false)];
                c.machine.window = 32;
                c.machine.mshrs = Some(1);
            }
        }
        c.validate().unwrap();
        out.push(c);
    }
    out
}

pub fn run(
    cfg: &Config,
    model: ModelKind,
    specs: &[LaneSpec],
    recs: &[InstructionRecord],
    opts: RunOptions,
) -> PlanRun {
    let plan = build_lane_plan(cfg, specs, model, None).unwrap();
    run_plan(&plan, || Ok(items(recs).into_iter()), &opts).unwrap()
}

/// The last commit vertex of a trace of `n` records.
pub fn last_commit(n: usize) -> VertexId {
    v::c(n as u64 - 1)
}

/// Oracle longest path to the final vertex, per lane.
pub fn oracle_totals(run: &PlanRun, n: usize) -> Vec<u64> {
    let out = &run.outputs[0];
    let edges = out.edges.as_ref().expect("edge log on");
    (0..out.totals.len())
        .map(|lane| {
            let d = brute_force_critical_path(edges, &[last_commit(n)], lane).unwrap();
            d[&last_commit(n)]
        })
        .collect()
}

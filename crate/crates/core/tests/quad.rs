use degkit_core::analysis::{compare, compute_breakdown};
use degkit_core::config::Config;
use degkit_core::deg::Category;
use degkit_core::oracle::brute_force_critical_path;
use degkit_core::trace::{InstructionRecord, TraceItem};
use degkit_core::whatif::{
    build_lane_plan, run_plan, FuseRule, LaneSpec, ModelKind, RunOptions, Scenario,
};
use serde_json::json;

fn config() -> Config {
    serde_json::from_str(include_str!("../../../configs/quad.json")).unwrap()
}

fn trace() -> Vec<InstructionRecord> {
    include_str!("../../../fixtures/quad.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn source() -> degkit_core::Result<impl Iterator<Item = degkit_core::Result<TraceItem>>> {
    Ok(trace().into_iter().map(|r| Ok(TraceItem::Instr(r))))
}

fn fast_mul() -> Vec<Scenario> {
    vec![
        Scenario::ParamOverride {
            key: "/machine/mshrs".into(),
            value: json!(2),
        },
        Scenario::ParamOverride {
            key: "/cost/latency/IntMul".into(),
            value: json!(2),
        },
    ]
}

fn mac() -> Scenario {
    Scenario::Fuse(FuseRule {
        first: degkit_core::trace::OpClass::IntMul,
        second: degkit_core::trace::OpClass::IntAlu,
        latency: 2,
        require_dependency: true,
    })
}

#[test]
fn baseline_is_15_cycles_through_the_multiplier() {
    let plan = build_lane_plan(&config(), &[], ModelKind::Ino, None).unwrap();
    let opts = RunOptions {
        critical_path: true,
        edge_log: true,
        ..RunOptions::default()
    };
    let run = run_plan(&plan, source, &opts).unwrap();
    let lane = &run.result.lanes[0];
    assert_eq!(lane.total_cycles, 15);
    assert_eq!(lane.cpi, 3.75);
    let path = lane.critical_path.as_ref().unwrap();
    let names: Vec<String> = path.vertices.iter().map(|v| v.to_string()).collect();
    assert_eq!(names.join("-"), "F0-E0-M0-E2-E3-M3-C3");
    let b = compute_breakdown(path);
    assert_eq!(b.total(), 15);
    assert_eq!(b.get(Category::MulDiv), 5);

    let edges = run.outputs[0].edges.as_ref().unwrap();
    let oracle = brute_force_critical_path(edges, &[], 0).unwrap();
    assert_eq!(oracle.values().max(), Some(&15));
}

#[test]
fn what_ifs_give_12_and_11() {
    let specs = [
        LaneSpec::new(fast_mul()),
        LaneSpec::new(fast_mul().into_iter().chain([mac()]).collect()),
    ];
    let plan = build_lane_plan(&config(), &specs, ModelKind::Ino, None).unwrap();
    let run = run_plan(&plan, source, &RunOptions::default()).unwrap();
    let t: Vec<u64> = run.result.lanes.iter().map(|l| l.total_cycles).collect();
    assert_eq!(t, [15, 12, 11]);
    assert_eq!(run.result.lanes[2].instructions, 4);
    let rows = compare(&[run.result]).unwrap();
    assert_eq!(rows[1].improvement, 0.2);
    assert!((rows[2].improvement - 4.0 / 15.0).abs() < 1e-12);
}

#[test]
fn faster_multiplier_alone_does_not_help() {
    let specs = [LaneSpec::new(vec![Scenario::ParamOverride {
        key: "/cost/latency/IntMul".into(),
        value: json!(2),
    }])];
    let plan = build_lane_plan(&config(), &specs, ModelKind::Ino, None).unwrap();
    assert_eq!(plan.passes.len(), 1);
    let run = run_plan(&plan, source, &RunOptions::default()).unwrap();
    assert_eq!(run.result.lanes[1].total_cycles, 15);
}

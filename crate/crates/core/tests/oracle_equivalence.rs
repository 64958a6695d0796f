mod common;

use common::*;
use degkit_core::config::PipelineKind;
use degkit_core::oracle::{replay_check, ReplayConfig};
use degkit_core::whatif::{LaneSpec, ModelKind, RunOptions, Scenario};
use serde_json::json;

fn logged() -> RunOptions {
    RunOptions {
        edge_log: true,
        schedule: true,
        ..RunOptions::default()
    }
}

fn lanes() -> Vec<LaneSpec> {
    vec![
        LaneSpec::new(vec![Scenario::ParamOverride {
            key: "/cost/decode_cycles".into(),
            value: json!(3),
        }]),
        LaneSpec::new(vec![Scenario::IdealFetch]),
    ]
}

#[test]
fn models_match_the_oracle_and_replay_cleanly() {
    for (pipeline, model) in [
        (PipelineKind::InOrder, ModelKind::Ino),
        (PipelineKind::OutOfOrder, ModelKind::OooBasic),
        (PipelineKind::OutOfOrder, ModelKind::OooAdvanced),
    ] {
        for (ci, cfg) in configs(pipeline).iter().enumerate() {
            for seed in 0..8 {
                let recs = synthetic(300, seed);
                let specs = if model == ModelKind::Ino {
                    lanes()
                } else {
                    Vec::new()
                };
                let r = run(cfg, model, &specs, &recs, logged());
                let out = &r.outputs[0];
                assert_eq!(
                    oracle_totals(&r, recs.len()),
                    out.totals,
                    "{model:?} config {ci} seed {seed}"
                );
                let rc = ReplayConfig::from_machine(&cfg.machine);
                for (lane, s) in out.schedule.as_ref().unwrap().iter().enumerate() {
                    let v = replay_check(s, &rc);
                    assert!(
                        v.is_empty(),
                        "{model:?} config {ci} seed {seed} lane {lane}: {:?}",
                        &v[..v.len().min(3)]
                    );
                }
            }
        }
    }
}

mod common;

use common::*;
use degkit_core::config::PipelineKind;
use degkit_core::whatif::{ModelKind, RunOptions};

#[test]
fn exact_window_matches_basic_when_the_trace_fits() {
    for (ci, cfg) in configs(PipelineKind::OutOfOrder).into_iter().enumerate() {
        for seed in 0..10 {
            let recs = synthetic(u64::from(cfg.machine.window).min(150), seed);
            let b = run(&cfg, ModelKind::OooBasic, &[], &recs, RunOptions::default());
            let a = run(
                &cfg,
                ModelKind::OooAdvanced,
                &[],
                &recs,
                RunOptions::default(),
            );
            assert_eq!(
                a.outputs[0].totals, b.outputs[0].totals,
                "config {ci} seed {seed}"
            );
        }
    }
}

#[test]
fn approximate_cpi_is_close() {
    let mut worst: f64 = 0.0;
    for cfg in configs(PipelineKind::OutOfOrder) {
        let mut cfg = cfg;
        cfg.machine.window = 32;
        for seed in 0..4 {
            let recs = synthetic(50 * 32, seed);
            let exact = run(
                &cfg,
                ModelKind::OooAdvanced,
                &[],
                &recs,
                RunOptions::default(),
            );
            let approx = run(
                &cfg,
                ModelKind::OooAdvanced,
                &[],
                &recs,
                RunOptions {
                    approximate: true,
                    ..RunOptions::default()
                },
            );
            let (e, a) = (exact.result.lanes[0].cpi, approx.result.lanes[0].cpi);
            worst = worst.max((a - e).abs() / e);
        }
    }
    eprintln!("worst {worst}");
    assert!(worst <= 0.05);
}

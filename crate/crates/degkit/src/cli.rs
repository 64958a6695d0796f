//! Command-line driver.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use degkit_core::analysis::{compare, format_improvement};
use degkit_core::config::Config;
use degkit_core::oracle::{
    brute_force_critical_path, dfs_critical_path, replay_check, ReplayConfig, ORACLE_VERTEX_CAP,
};
use degkit_core::trace::{generate_synthetic_trace, SyntheticTraceSpec, TraceItem};
use degkit_core::whatif::{
    build_lane_plan, run_plan, LanePlan, LaneSpec, ModelKind, PlanRun, RunOptions, Scenario,
    ValuePrediction,
};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::files::{
    load_config, load_grid, load_json, load_scenarios, load_trace_spec, vp_mode, Grid, VpKind,
};
use crate::io::{read_trace, TraceReader};
use crate::report::{
    curve_csv, sha256_file, to_dot, write_output, CurvePoint, Format, Inputs, Report,
};

#[derive(Debug, Parser)]
#[command(
    name = "degkit",
    version,
    about = "Critical-path performance modeling over instruction traces"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Ino,
    OooBasic,
    OooAdvanced,
    Edge,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Ino => ModelKind::Ino,
            ModelArg::OooBasic => ModelKind::OooBasic,
            ModelArg::OooAdvanced => ModelKind::OooAdvanced,
            ModelArg::Edge => ModelKind::Edge,
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Core model [default: from the config's pipeline kind]
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// ooo-advanced: key each instruction once, when it enters the window
    #[arg(long)]
    pub approximate: bool,
    /// Override the scheduling window size
    #[arg(long, value_name = "N")]
    pub window: Option<u32>,
    /// Expected total lane count, baseline included
    #[arg(long, value_name = "N")]
    pub lanes: Option<usize>,
    /// Backtrack critical paths and report category breakdowns
    #[arg(long)]
    pub critical_path: bool,
    /// Write the graph in DOT form (small traces only)
    #[arg(long, value_name = "FILE")]
    pub dump_graph: Option<PathBuf>,
    /// Report format
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Seed for every stochastic component
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Report destination
    #[arg(long, short, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Largest register id + 1 accepted in traces
    #[arg(long, value_name = "N")]
    pub reg_count: Option<u16>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze a trace; prints cycles and CPI per lane
    Analyze {
        trace: PathBuf,
        config: PathBuf,
        /// Scenario file adding lanes after the baseline
        #[arg(long, value_name = "FILE")]
        scenarios: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare scenario lanes against the baseline
    Whatif {
        trace: PathBuf,
        config: PathBuf,
        scenarios: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Expand a parameter grid into lanes and emit a curve
    Sweep {
        trace: PathBuf,
        config: PathBuf,
        grid: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic trace
    GenTrace {
        /// Synthetic trace spec; a typical integer mix when omitted
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
        out: PathBuf,
        /// Instruction count (overrides the spec)
        #[arg(long, value_name = "N")]
        count: Option<u64>,
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
    },
    /// Check the model against the oracles; exit 3 on any mismatch
    Validate {
        trace: PathBuf,
        config: PathBuf,
        /// JSON list of expected per-lane total cycles
        #[arg(long, value_name = "FILE")]
        expected: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// Runs a parsed command line, returning what to print on stdout.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Analyze {
            trace,
            config,
            scenarios,
            common,
        } => analyze(&trace, &config, scenarios.as_deref(), &common, false),
        Command::Whatif {
            trace,
            config,
            scenarios,
            common,
        } => analyze(&trace, &config, Some(&scenarios), &common, true),
        Command::Sweep {
            trace,
            config,
            grid,
            common,
        } => sweep(&trace, &config, &grid, &common),
        Command::GenTrace {
            spec,
            out,
            count,
            seed,
        } => gen_trace(spec.as_deref(), &out, count, seed),
        Command::Validate {
            trace,
            config,
            expected,
            common,
        } => validate(&trace, &config, expected.as_deref(), &common),
    }
}

struct Setup {
    trace: PathBuf,
    config: Config,
    inputs: Inputs,
    model: ModelKind,
}

fn setup(trace: &Path, config: &Path, scenarios: Option<&Path>, common: &Common) -> Result<Setup> {
    let (cfg_path, mut cfg) = load_config(config)?;
    if let Some(w) = common.window {
        cfg.machine.window = w;
        cfg.validate().map_err(|e| Error::Input {
            path: cfg_path.clone(),
            source: e,
        })?;
    }
    let model = common
        .model
        .map(ModelKind::from)
        .unwrap_or_else(|| ModelKind::for_pipeline(cfg.machine.pipeline));
    let inputs = Inputs {
        trace_sha256: sha256_file(trace)?,
        config_sha256: sha256_file(&cfg_path)?,
        scenarios_sha256: scenarios.map(sha256_file).transpose()?,
    };
    Ok(Setup {
        trace: trace.to_path_buf(),
        config: cfg,
        inputs,
        model,
    })
}

fn plan(s: &Setup, specs: &[LaneSpec], common: &Common) -> Result<LanePlan> {
    if let Some(n) = common.lanes {
        if n != specs.len() + 1 {
            return Err(Error::Usage(format!(
                "--lanes {n} does not match the {} lanes of the scenarios (baseline included)",
                specs.len() + 1
            )));
        }
    }
    Ok(build_lane_plan(&s.config, specs, s.model, common.seed)?)
}

fn reader(
    path: &Path,
    reg_count: Option<u16>,
) -> degkit_core::Result<TraceReader<Box<dyn BufRead>>> {
    read_trace(path)
        .map(|r| r.with_reg_count(reg_count))
        .map_err(|e| degkit_core::Error::MalformedLine {
            line: 0,
            field: None,
            reason: e.to_string(),
        })
}

fn execute(
    s: &Setup,
    plan: &LanePlan,
    opts: &RunOptions,
    reg_count: Option<u16>,
) -> Result<PlanRun> {
    run_plan(plan, || reader(&s.trace, reg_count), opts).map_err(|e| match e {
        e @ (degkit_core::Error::MalformedLine { .. }
        | degkit_core::Error::SeqDiscontinuity { .. }
        | degkit_core::Error::InvalidRecord { .. }
        | degkit_core::Error::RegisterOutOfRange { .. }
        | degkit_core::Error::MalformedBlock { .. }) => Error::Input {
            path: s.trace.clone(),
            source: e,
        },
        e => Error::Core(e),
    })
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn summary(run: &PlanRun, show_improvement: bool) -> Result<String> {
    let rows = compare(std::slice::from_ref(&run.result))?;
    let mut out = String::new();
    for (l, row) in run.result.lanes.iter().zip(&rows) {
        if l.lane == 0 {
            let _ = writeln!(
                out,
                "total_cycles={} cpi={}",
                l.total_cycles,
                fmt_num(l.cpi)
            );
        } else {
            let _ = write!(
                out,
                "lane={} total_cycles={} cpi={}",
                l.lane,
                l.total_cycles,
                fmt_num(l.cpi)
            );
            if show_improvement || l.lane > 0 {
                let _ = write!(out, " improvement={}", format_improvement(row.improvement));
            }
            let _ = writeln!(out, " label={}", l.label);
        }
        if let Some((cat, cycles)) = l.breakdown.and_then(|b| b.top()) {
            let _ = writeln!(out, "  top_category={} cycles={}", cat.as_str(), cycles);
        }
        if l.lane == 0 {
            if let Some(p) = &l.critical_path {
                let names: Vec<String> = p.vertices.iter().map(|v| v.to_string()).collect();
                if names.len() <= 64 {
                    let _ = writeln!(out, "  critical_path={}", names.join("-"));
                } else {
                    let _ = writeln!(out, "  critical_path_vertices={}", names.len());
                }
            }
        }
    }
    if run.result.passes.len() > 1 {
        let _ = writeln!(out, "passes={}", run.result.passes.len());
    }
    Ok(out)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    if let Some(p) = out {
        write_output(p, text)?;
    }
    Ok(())
}

fn analyze(
    trace: &Path,
    config: &Path,
    scenarios: Option<&Path>,
    common: &Common,
    whatif: bool,
) -> Result<String> {
    let s = setup(trace, config, scenarios, common)?;
    let specs = scenarios
        .map(load_scenarios)
        .transpose()?
        .unwrap_or_default();
    let plan = plan(&s, &specs, common)?;
    let opts = RunOptions {
        approximate: common.approximate,
        critical_path: common.critical_path,
        edge_log: common.dump_graph.is_some(),
        schedule: false,
    };
    let run = execute(&s, &plan, &opts, common.reg_count)?;
    if let Some(p) = &common.dump_graph {
        let edges = run
            .outputs
            .first()
            .and_then(|o| o.edges.as_deref())
            .unwrap_or(&[]);
        write_output(p, &to_dot(edges))?;
    }
    let report = Report::new(s.inputs, run.result.clone())?;
    emit(common.out.as_deref(), &report.render(common.format))?;
    summary(&run, whatif)
}

#[derive(Serialize)]
struct Curve<'a> {
    inputs: &'a Inputs,
    points: &'a [CurvePoint],
}

fn sweep(trace: &Path, config: &Path, grid_path: &Path, common: &Common) -> Result<String> {
    let mut s = setup(trace, config, Some(grid_path), common)?;
    let grid = load_grid(grid_path)?;
    // (series, x, lane indices) per curve point.
    let mut points: Vec<(String, String, Vec<usize>)> = Vec::new();
    let mut specs: Vec<LaneSpec> = Vec::new();
    match &grid {
        Grid::Override { key, values } => {
            for v in values {
                specs.push(LaneSpec {
                    label: Some(format!("{key}={v}")),
                    scenarios: vec![Scenario::ParamOverride {
                        key: key.clone(),
                        value: v.clone(),
                    }],
                });
                points.push((key.clone(), v.to_string(), vec![specs.len()]));
            }
        }
        Grid::ValuePrediction {
            coverage,
            modes,
            seeds,
            mispredict_penalty,
        } => {
            for &mode in modes {
                let series = match mode {
                    VpKind::CriticalityUnaware => "criticality_unaware",
                    VpKind::CriticalityAware => "criticality_aware",
                };
                for &c in coverage {
                    let seeds: &[u64] = match mode {
                        VpKind::CriticalityUnaware => seeds,
                        VpKind::CriticalityAware => &[0],
                    };
                    let mut lanes = Vec::new();
                    for &seed in seeds {
                        specs.push(LaneSpec {
                            label: Some(format!("{series}@{c}#{seed}")),
                            scenarios: vec![Scenario::ValuePrediction(ValuePrediction {
                                mode: vp_mode(mode, c, seed),
                                mispredict_penalty: *mispredict_penalty,
                            })],
                        });
                        lanes.push(specs.len());
                    }
                    points.push((series.into(), fmt_num(c), lanes));
                }
            }
        }
    }
    // The grid's own seeds must survive; --seed only reseeds the branch model.
    if let Some(seed) = common.seed {
        s.config.branch = s.config.branch.with_seed(seed);
    }
    let plan = plan(
        &s,
        &specs,
        &Common {
            seed: None,
            ..clone_common(common)
        },
    )?;
    let opts = RunOptions {
        approximate: common.approximate,
        ..RunOptions::default()
    };
    let run = execute(&s, &plan, &opts, common.reg_count)?;
    let lanes = &run.result.lanes;
    let mut curve = vec![CurvePoint {
        series: "baseline".into(),
        x: String::new(),
        lanes: vec![0],
        total_cycles: lanes[0].total_cycles as f64,
        cpi: lanes[0].cpi,
        cpi_min: lanes[0].cpi,
        cpi_max: lanes[0].cpi,
    }];
    for (series, x, idx) in points {
        let cpis: Vec<f64> = idx.iter().map(|&i| lanes[i].cpi).collect();
        let cycles: f64 = idx
            .iter()
            .map(|&i| lanes[i].total_cycles as f64)
            .sum::<f64>()
            / idx.len() as f64;
        curve.push(CurvePoint {
            series,
            x,
            lanes: idx,
            total_cycles: cycles,
            cpi: cpis.iter().sum::<f64>() / cpis.len() as f64,
            cpi_min: cpis.iter().copied().fold(f64::INFINITY, f64::min),
            cpi_max: cpis.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    let text = match common.format {
        Format::Csv => curve_csv(&curve),
        Format::Json => {
            let mut t = serde_json::to_string_pretty(&Curve {
                inputs: &s.inputs,
                points: &curve,
            })
            .expect("curve serializes");
            t.push('\n');
            t
        }
    };
    emit(common.out.as_deref(), &text)?;
    let mut out = format!(
        "points={} lanes={} passes={}\n",
        curve.len(),
        lanes.len(),
        run.result.passes.len()
    );
    if common.out.is_none() {
        out.push_str(&text);
    }
    Ok(out)
}

fn clone_common(c: &Common) -> Common {
    Common {
        model: c.model,
        approximate: c.approximate,
        window: c.window,
        lanes: c.lanes,
        critical_path: c.critical_path,
        dump_graph: c.dump_graph.clone(),
        format: c.format,
        seed: c.seed,
        out: c.out.clone(),
        reg_count: c.reg_count,
    }
}

fn gen_trace(
    spec: Option<&Path>,
    out: &Path,
    count: Option<u64>,
    seed: Option<u64>,
) -> Result<String> {
    let mut spec = match spec {
        Some(p) => load_trace_spec(p)?,
        None => SyntheticTraceSpec::typical(10_000, 0),
    };
    if let Some(n) = count {
        spec.instruction_count = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let gen = generate_synthetic_trace(&spec)?;
    let n = crate::io::write_trace(out, gen.map(TraceItem::Instr))?;
    Ok(format!("records={n}\n"))
}

fn validate(
    trace: &Path,
    config: &Path,
    expected: Option<&Path>,
    common: &Common,
) -> Result<String> {
    let s = setup(trace, config, None, common)?;
    let plan = plan(&s, &[], common)?;
    let opts = RunOptions {
        approximate: common.approximate,
        critical_path: false,
        edge_log: true,
        schedule: true,
    };
    let run = execute(&s, &plan, &opts, common.reg_count)?;
    let out = &run.outputs[0];
    let edges = out.edges.as_deref().unwrap_or(&[]);
    let mut problems = Vec::new();
    let mut text = String::new();
    if edges.len() > ORACLE_VERTEX_CAP {
        let _ = writeln!(
            text,
            "oracle=skipped records={} (graph above the {ORACLE_VERTEX_CAP}-edge cap)",
            out.records
        );
    } else {
        for lane in 0..out.totals.len() {
            let want = out.totals[lane];
            let bf = brute_force_critical_path(edges, &[], lane)?;
            let dfs = dfs_critical_path(edges, lane)?;
            let got = bf.values().copied().max().unwrap_or(0);
            let alt = dfs.values().copied().max().unwrap_or(0);
            if got != want || alt != want {
                problems.push(format!(
                    "lane {lane}: model {want} cycles, relaxation oracle {got}, search oracle {alt}"
                ));
            }
        }
        let _ = writeln!(text, "oracle=checked lanes={}", out.totals.len());
    }
    if let Some(sched) = &out.schedule {
        let rc = ReplayConfig::from_machine(&s.config.machine);
        for (lane, entries) in sched.iter().enumerate() {
            for v in replay_check(entries, &rc).into_iter().take(10) {
                problems.push(format!("lane {lane}: {v:?}"));
            }
        }
        let _ = writeln!(text, "replay=checked");
    }
    if let Some(p) = expected {
        let want: Vec<u64> = load_json(p)?;
        if want != out.totals {
            problems.push(format!(
                "expected totals {want:?} from {}, model gives {:?}",
                p.display(),
                out.totals
            ));
        }
    }
    if !problems.is_empty() {
        return Err(Error::OracleMismatch(problems.join("; ")));
    }
    let _ = writeln!(text, "total_cycles={} ok", out.totals[0]);
    Ok(text)
}

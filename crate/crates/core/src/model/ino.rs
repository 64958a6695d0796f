use alloc::vec::Vec;

use super::base::BaseBuilder;
use super::scoreboard::Scoreboard;
use super::{
    check_lanes, finish_output, push_schedule, BuildOptions, LaneParams, ModelOutput, PinnedRing,
    ResolvedInstr,
};
use crate::config::{MachineConfig, PipelineKind};
use crate::deg::{Deg, DegOptions, EdgeKind, WeightVector};
use crate::{Error, Result};

/// Builds and analyzes the graph of an in-order core in one streaming pass.
/// Every vertex of instruction n is final once n has been added, so the
/// graph is retired right behind the builder.
pub fn model_ino_core<I>(
    trace: I,
    machine: &MachineConfig,
    lanes: &[LaneParams],
    opts: &BuildOptions,
) -> Result<ModelOutput>
where
    I: IntoIterator<Item = Result<ResolvedInstr>>,
{
    check_lanes(machine, lanes)?;
    if machine.pipeline != PipelineKind::InOrder {
        return Err(Error::WrongPipeline("in_order"));
    }
    let n = lanes.len();
    let mut g = Deg::new(DegOptions {
        lanes: n,
        lookback: machine.lookback(),
        provenance: opts.provenance,
        edge_log: opts.edge_log,
    });
    let mut base = BaseBuilder::new(machine, lanes);
    let mut sb = Scoreboard::new(machine);
    let ibw = machine.issue_width as usize;
    let mut issue: PinnedRing<()> = PinnedRing::new(ibw);
    let mut schedule = opts.schedule.then(|| alloc::vec![Vec::new(); n]);
    let mut last = None;

    for ins in trace {
        let ins = ins?;
        let iv = base.add(&mut g, &ins)?;
        if let Some(&(prev, ())) = issue.back(1) {
            g.connect(prev, iv.e, EdgeKind::IssueOrder, WeightVector::zeros(n))?;
        }
        if let Some(&(old, ())) = issue.back(ibw).filter(|_| issue.is_full()) {
            g.connect(
                old,
                iv.e,
                EdgeKind::IssueBandwidth,
                WeightVector::splat(n, 1),
            )?;
        }
        issue.push(&mut g, iv.e, ())?;
        if let Some(u) = iv.unit {
            sb.assign(&mut g, u, iv.e, iv.ec, &iv.exec)?;
        }
        for v in iv.all() {
            g.finalize_vertex(v)?;
        }
        push_schedule(&mut schedule, &g, &iv)?;
        g.retire_through(iv.seq)?;
        last = Some(iv.c);
    }
    finish_output(&g, last, base.instructions, base.records, opts, schedule)
}

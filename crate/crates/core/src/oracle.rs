//! Reference checkers. Nothing here shares code with the streaming graph:
//! longest paths are recomputed from a plain edge list, and schedules are
//! replayed against the machine's resource limits.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use serde::Serialize;

use crate::config::{MachineConfig, PipelineKind};
use crate::deg::{Edge, VertexId};
use crate::{Error, Result};

/// Largest graph the oracles are meant for.
pub const ORACLE_VERTEX_CAP: usize = 100_000;

/// Longest path to every vertex in one lane, by relaxation over a freshly
/// computed topological order. `extra` lists vertices without edges.
pub fn brute_force_critical_path(
    edges: &[Edge],
    extra: &[VertexId],
    lane: usize,
) -> Result<BTreeMap<VertexId, u64>> {
    let mut index: BTreeMap<VertexId, usize> = BTreeMap::new();
    let mut ids: Vec<VertexId> = Vec::new();
    let mut intern = |v: VertexId, ids: &mut Vec<VertexId>| {
        *index.entry(v).or_insert_with(|| {
            ids.push(v);
            ids.len() - 1
        })
    };
    let mut adj: Vec<(usize, usize, u64)> = Vec::with_capacity(edges.len());
    for e in edges {
        let s = intern(e.src, &mut ids);
        let d = intern(e.dst, &mut ids);
        adj.push((s, d, e.weight[lane]));
    }
    for &v in extra {
        intern(v, &mut ids);
    }
    let n = ids.len();
    let mut out: Vec<Vec<(usize, u64)>> = alloc::vec![Vec::new(); n];
    let mut indeg = alloc::vec![0usize; n];
    for &(s, d, w) in &adj {
        out[s].push((d, w));
        indeg[d] += 1;
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut dist = alloc::vec![0u64; n];
    let mut done = 0;
    while let Some(u) = queue.pop_front() {
        done += 1;
        for &(d, w) in &out[u] {
            let c = dist[u].checked_add(w).ok_or(Error::Overflow)?;
            if c > dist[d] {
                dist[d] = c;
            }
            indeg[d] -= 1;
            if indeg[d] == 0 {
                queue.push_back(d);
            }
        }
    }
    if done != n {
        return Err(Error::Cycle);
    }
    Ok(ids.into_iter().zip(dist).collect())
}

/// Second strategy: memoized depth-first search over predecessor lists.
pub fn dfs_critical_path(edges: &[Edge], lane: usize) -> Result<BTreeMap<VertexId, u64>> {
    let mut preds: BTreeMap<VertexId, Vec<(VertexId, u64)>> = BTreeMap::new();
    for e in edges {
        preds
            .entry(e.dst)
            .or_default()
            .push((e.src, e.weight[lane]));
        preds.entry(e.src).or_default();
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done(u64),
    }
    let mut memo: BTreeMap<VertexId, Mark> = BTreeMap::new();
    let keys: Vec<VertexId> = preds.keys().copied().collect();
    for root in keys {
        if memo.contains_key(&root) {
            continue;
        }
        // Explicit stack of (vertex, next predecessor index).
        let mut stack: Vec<(VertexId, usize)> = alloc::vec![(root, 0)];
        memo.insert(root, Mark::Open);
        while let Some(top) = stack.last_mut() {
            let (v, i) = *top;
            let ps = &preds[&v];
            if i < ps.len() {
                top.1 += 1;
                let (p, _) = ps[i];
                match memo.get(&p) {
                    Some(Mark::Open) => return Err(Error::Cycle),
                    Some(Mark::Done(_)) => {}
                    None => {
                        memo.insert(p, Mark::Open);
                        stack.push((p, 0));
                    }
                }
                continue;
            }
            let mut best = 0u64;
            for &(p, w) in ps {
                let Some(Mark::Done(d)) = memo.get(&p) else {
                    return Err(Error::Cycle);
                };
                best = best.max(d.checked_add(w).ok_or(Error::Overflow)?);
            }
            memo.insert(v, Mark::Done(best));
            stack.pop();
        }
    }
    Ok(memo
        .into_iter()
        .map(|(v, m)| match m {
            Mark::Done(d) => (v, d),
            Mark::Open => (v, 0),
        })
        .collect())
}

/// Event times of one instruction in one lane.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScheduleEntry {
    pub seq: u64,
    pub unit: Option<usize>,
    pub mem: bool,
    pub fetch: u64,
    pub dispatch: Option<u64>,
    pub issue: u64,
    pub latency: u64,
    pub commit: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnitLimit {
    pub count: u32,
    pub pipelined: bool,
    pub pipe_depth: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayConfig {
    pub units: Vec<UnitLimit>,
    pub fetch_width: u32,
    pub dispatch_width: u32,
    pub issue_width: u32,
    pub commit_width: u32,
    pub lsq_size: Option<u32>,
    pub in_order_issue: bool,
}

impl ReplayConfig {
    pub fn from_machine(m: &MachineConfig) -> Self {
        ReplayConfig {
            units: m
                .units
                .iter()
                .map(|u| UnitLimit {
                    count: u.count,
                    pipelined: u.pipelined,
                    pipe_depth: u.pipe_depth,
                })
                .collect(),
            fetch_width: m.fetch_width,
            dispatch_width: m.dispatch_width(),
            issue_width: m.issue_width,
            commit_width: m.commit_width,
            lsq_size: m.lsq_size,
            in_order_issue: m.pipeline == PipelineKind::InOrder,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "type")]
pub enum Violation {
    UnitOversubscribed {
        unit: usize,
        cycle: u64,
        in_use: u64,
        capacity: u64,
    },
    PipeDepth {
        unit: usize,
        cycle: u64,
        in_flight: u64,
        capacity: u64,
    },
    FetchBandwidth {
        cycle: u64,
        count: u64,
    },
    DispatchBandwidth {
        cycle: u64,
        count: u64,
    },
    IssueBandwidth {
        cycle: u64,
        count: u64,
    },
    CommitBandwidth {
        cycle: u64,
        count: u64,
    },
    CommitOrder {
        seq: u64,
    },
    IssueOrder {
        seq: u64,
    },
    Lsq {
        cycle: u64,
        occupancy: u64,
        capacity: u64,
    },
}

/// Start of each episode during which more than `cap` of the half-open
/// intervals overlap, with the peak count of that episode.
fn over_capacity(intervals: &[(u64, u64)], cap: u64) -> Vec<(u64, u64)> {
    let mut events: Vec<(u64, i8)> = Vec::with_capacity(intervals.len() * 2);
    for &(s, e) in intervals {
        if e > s {
            events.push((s, 1));
            events.push((e, -1));
        }
    }
    // Ends sort before starts at the same cycle.
    events.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::new();
    let mut live: u64 = 0;
    let mut open = false;
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        while i < events.len() && events[i].0 == t {
            if events[i].1 > 0 {
                live += 1;
            } else {
                live -= 1;
            }
            i += 1;
        }
        if live > cap {
            match out.last_mut() {
                Some(last) if open => last.1 = last.1.max(live),
                _ => out.push((t, live)),
            }
            open = true;
        } else {
            open = false;
        }
    }
    out
}

/// Replays one lane's schedule. An empty result means every resource limit
/// and ordering rule was respected.
pub fn replay_check(schedule: &[ScheduleEntry], cfg: &ReplayConfig) -> Vec<Violation> {
    let mut v = Vec::new();
    for (u, limit) in cfg.units.iter().enumerate() {
        let on: Vec<&ScheduleEntry> = schedule.iter().filter(|s| s.unit == Some(u)).collect();
        let busy: Vec<(u64, u64)> = on
            .iter()
            .map(|s| {
                let len = if limit.pipelined { 1 } else { s.latency };
                (s.issue, s.issue + len)
            })
            .collect();
        for (cycle, in_use) in over_capacity(&busy, u64::from(limit.count)) {
            v.push(Violation::UnitOversubscribed {
                unit: u,
                cycle,
                in_use,
                capacity: u64::from(limit.count),
            });
        }
        if let (true, Some(depth)) = (limit.pipelined, limit.pipe_depth) {
            let flight: Vec<(u64, u64)> =
                on.iter().map(|s| (s.issue, s.issue + s.latency)).collect();
            let cap = u64::from(depth) * u64::from(limit.count);
            for (cycle, in_flight) in over_capacity(&flight, cap) {
                v.push(Violation::PipeDepth {
                    unit: u,
                    cycle,
                    in_flight,
                    capacity: cap,
                });
            }
        }
    }

    let per_cycle = |times: Vec<u64>, width: u32| -> Vec<(u64, u64)> {
        let iv: Vec<(u64, u64)> = times.into_iter().map(|t| (t, t + 1)).collect();
        over_capacity(&iv, u64::from(width))
    };
    for (cycle, count) in per_cycle(schedule.iter().map(|s| s.fetch).collect(), cfg.fetch_width) {
        v.push(Violation::FetchBandwidth { cycle, count });
    }
    let dispatch: Vec<u64> = schedule.iter().filter_map(|s| s.dispatch).collect();
    for (cycle, count) in per_cycle(dispatch, cfg.dispatch_width) {
        v.push(Violation::DispatchBandwidth { cycle, count });
    }
    for (cycle, count) in per_cycle(schedule.iter().map(|s| s.issue).collect(), cfg.issue_width) {
        v.push(Violation::IssueBandwidth { cycle, count });
    }
    for (cycle, count) in per_cycle(
        schedule.iter().map(|s| s.commit).collect(),
        cfg.commit_width,
    ) {
        v.push(Violation::CommitBandwidth { cycle, count });
    }
    for pair in schedule.windows(2) {
        if pair[1].commit < pair[0].commit {
            v.push(Violation::CommitOrder { seq: pair[1].seq });
        }
        if cfg.in_order_issue && pair[1].issue < pair[0].issue {
            v.push(Violation::IssueOrder { seq: pair[1].seq });
        }
    }
    if let Some(lsq) = cfg.lsq_size {
        let occ: Vec<(u64, u64)> = schedule
            .iter()
            .filter(|s| s.mem)
            .map(|s| (s.issue, s.commit))
            .collect();
        for (cycle, occupancy) in over_capacity(&occ, u64::from(lsq)) {
            v.push(Violation::Lsq {
                cycle,
                occupancy,
                capacity: u64::from(lsq),
            });
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deg::{v, EdgeKind, WeightVector};

    fn e(src: VertexId, dst: VertexId, w: u64) -> Edge {
        Edge::new(src, dst, EdgeKind::Custom("t"), WeightVector::splat(1, w))
    }

    #[test]
    fn empty_edge_list_gives_zeros() {
        let got = brute_force_critical_path(&[], &[v::f(0), v::f(1)], 0).unwrap();
        assert!(got.values().all(|&d| d == 0));
        assert_eq!(got.len(), 2);
    }

    #[test]
    fn both_strategies_agree_and_detect_cycles() {
        let edges = [
            e(v::f(0), v::e(0), 1),
            e(v::e(0), v::c(0), 2),
            e(v::f(0), v::c(0), 5),
            e(v::c(0), v::c(1), 1),
        ];
        let a = brute_force_critical_path(&edges, &[], 0).unwrap();
        let b = dfs_critical_path(&edges, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[&v::c(1)], 6);
        let cyc = [e(v::f(0), v::e(0), 1), e(v::e(0), v::f(0), 1)];
        assert_eq!(brute_force_critical_path(&cyc, &[], 0), Err(Error::Cycle));
        assert_eq!(dfs_critical_path(&cyc, 0), Err(Error::Cycle));
    }

    fn entry(seq: u64, issue: u64, latency: u64) -> ScheduleEntry {
        ScheduleEntry {
            seq,
            unit: Some(0),
            mem: false,
            fetch: seq,
            dispatch: None,
            issue,
            latency,
            commit: issue + latency + seq,
        }
    }

    fn one_fpu(pipelined: bool) -> ReplayConfig {
        ReplayConfig {
            units: alloc::vec![UnitLimit {
                count: 1,
                pipelined,
                pipe_depth: None,
            }],
            fetch_width: 1,
            dispatch_width: 1,
            issue_width: 1,
            commit_width: 1,
            lsq_size: None,
            in_order_issue: false,
        }
    }

    #[test]
    fn spaced_starts_are_feasible() {
        let piped = [entry(0, 0, 6), entry(1, 1, 6), entry(2, 2, 6)];
        assert!(replay_check(&piped, &one_fpu(true)).is_empty());
        let serial = [entry(0, 0, 6), entry(1, 6, 6), entry(2, 12, 6)];
        assert!(replay_check(&serial, &one_fpu(false)).is_empty());
    }

    #[test]
    fn double_booking_is_one_violation() {
        let mut s = [entry(0, 0, 6), entry(1, 6, 6), entry(2, 12, 6)];
        s[1].issue = 3;
        s[1].commit = 100;
        s[2].commit = 200;
        let got = replay_check(&s, &one_fpu(false));
        assert_eq!(
            got,
            [Violation::UnitOversubscribed {
                unit: 0,
                cycle: 3,
                in_use: 2,
                capacity: 1
            }]
        );
    }
}

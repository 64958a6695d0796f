//! CPI, critical-path breakdowns and lane comparisons.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::deg::{Category, CriticalPath};
use crate::model::ModelOutput;
use crate::{Error, Result};

/// Critical-path cycles per category.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryBreakdown {
    pub fetch: u64,
    pub decode_dispatch: u64,
    pub int: u64,
    pub fp: u64,
    pub mul_div: u64,
    pub load: u64,
    pub store: u64,
    pub commit: u64,
    pub branch_resolve: u64,
    pub issue_structural: u64,
    pub block_commit: u64,
    pub other: u64,
}

impl CategoryBreakdown {
    fn slot(&mut self, c: Category) -> &mut u64 {
        match c {
            Category::Fetch => &mut self.fetch,
            Category::DecodeDispatch => &mut self.decode_dispatch,
            Category::Int => &mut self.int,
            Category::Fp => &mut self.fp,
            Category::MulDiv => &mut self.mul_div,
            Category::Load => &mut self.load,
            Category::Store => &mut self.store,
            Category::Commit => &mut self.commit,
            Category::BranchResolve => &mut self.branch_resolve,
            Category::IssueStructural => &mut self.issue_structural,
            Category::BlockCommit => &mut self.block_commit,
            Category::Other => &mut self.other,
        }
    }

    pub fn get(&self, c: Category) -> u64 {
        let mut copy = *self;
        *copy.slot(c)
    }

    pub fn add(&mut self, c: Category, cycles: u64) {
        *self.slot(c) += cycles;
    }

    pub fn total(&self) -> u64 {
        Category::ALL.iter().map(|&c| self.get(c)).sum()
    }

    /// Categories in fixed order with their cycles.
    pub fn entries(&self) -> impl Iterator<Item = (Category, u64)> + '_ {
        Category::ALL.iter().map(move |&c| (c, self.get(c)))
    }

    /// The category with the most cycles (earliest in order on ties).
    pub fn top(&self) -> Option<(Category, u64)> {
        self.entries().filter(|&(_, n)| n > 0).fold(
            None,
            |best: Option<(Category, u64)>, (c, n)| match best {
                Some((_, b)) if b >= n => best,
                _ => Some((c, n)),
            },
        )
    }
}

/// Attributes every step of `path` to categories. Steps with recorded
/// parts are split by them; the rest go to their edge kind's category.
pub fn compute_breakdown(path: &CriticalPath) -> CategoryBreakdown {
    let mut b = CategoryBreakdown::default();
    for s in &path.steps {
        let parts_sum: u64 = s.parts.iter().map(|p| p.1).sum();
        if !s.parts.is_empty() && parts_sum == s.cycles {
            for &(c, n) in &s.parts {
                b.add(c, n);
            }
        } else {
            b.add(s.kind.category(), s.cycles);
        }
    }
    b
}

/// Breakdown of one lane of a model run.
pub fn lane_breakdown(out: &ModelOutput, lane: usize) -> Result<CategoryBreakdown> {
    out.paths
        .iter()
        .find(|p| p.lane == lane)
        .map(compute_breakdown)
        .ok_or(Error::ProvenanceDisabled)
}

pub fn cpi(cycles: u64, instructions: u64) -> f64 {
    if instructions == 0 {
        0.0
    } else {
        cycles as f64 / instructions as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaneResult {
    pub lane: usize,
    pub pass: usize,
    pub label: String,
    pub total_cycles: u64,
    pub instructions: u64,
    pub cpi: f64,
    /// Digest of the lane's effective configuration.
    pub config_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenarios: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<CategoryBreakdown>,
    /// Written to reports but not read back.
    #[serde(default, skip_deserializing, skip_serializing_if = "Option::is_none")]
    pub critical_path: Option<CriticalPath>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassInfo {
    pub index: usize,
    pub lanes: Vec<usize>,
    /// Number of model runs (criticality-aware value prediction iterates).
    pub runs: u32,
    pub records: u64,
    pub peak_live: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub model: String,
    pub trace_digest: String,
    pub passes: Vec<PassInfo>,
    pub lanes: Vec<LaneResult>,
}

pub fn digest_hex(d: u64) -> String {
    format!("{d:016x}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub lane: usize,
    pub label: String,
    pub total_cycles: u64,
    pub cpi: f64,
    /// Lane minus baseline.
    pub delta_cycles: i64,
    pub delta_cpi: f64,
    /// (baseline - lane) / baseline cycles.
    pub improvement: f64,
}

fn row(base: &LaneResult, l: &LaneResult) -> ComparisonRow {
    let delta = l.total_cycles as i64 - base.total_cycles as i64;
    ComparisonRow {
        lane: l.lane,
        label: l.label.clone(),
        total_cycles: l.total_cycles,
        cpi: l.cpi,
        delta_cycles: delta,
        delta_cpi: l.cpi - base.cpi,
        improvement: if base.total_cycles == 0 {
            0.0
        } else {
            -delta as f64 / base.total_cycles as f64
        },
    }
}

/// Every lane of every result against the first lane of the first.
pub fn compare(results: &[AnalysisResult]) -> Result<Vec<ComparisonRow>> {
    let Some(first) = results.first() else {
        return Ok(Vec::new());
    };
    if results.iter().any(|r| r.trace_digest != first.trace_digest) {
        return Err(Error::DigestMismatch);
    }
    let Some(base) = first.lanes.first() else {
        return Ok(Vec::new());
    };
    Ok(results
        .iter()
        .flat_map(|r| r.lanes.iter())
        .map(|l| row(base, l))
        .collect())
}

/// Improvement rounded to one decimal percent, e.g. "26.7%".
pub fn format_improvement(improvement: f64) -> String {
    format!("{:.1}%", improvement * 100.0)
}

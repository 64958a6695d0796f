//! JSON and CSV reports, sweep curves and graph dumps.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use degkit_core::analysis::{compare, AnalysisResult, ComparisonRow};
use degkit_core::deg::{Category, Edge};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// SHA-256 of every input file, so reports identify what produced them.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Inputs {
    pub trace_sha256: String,
    pub config_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenarios_sha256: Option<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize()
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub inputs: Inputs,
    pub result: AnalysisResult,
    pub comparison: Vec<ComparisonRow>,
}

impl Report {
    pub fn new(inputs: Inputs, result: AnalysisResult) -> Result<Self> {
        let comparison = compare(std::slice::from_ref(&result))?;
        Ok(Report {
            inputs,
            result,
            comparison,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per lane: lane metadata, then every category.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = vec![
            "lane",
            "pass",
            "label",
            "total_cycles",
            "instructions",
            "cpi",
            "improvement",
        ];
        header.extend(Category::ALL.iter().map(|c| c.as_str()));
        w.write_record(&header).expect("in-memory write");
        for (l, row) in self.result.lanes.iter().zip(&self.comparison) {
            let mut rec = vec![
                l.lane.to_string(),
                l.pass.to_string(),
                l.label.clone(),
                l.total_cycles.to_string(),
                l.instructions.to_string(),
                l.cpi.to_string(),
                row.improvement.to_string(),
            ];
            for c in Category::ALL {
                rec.push(
                    l.breakdown
                        .map(|b| b.get(c).to_string())
                        .unwrap_or_default(),
                );
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }
}

pub fn write_output(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// One point of a sweep curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub series: String,
    pub x: String,
    pub lanes: Vec<usize>,
    pub total_cycles: f64,
    pub cpi: f64,
    pub cpi_min: f64,
    pub cpi_max: f64,
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "series",
        "x",
        "lanes",
        "total_cycles",
        "cpi",
        "cpi_min",
        "cpi_max",
    ])
    .expect("in-memory write");
    for p in points {
        let lanes: Vec<String> = p.lanes.iter().map(usize::to_string).collect();
        w.write_record([
            p.series.clone(),
            p.x.clone(),
            lanes.join(" "),
            p.total_cycles.to_string(),
            p.cpi.to_string(),
            p.cpi_min.to_string(),
            p.cpi_max.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Graph dumps stop after this many edges.
pub const DOT_EDGE_CAP: usize = 20_000;

/// Graphviz rendering of an edge log; weights are shown per lane.
pub fn to_dot(edges: &[Edge]) -> String {
    let mut s = String::from("digraph deg {\n  rankdir=LR;\n  node [shape=circle];\n");
    for e in edges.iter().take(DOT_EDGE_CAP) {
        let w: Vec<String> = e.weight.as_slice().iter().map(u64::to_string).collect();
        let _ = writeln!(
            s,
            "  \"{}\" -> \"{}\" [label=\"{} {}\"];",
            e.src,
            e.dst,
            e.kind.label(),
            w.join(",")
        );
    }
    if edges.len() > DOT_EDGE_CAP {
        let _ = writeln!(s, "  // {} more edges omitted", edges.len() - DOT_EDGE_CAP);
    }
    s.push_str("}\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use degkit_core::analysis::{cpi, LaneResult};
    use degkit_core::deg::{v, EdgeKind, WeightVector};

    fn result(cycles: &[u64]) -> AnalysisResult {
        AnalysisResult {
            model: "ino".into(),
            trace_digest: "00".into(),
            passes: Vec::new(),
            lanes: cycles
                .iter()
                .enumerate()
                .map(|(i, &c)| LaneResult {
                    lane: i,
                    pass: 0,
                    label: format!("l{i}"),
                    total_cycles: c,
                    instructions: 4,
                    cpi: cpi(c, 4),
                    config_digest: String::new(),
                    scenarios: Vec::new(),
                    seeds: Vec::new(),
                    breakdown: None,
                    critical_path: None,
                })
                .collect(),
        }
    }

    #[test]
    fn json_round_trips_and_csv_has_a_row_per_lane() {
        let r = Report::new(Inputs::default(), result(&[15, 12, 11])).unwrap();
        let back: Report = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0].split(',').count(), 7 + Category::ALL.len());
        assert!(lines[1].starts_with("0,0,l0,15,4,3.75,0,"));
        assert_eq!(r.to_json(), r.to_json());
    }

    #[test]
    fn dot_lists_edges() {
        let e = Edge::new(
            v::f(0),
            v::e(0),
            EdgeKind::PipelineFE,
            WeightVector::splat(2, 1),
        );
        let d = to_dot(&[e]);
        assert!(d.contains("\"F0\" -> \"E0\""));
        assert!(d.contains(" 1,1\""));
    }
}

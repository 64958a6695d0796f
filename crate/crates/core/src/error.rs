use alloc::string::String;
use core::fmt;

use crate::deg::VertexId;
use crate::trace::OpClass;

/// Everything that can go wrong while building or analyzing a graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Error {
    /// `record` is the 1-based position of the offending record in the stream.
    SeqDiscontinuity {
        record: u64,
        expected: u64,
        found: u64,
    },
    InvalidRecord {
        seq: u64,
        field: &'static str,
        reason: String,
    },
    /// A trace line that does not parse; `line` is 1-based.
    MalformedLine {
        line: u64,
        field: Option<String>,
        reason: String,
    },
    InfeasibleSpec(String),

    MissingLatency(OpClass),
    MissingBranchOutcome {
        seq: u64,
    },
    InvalidConfig(String),

    DuplicateVertex(VertexId),
    BehindHorizon(VertexId),
    UnknownVertex(VertexId),
    DestinationFinalized(VertexId),
    AlreadyFinalized(VertexId),
    UnfinalizedParent(VertexId),
    UnfinalizedInRange(VertexId),
    EdgeNotFound {
        src: VertexId,
        dst: VertexId,
    },
    SelfLoop(VertexId),
    LaneMismatch {
        expected: usize,
        found: usize,
    },
    Overflow,
    ProvenanceDisabled,
    Cycle,

    RegisterOutOfRange {
        seq: u64,
        reg: u16,
    },
    TraceTooLarge {
        cap: u64,
    },
    WrongPipeline(&'static str),

    MalformedBlock {
        block: u64,
        reason: String,
    },

    InvalidScenario(String),
    ConflictingOverride(String),
    RuleConflict {
        seq: u64,
    },
    EmptyCrack,
    MissingCriticality,

    DigestMismatch,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Error::*;
        match self {
            SeqDiscontinuity {
                record,
                expected,
                found,
            } => write!(
                f,
                "seq discontinuity at record {record}: expected seq {expected}, found {found}"
            ),
            InvalidRecord { seq, field, reason } => {
                write!(f, "record seq {seq}: field `{field}`: {reason}")
            }
            MalformedLine {
                line,
                field: Some(field),
                reason,
            } => {
                write!(f, "line {line}: field `{field}`: {reason}")
            }
            MalformedLine {
                line,
                field: None,
                reason,
            } => write!(f, "line {line}: {reason}"),
            InfeasibleSpec(msg) => write!(f, "infeasible synthetic trace spec: {msg}"),
            MissingLatency(op) => write!(f, "cost table has no latency for {op:?}"),
            MissingBranchOutcome { seq } => {
                write!(f, "branch seq {seq} has no recorded prediction outcome")
            }
            InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            DuplicateVertex(v) => write!(f, "vertex {v} already exists"),
            BehindHorizon(v) => write!(f, "vertex {v} is behind the retirement horizon"),
            UnknownVertex(v) => write!(f, "vertex {v} is not in the graph"),
            DestinationFinalized(v) => write!(f, "vertex {v} is finalized and cannot gain edges"),
            AlreadyFinalized(v) => write!(f, "vertex {v} is already finalized"),
            UnfinalizedParent(v) => write!(f, "vertex {v} still has unfinalized parents"),
            UnfinalizedInRange(v) => write!(f, "vertex {v} is not finalized"),
            EdgeNotFound { src, dst } => write!(f, "no edge {src} -> {dst}"),
            SelfLoop(v) => write!(f, "self-loop on {v}"),
            LaneMismatch { expected, found } => {
                write!(f, "weight vector has {found} lanes, graph has {expected}")
            }
            Overflow => write!(f, "cycle count overflow"),
            ProvenanceDisabled => write!(f, "critical-path provenance was not recorded"),
            Cycle => write!(f, "graph contains a cycle"),
            RegisterOutOfRange { seq, reg } => {
                write!(
                    f,
                    "record seq {seq}: register r{reg} outside the register file"
                )
            }
            TraceTooLarge { cap } => write!(
                f,
                "trace exceeds the {cap}-instruction cap of the two-pass model; use ooo-advanced"
            ),
            WrongPipeline(expected) => write!(f, "machine config is not {expected}"),
            MalformedBlock { block, reason } => write!(f, "block {block}: {reason}"),
            InvalidScenario(msg) => write!(f, "invalid scenario: {msg}"),
            ConflictingOverride(key) => write!(f, "conflicting overrides for `{key}`"),
            RuleConflict { seq } => {
                write!(
                    f,
                    "record seq {seq} matches both a fusion and a cracking rule"
                )
            }
            EmptyCrack => write!(f, "cracking rule produces no micro-ops"),
            MissingCriticality => {
                write!(
                    f,
                    "criticality-aware value prediction needs critical-path info"
                )
            }
            DigestMismatch => write!(f, "results come from different traces"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

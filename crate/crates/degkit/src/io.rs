//! JSON-lines trace files, optionally gzip-compressed.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use degkit_core::trace::{BlockHeader, InstructionRecord, SeqChecker, TraceItem};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Block headers are written as `{"block_header": {...}}`.
#[derive(Serialize, Deserialize)]
struct HeaderLine {
    block_header: BlockHeader,
}

pub fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Opens `path` for reading, decompressing `.gz` files.
pub fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(if is_gzip(path) {
        Box::new(BufReader::new(MultiGzDecoder::new(f)))
    } else {
        Box::new(BufReader::new(f))
    })
}

/// Lazily parses trace lines. Blank lines and lines starting with `#` are
/// skipped. Records are validated as they are read.
pub struct TraceReader<R> {
    input: R,
    line: u64,
    buf: String,
    reg_count: Option<u16>,
    seq: SeqChecker,
    failed: bool,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(input: R) -> Self {
        TraceReader {
            input,
            line: 0,
            buf: String::new(),
            reg_count: None,
            seq: SeqChecker::default(),
            failed: false,
        }
    }

    /// Rejects registers `>= n`.
    pub fn with_reg_count(mut self, n: Option<u16>) -> Self {
        self.reg_count = n;
        self
    }

    fn malformed(&self, field: Option<String>, reason: impl Into<String>) -> degkit_core::Error {
        degkit_core::Error::MalformedLine {
            line: self.line,
            field,
            reason: reason.into(),
        }
    }

    fn parse_line(&mut self, text: &str) -> degkit_core::Result<TraceItem> {
        if text.starts_with("{\"block_header\"") {
            let h: HeaderLine = serde_json::from_str(text)
                .map_err(|e| self.malformed(Some("block_header".into()), e.to_string()))?;
            return Ok(TraceItem::BlockHeader(h.block_header));
        }
        let rec: InstructionRecord = match serde_json::from_str(text) {
            Ok(r) => r,
            Err(e) => return Err(self.malformed(guilty_field(text, &e), e.to_string())),
        };
        if let Err(e) = rec.validate(self.reg_count) {
            return Err(match e {
                degkit_core::Error::InvalidRecord { field, reason, .. } => {
                    self.malformed(Some(field.into()), reason)
                }
                degkit_core::Error::RegisterOutOfRange { reg, .. } => self.malformed(
                    Some(if rec.dst.contains(&reg) { "dst" } else { "src" }.into()),
                    format!("register {reg} outside the register file"),
                ),
                other => other,
            });
        }
        self.seq.check(rec.seq)?;
        Ok(TraceItem::Instr(rec))
    }
}

/// The key most likely responsible for a deserialization error.
fn guilty_field(text: &str, err: &serde_json::Error) -> Option<String> {
    let msg = err.to_string();
    if let Some(rest) = msg.strip_prefix("missing field `") {
        return rest.split('`').next().map(str::to_string);
    }
    let Ok(Value::Object(map)) = serde_json::from_str::<Value>(text) else {
        return None;
    };
    let base = || {
        let mut m = serde_json::Map::new();
        m.insert("seq".into(), 0.into());
        m.insert("pc".into(), 0.into());
        m.insert("op".into(), "IntAlu".into());
        m
    };
    for (k, v) in &map {
        let mut probe = base();
        probe.insert(k.clone(), v.clone());
        if serde_json::from_value::<InstructionRecord>(Value::Object(probe)).is_err() {
            return Some(k.clone());
        }
    }
    None
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = degkit_core::Result<TraceItem>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            self.line += 1;
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(self.malformed(None, e.to_string())));
                }
            }
            let text = self.buf.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let text = text.to_string();
            let item = self.parse_line(&text);
            self.failed = item.is_err();
            return Some(item);
        }
    }
}

pub fn read_trace(path: &Path) -> Result<TraceReader<Box<dyn BufRead>>> {
    Ok(TraceReader::new(open_input(path)?))
}

/// Reads from any byte source.
pub fn parse_trace<R: Read>(input: R) -> TraceReader<BufReader<R>> {
    TraceReader::new(BufReader::new(input))
}

pub fn write_item<W: Write>(mut w: W, item: &TraceItem) -> io::Result<()> {
    match item {
        TraceItem::Instr(r) => serde_json::to_writer(&mut w, r)?,
        TraceItem::BlockHeader(h) => serde_json::to_writer(
            &mut w,
            &HeaderLine {
                block_header: h.clone(),
            },
        )?,
    }
    w.write_all(b"\n")
}

/// Writes a trace file, gzip-compressed when `path` ends in `.gz`.
pub fn write_trace<I>(path: &Path, items: I) -> Result<u64>
where
    I: IntoIterator<Item = TraceItem>,
{
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut n = 0;
    let res = if is_gzip(path) {
        let mut w = BufWriter::new(GzEncoder::new(f, Compression::default()));
        let r = items.into_iter().try_for_each(|it| {
            n += 1;
            write_item(&mut w, &it)
        });
        r.and_then(|_| {
            w.into_inner()
                .map_err(|e| e.into_error())?
                .finish()
                .map(drop)
        })
    } else {
        let mut w = BufWriter::new(f);
        let r = items.into_iter().try_for_each(|it| {
            n += 1;
            write_item(&mut w, &it)
        });
        r.and_then(|_| w.flush())
    };
    res.map_err(|e| Error::io(path, e))?;
    Ok(n)
}

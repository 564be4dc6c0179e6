//! Dynamic event traces and their line-delimited JSON file format.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::ir::Opcode;

pub const TRACE_HEADER: &str = "aiwctrace v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Op,
    Mem { address: u64 },
    Branch { site: u32, taken: bool },
    Barrier,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Op => "op",
            EventKind::Mem { .. } => "mem",
            EventKind::Branch { .. } => "branch",
            EventKind::Barrier => "barrier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub work_item: [u64; 3],
    pub opcode: Opcode,
    pub width: u32,
    pub kind: EventKind,
}

impl Event {
    pub fn address(&self) -> Option<u64> {
        match self.kind {
            EventKind::Mem { address } => Some(address),
            _ => None,
        }
    }

    pub fn taken(&self) -> Option<bool> {
        match self.kind {
            EventKind::Branch { taken, .. } => Some(taken),
            _ => None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.opcode == Opcode::Halt
    }
}

/// Ordered event stream, grouped contiguously per work-item.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    events: Vec<Event>,
    work_item_count: u64,
}

impl Trace {
    pub(crate) fn new(events: Vec<Event>, work_item_count: u64) -> Self {
        Trace {
            events,
            work_item_count,
        }
    }

    /// Builds a trace from externally produced events, checking the grouping
    /// and terminal-marker invariants.
    pub fn from_events(events: Vec<Event>) -> Result<Self, TraceError> {
        let count = validate_blocks(&events).map_err(|reason| TraceError::Malformed { line: 0, reason })?;
        Ok(Trace::new(events, count))
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn work_item_count(&self) -> u64 {
        self.work_item_count
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Per-work-item event slices in trace order.
    pub fn work_items(&self) -> impl Iterator<Item = &[Event]> + '_ {
        self.events.chunk_by(|a, b| a.work_item == b.work_item)
    }
}

fn kind_matches(opcode: Opcode, kind: &EventKind) -> bool {
    match kind {
        EventKind::Mem { .. } => opcode.is_memory(),
        EventKind::Branch { .. } => opcode == Opcode::Br,
        EventKind::Barrier => opcode == Opcode::Barrier,
        EventKind::Op => !opcode.is_memory() && !matches!(opcode, Opcode::Br | Opcode::Barrier),
    }
}

fn validate_blocks(events: &[Event]) -> Result<u64, String> {
    let mut seen = std::collections::HashSet::new();
    let mut count = 0u64;
    for block in events.chunk_by(|a, b| a.work_item == b.work_item) {
        let wi = block[0].work_item;
        if !seen.insert(wi) {
            return Err(format!("work-item {wi:?} is not contiguous"));
        }
        let (last, body) = block.split_last().expect("chunks are non-empty");
        if !last.is_terminal() {
            return Err(format!("work-item {wi:?} does not end with halt"));
        }
        if body.iter().any(Event::is_terminal) {
            return Err(format!("work-item {wi:?} has events after halt"));
        }
        count += 1;
    }
    Ok(count)
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing `{TRACE_HEADER}` header")]
    MissingHeader,
    #[error("unsupported trace version `{0}`")]
    VersionMismatch(String),
    #[error("malformed record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    wi: [u64; 3],
    kind: String,
    op: String,
    width: u32,
    addr: Option<String>,
    site: Option<u32>,
    taken: Option<bool>,
}

impl From<&Event> for Record {
    fn from(e: &Event) -> Self {
        let (addr, site, taken) = match e.kind {
            EventKind::Mem { address } => (Some(address.to_string()), None, None),
            EventKind::Branch { site, taken } => (None, Some(site), Some(taken)),
            EventKind::Op | EventKind::Barrier => (None, None, None),
        };
        Record {
            wi: e.work_item,
            kind: e.kind.name().to_string(),
            op: e.opcode.mnemonic().to_string(),
            width: e.width,
            addr,
            site,
            taken,
        }
    }
}

impl TryFrom<Record> for Event {
    type Error = String;

    fn try_from(r: Record) -> Result<Self, Self::Error> {
        let opcode: Opcode = r.op.parse().map_err(|_| format!("unknown opcode `{}`", r.op))?;
        if r.width == 0 {
            return Err("width must be positive".into());
        }
        let kind = match (r.kind.as_str(), r.addr, r.site, r.taken) {
            ("op", None, None, None) => EventKind::Op,
            ("barrier", None, None, None) => EventKind::Barrier,
            ("mem", Some(addr), None, None) => EventKind::Mem {
                address: addr
                    .parse()
                    .map_err(|_| format!("address `{addr}` is not a decimal u64"))?,
            },
            ("branch", None, Some(site), Some(taken)) => EventKind::Branch { site, taken },
            ("op" | "barrier" | "mem" | "branch", ..) => {
                return Err(format!("fields do not match event kind `{}`", r.kind))
            }
            (other, ..) => return Err(format!("unknown event kind `{other}`")),
        };
        if !kind_matches(opcode, &kind) {
            return Err(format!(
                "opcode `{opcode}` cannot produce a `{}` event",
                kind.name()
            ));
        }
        Ok(Event {
            work_item: r.wi,
            opcode,
            width: r.width,
            kind,
        })
    }
}

pub fn write_trace<W: Write>(trace: &Trace, mut sink: W) -> Result<(), TraceError> {
    writeln!(sink, "{TRACE_HEADER}")?;
    for event in &trace.events {
        let line = serde_json::to_string(&Record::from(event)).expect("record serializes");
        writeln!(sink, "{line}")?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_trace<R: BufRead>(source: R) -> Result<Trace, TraceError> {
    let mut lines = source.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(TraceError::MissingHeader),
    };
    let header = header.trim_end();
    if header != TRACE_HEADER {
        return match header.strip_prefix("aiwctrace ") {
            Some(version) => Err(TraceError::VersionMismatch(version.to_string())),
            None => Err(TraceError::MissingHeader),
        };
    }
    let mut events = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| TraceError::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        let event = Event::try_from(record).map_err(|reason| TraceError::Malformed {
            line: line_no,
            reason,
        })?;
        events.push(event);
    }
    let count = validate_blocks(&events).map_err(|reason| TraceError::Malformed { line: 0, reason })?;
    Ok(Trace::new(events, count))
}

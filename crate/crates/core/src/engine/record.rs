// SPDX-License-Identifier: Apache-2.0

//! Event log record format.
//!
//! One record per line, fields separated by TAB:
//!
//! ```text
//! SEQ  register    TAG  DEMOGRAPHIC  AT  NAME
//! SEQ  return      TAG  AT
//! SEQ  read        TAG  NODE  AT
//! SEQ  heartbeat   NODE AT
//! SEQ  checkpoint  NODE ROOM  AT  NAME
//! SEQ  batch       BATCH-ID  COUNT
//! ```
//!
//! Every field is in its canonical text form, so `parse(render(r)) == r` and
//! `render(parse(line)) == line` for every valid line.

use std::fmt;

use thiserror::Error;

use crate::model::{
    normalize_node_id, parse_timestamp, validate_tag_id, Demographic, Name, NodeId, RoomId, TagId,
    Timestamp,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Register {
        tag: TagId,
        demographic: Demographic,
        at: Timestamp,
        name: Name,
    },
    Return {
        tag: TagId,
        at: Timestamp,
    },
    Read {
        tag: TagId,
        node: NodeId,
        at: Timestamp,
    },
    Heartbeat {
        node: NodeId,
        at: Timestamp,
    },
    Checkpoint {
        node: NodeId,
        room: RoomId,
        at: Timestamp,
        name: Name,
    },
    Batch {
        id: String,
        count: u32,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Register { .. } => "register",
            Event::Return { .. } => "return",
            Event::Read { .. } => "read",
            Event::Heartbeat { .. } => "heartbeat",
            Event::Checkpoint { .. } => "checkpoint",
            Event::Batch { .. } => "batch",
        }
    }

    /// Wall-clock time the event refers to; batch markers carry none.
    pub fn at(&self) -> Option<Timestamp> {
        match self {
            Event::Register { at, .. }
            | Event::Return { at, .. }
            | Event::Read { at, .. }
            | Event::Heartbeat { at, .. }
            | Event::Checkpoint { at, .. } => Some(*at),
            Event::Batch { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub seq: u64,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad log record: {0}")]
pub struct RecordError(pub String);

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t", self.seq, self.event.kind())?;
        match &self.event {
            Event::Register {
                tag,
                demographic,
                at,
                name,
            } => write!(f, "{tag}\t{demographic}\t{at}\t{name}"),
            Event::Return { tag, at } => write!(f, "{tag}\t{at}"),
            Event::Read { tag, node, at } => write!(f, "{tag}\t{node}\t{at}"),
            Event::Heartbeat { node, at } => write!(f, "{node}\t{at}"),
            Event::Checkpoint {
                node,
                room,
                at,
                name,
            } => write!(f, "{node}\t{room}\t{at}\t{name}"),
            Event::Batch { id, count } => write!(f, "{id}\t{count}"),
        }
    }
}

impl LogRecord {
    pub fn render(&self) -> String {
        self.to_string()
    }

    /// Parses one line (without its line feed). Non-canonical input is
    /// rejected so that re-rendering a parsed record is byte-identical.
    pub fn parse(line: &str) -> Result<LogRecord, RecordError> {
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |m: &str| RecordError(format!("{m}: {line:?}"));
        if fields.len() < 2 {
            return Err(bad("missing kind"));
        }
        let seq: u64 = fields[0].parse().map_err(|_| bad("bad seq"))?;
        let tag = |s: &str| validate_tag_id(s).map_err(|e| RecordError(e.to_string()));
        let node = |s: &str| normalize_node_id(s).map_err(|e| RecordError(e.to_string()));
        let ts = |s: &str| parse_timestamp(s).map_err(|e| RecordError(e.to_string()));
        let name = |s: &str| Name::new(s).map_err(|e| RecordError(e.to_string()));
        let event = match (fields[1], &fields[2..]) {
            ("register", [t, d, at, n]) => Event::Register {
                tag: tag(t)?,
                demographic: d.parse().map_err(|e: crate::model::ModelError| RecordError(e.to_string()))?,
                at: ts(at)?,
                name: name(n)?,
            },
            ("return", [t, at]) => Event::Return {
                tag: tag(t)?,
                at: ts(at)?,
            },
            ("read", [t, n, at]) => Event::Read {
                tag: tag(t)?,
                node: node(n)?,
                at: ts(at)?,
            },
            ("heartbeat", [n, at]) => Event::Heartbeat {
                node: node(n)?,
                at: ts(at)?,
            },
            ("checkpoint", [n, r, at, nm]) => Event::Checkpoint {
                node: node(n)?,
                room: RoomId::new(r).map_err(|e| RecordError(e.to_string()))?,
                at: ts(at)?,
                name: name(nm)?,
            },
            ("batch", [id, c]) => {
                if id.is_empty() || !id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()) {
                    return Err(bad("bad batch id"));
                }
                Event::Batch {
                    id: id.to_string(),
                    count: c.parse().map_err(|_| bad("bad batch count"))?,
                }
            }
            (k, _) => return Err(bad(&format!("unknown kind or arity for {k:?}"))),
        };
        let rec = LogRecord { seq, event };
        if rec.render() != line {
            return Err(bad("not in canonical form"));
        }
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn each_kind_roundtrips() {
        let lines = [
            "1\tregister\t01008C7200\tfemale\t28-09-2017T11:08:15\tVisitor Name1",
            "2\treturn\t01008C7200\t28-09-2017T12:00:00",
            "3\tread\t01008C7200\t192.168.0.1\t28-09-2017T11:08:15",
            "4\theartbeat\tb8:27:eb:01:02:03\t28-09-2017T11:08:15",
            "5\tcheckpoint\t192.168.0.1\tRoom1\t28-09-2017T11:00:00\tRp1",
            "6\tbatch\t0123456789abcdef\t4",
        ];
        for line in lines {
            let rec = LogRecord::parse(line).unwrap();
            assert_eq!(rec.render(), line);
        }
    }

    #[test]
    fn non_canonical_lines_are_rejected() {
        for line in [
            "",
            "1",
            "01\treturn\t01008C7200\t28-09-2017T12:00:00",
            "1\treturn\t01008c7200\t28-09-2017T12:00:00",
            "1\treturn\t01008C7200",
            "1\tread\t01008C7200\t192.168.000.1\t28-09-2017T11:08:15",
            "1\tbatch\tXYZ\t1",
            "1\tbatch\tABCD\t1",
            "1\tfly\tx",
            "+1\treturn\t01008C7200\t28-09-2017T12:00:00",
        ] {
            assert!(LogRecord::parse(line).is_err(), "{line:?}");
        }
    }
}

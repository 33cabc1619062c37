// SPDX-License-Identifier: Apache-2.0

//! Text codecs for the tag roster and the checkpoint report, plus the frame
//! envelope used between reader nodes and the gateway.
//!
//! Encoding is bit-exact and canonical. Decoding accepts any amount of
//! whitespace (including line breaks) next to the delimiters `|`, `,`, `<`,
//! `>` and `=`, and an optional trailing `...` element, which is how printed
//! listings elide the rest of a list.

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    normalize_node_id, parse_timestamp, validate_tag_id, ModelError, Name, NodeId, RoomId, TagId,
    Timestamp,
};

pub const ROSTER_HEADER: &str = "<TagId | Name>=<";
/// The column header is spelled exactly as deployed readers print it.
pub const REPORT_HEADER: &str = "<IpAdress | Name | Location | LastMeasurementTime>=<";

const ROSTER_SEP: &str = ", ";
const REPORT_SEP: &str = " , ";
const ELISION: &str = "...";

/// Upper bound on a single frame, kind line included.
pub const MAX_FRAME_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("grammar error at byte {position}: expected {expected}")]
    Grammar {
        position: usize,
        expected: &'static str,
    },
    #[error("record {index}: invalid {field}: {source}")]
    Field {
        index: usize,
        field: &'static str,
        source: ModelError,
    },
    #[error("report carries {records} records but {tags} tags")]
    Pairing { records: usize, tags: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame has no kind line")]
    MissingKind,
    #[error("unknown frame kind {0:?}")]
    UnknownKind(String),
    #[error("frame is not terminated by a blank line")]
    MissingTerminator,
    #[error("{0} trailing bytes after frame terminator")]
    TrailingBytes(usize),
    #[error("frame payload is not valid UTF-8")]
    Utf8,
    #[error("frame exceeds {MAX_FRAME_BYTES} bytes")]
    TooLarge,
    #[error("payload contains a blank line or ends with a line feed")]
    PayloadContainsTerminator,
}

// ---------------------------------------------------------------------------
// Values

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagRoster {
    pub entries: Vec<(TagId, Name)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportRecord {
    pub node: NodeId,
    pub name: Name,
    pub room: RoomId,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CheckpointReport {
    pub records: Vec<ReportRecord>,
}

/// Body of a `report` frame: a checkpoint report followed by a roster whose
/// i-th entry is the tag read in the report's i-th record.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReportPayload {
    pub report: CheckpointReport,
    pub tags: TagRoster,
}

/// Body of a `heartbeat` frame: `NODE TIMESTAMP`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heartbeat {
    pub node: NodeId,
    pub at: Timestamp,
}

// ---------------------------------------------------------------------------
// Encoding

pub fn encode_tag_roster(r: &TagRoster) -> String {
    let body: Vec<String> = r
        .entries
        .iter()
        .map(|(t, n)| format!("{t} | {n}"))
        .collect();
    format!("{ROSTER_HEADER}{}>", body.join(ROSTER_SEP))
}

pub fn encode_checkpoint_report(c: &CheckpointReport) -> String {
    let body: Vec<String> = c
        .records
        .iter()
        .map(|r| format!("{}| {} | {} |{}", r.node, r.name, r.room, r.at))
        .collect();
    format!("{REPORT_HEADER}{}>", body.join(REPORT_SEP))
}

pub fn encode_report_payload(p: &ReportPayload) -> String {
    format!(
        "{}\n{}",
        encode_checkpoint_report(&p.report),
        encode_tag_roster(&p.tags)
    )
}

pub fn encode_heartbeat(h: &Heartbeat) -> String {
    format!("{} {}", h.node, h.at)
}

// ---------------------------------------------------------------------------
// Decoding

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn err(&self, expected: &'static str) -> WireError {
        WireError::Grammar {
            position: self.pos,
            expected,
        }
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    /// Consumes `lit` after optional whitespace.
    fn expect(&mut self, lit: &str, expected: &'static str) -> Result<(), WireError> {
        self.skip_ws();
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            Ok(())
        } else {
            Err(self.err(expected))
        }
    }

    /// Returns the trimmed text up to (not including) the next delimiter.
    fn field(&mut self, expected: &'static str) -> Result<(&'a str, usize), WireError> {
        self.skip_ws();
        let start = self.pos;
        let rest = self.rest();
        let len = rest
            .find(['|', ',', '<', '>'])
            .unwrap_or(rest.len());
        let text = rest[..len].trim_end();
        if text.is_empty() {
            return Err(self.err(expected));
        }
        self.pos += len;
        Ok((text, start))
    }
}

fn header(c: &mut Cursor<'_>, words: &[&str]) -> Result<(), WireError> {
    c.expect("<", "'<' opening the header")?;
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            c.expect("|", "'|' between header columns")?;
        }
        c.expect(w, "header column name")?;
    }
    c.expect(">", "'>' closing the header")?;
    c.expect("=", "'=' after the header")?;
    c.expect("<", "'<' opening the list")?;
    Ok(())
}

/// Parses list elements until the closing `>`, calling `element` for each.
/// Leaves the cursor just after the `>`.
fn list<'a, T>(
    c: &mut Cursor<'a>,
    mut element: impl FnMut(&mut Cursor<'a>, usize) -> Result<T, WireError>,
) -> Result<Vec<T>, WireError> {
    let mut out = Vec::new();
    c.skip_ws();
    if c.peek() == Some('>') {
        c.pos += 1;
        return Ok(out);
    }
    loop {
        c.skip_ws();
        if c.rest().starts_with(ELISION) {
            let save = c.pos;
            c.pos += ELISION.len();
            c.skip_ws();
            if c.peek() == Some('>') {
                c.pos += 1;
                return Ok(out);
            }
            c.pos = save;
        }
        out.push(element(c, out.len())?);
        c.skip_ws();
        match c.peek() {
            Some(',') => c.pos += 1,
            Some('>') => {
                c.pos += 1;
                return Ok(out);
            }
            _ => return Err(c.err("',' or '>' after a list element")),
        }
    }
}

fn field_err(index: usize, field: &'static str) -> impl Fn(ModelError) -> WireError {
    move |source| WireError::Field {
        index,
        field,
        source,
    }
}

fn roster_at(c: &mut Cursor<'_>) -> Result<TagRoster, WireError> {
    header(c, &["TagId", "Name"])?;
    let entries = list(c, |c, i| {
        let (tag, _) = c.field("tag id")?;
        c.expect("|", "'|' after tag id")?;
        let (name, _) = c.field("name")?;
        Ok((
            validate_tag_id(tag).map_err(field_err(i, "tag"))?,
            Name::new(name).map_err(field_err(i, "name"))?,
        ))
    })?;
    Ok(TagRoster { entries })
}

fn report_at(c: &mut Cursor<'_>) -> Result<CheckpointReport, WireError> {
    header(c, &["IpAdress", "Name", "Location", "LastMeasurementTime"])?;
    let records = list(c, |c, i| {
        let (node, _) = c.field("node id")?;
        c.expect("|", "'|' after node id")?;
        let (name, _) = c.field("name")?;
        c.expect("|", "'|' after name")?;
        let (room, _) = c.field("location")?;
        c.expect("|", "'|' after location")?;
        let (at, _) = c.field("timestamp")?;
        Ok(ReportRecord {
            node: normalize_node_id(node).map_err(field_err(i, "node"))?,
            name: Name::new(name).map_err(field_err(i, "name"))?,
            room: RoomId::new(room).map_err(field_err(i, "location"))?,
            at: parse_timestamp(at).map_err(field_err(i, "timestamp"))?,
        })
    })?;
    Ok(CheckpointReport { records })
}

fn at_end(c: &mut Cursor<'_>) -> Result<(), WireError> {
    c.skip_ws();
    if c.rest().is_empty() {
        Ok(())
    } else {
        Err(c.err("end of input"))
    }
}

pub fn decode_tag_roster(s: &str) -> Result<TagRoster, WireError> {
    let mut c = Cursor::new(s);
    let r = roster_at(&mut c)?;
    at_end(&mut c)?;
    Ok(r)
}

pub fn decode_checkpoint_report(s: &str) -> Result<CheckpointReport, WireError> {
    let mut c = Cursor::new(s);
    let r = report_at(&mut c)?;
    at_end(&mut c)?;
    Ok(r)
}

pub fn decode_report_payload(s: &str) -> Result<ReportPayload, WireError> {
    let mut c = Cursor::new(s);
    let report = report_at(&mut c)?;
    let tags = roster_at(&mut c)?;
    at_end(&mut c)?;
    if report.records.len() != tags.entries.len() {
        return Err(WireError::Pairing {
            records: report.records.len(),
            tags: tags.entries.len(),
        });
    }
    Ok(ReportPayload { report, tags })
}

pub fn decode_heartbeat(s: &str) -> Result<Heartbeat, WireError> {
    let mut parts = s.split(' ');
    let (Some(node), Some(at), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(WireError::Grammar {
            position: 0,
            expected: "NODE TIMESTAMP",
        });
    };
    Ok(Heartbeat {
        node: normalize_node_id(node).map_err(field_err(0, "node"))?,
        at: parse_timestamp(at).map_err(field_err(0, "timestamp"))?,
    })
}

// ---------------------------------------------------------------------------
// Framing

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameKind {
    Roster,
    Report,
    Heartbeat,
}

impl FrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Roster => "roster",
            FrameKind::Report => "report",
            FrameKind::Heartbeat => "heartbeat",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "roster" => Some(FrameKind::Roster),
            "report" => Some(FrameKind::Report),
            "heartbeat" => Some(FrameKind::Heartbeat),
            _ => None,
        }
    }
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub payload: String,
}

/// `KIND LF payload LF LF`.
pub fn frame_message(kind: FrameKind, payload: &str) -> Result<Vec<u8>, FrameError> {
    if payload.contains("\n\n") || payload.ends_with('\n') {
        return Err(FrameError::PayloadContainsTerminator);
    }
    let mut out = Vec::with_capacity(kind.as_str().len() + payload.len() + 3);
    out.extend_from_slice(kind.as_str().as_bytes());
    out.push(b'\n');
    out.extend_from_slice(payload.as_bytes());
    out.extend_from_slice(b"\n\n");
    if out.len() > MAX_FRAME_BYTES {
        return Err(FrameError::TooLarge);
    }
    Ok(out)
}

/// Finds the first complete frame in `buf`, returning it and the number of
/// bytes it occupies. `Ok(None)` means more bytes are needed.
pub fn split_frame(buf: &[u8]) -> Result<Option<(Frame, usize)>, FrameError> {
    let Some(nl) = buf.iter().position(|&b| b == b'\n') else {
        return if buf.len() > MAX_FRAME_BYTES {
            Err(FrameError::TooLarge)
        } else {
            Ok(None)
        };
    };
    let kind_text = std::str::from_utf8(&buf[..nl]).map_err(|_| FrameError::Utf8)?;
    if kind_text.is_empty() {
        return Err(FrameError::MissingKind);
    }
    let kind =
        FrameKind::parse(kind_text).ok_or_else(|| FrameError::UnknownKind(kind_text.to_string()))?;
    let body = &buf[nl + 1..];
    let Some(end) = body.windows(2).position(|w| w == b"\n\n") else {
        return if buf.len() > MAX_FRAME_BYTES {
            Err(FrameError::TooLarge)
        } else {
            Ok(None)
        };
    };
    let total = nl + 1 + end + 2;
    if total > MAX_FRAME_BYTES {
        return Err(FrameError::TooLarge);
    }
    let payload = std::str::from_utf8(&body[..end]).map_err(|_| FrameError::Utf8)?;
    Ok(Some((
        Frame {
            kind,
            payload: payload.to_string(),
        },
        total,
    )))
}

/// Decodes exactly one frame.
pub fn unframe(bytes: &[u8]) -> Result<Frame, FrameError> {
    match split_frame(bytes)? {
        Some((frame, used)) if used == bytes.len() => Ok(frame),
        Some((_, used)) => Err(FrameError::TrailingBytes(bytes.len() - used)),
        None if bytes.iter().all(|&b| b != b'\n') && !bytes.is_empty() => {
            Err(FrameError::MissingTerminator)
        }
        None if bytes.is_empty() => Err(FrameError::MissingKind),
        None => Err(FrameError::MissingTerminator),
    }
}

/// Gateway answer to one frame, sent back as a single line:
/// `ok` / `ok <batch-id>` or `err <status> <message>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Ok(Option<String>),
    Err { status: u16, message: String },
}

impl Reply {
    pub fn encode(&self) -> String {
        match self {
            Reply::Ok(None) => "ok\n".to_string(),
            Reply::Ok(Some(id)) => format!("ok {id}\n"),
            Reply::Err { status, message } => {
                let flat: String = message
                    .chars()
                    .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
                    .collect();
                format!("err {status} {flat}\n")
            }
        }
    }

    /// Parses one reply line, with or without its trailing line feed.
    pub fn decode(line: &str) -> Option<Reply> {
        let line = line.strip_suffix('\n').unwrap_or(line);
        if line.contains(['\n', '\r']) {
            return None;
        }
        if line == "ok" {
            return Some(Reply::Ok(None));
        }
        if let Some(id) = line.strip_prefix("ok ") {
            let ok = !id.is_empty() && id.bytes().all(|b| b.is_ascii_hexdigit());
            return ok.then(|| Reply::Ok(Some(id.to_string())));
        }
        let rest = line.strip_prefix("err ")?;
        let (status, message) = rest.split_once(' ').unwrap_or((rest, ""));
        let status: u16 = status.parse().ok().filter(|s| (100..600).contains(s))?;
        Some(Reply::Err {
            status,
            message: message.to_string(),
        })
    }
}

/// Content-derived identity of a report payload. Redelivering the same
/// payload yields the same id, which the gateway uses to acknowledge
/// duplicates without applying them twice.
pub fn batch_id(payload: &str) -> String {
    let digest = Sha256::digest(payload.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(s: &str) -> TagId {
        validate_tag_id(s).unwrap()
    }

    fn name(s: &str) -> Name {
        Name::new(s).unwrap()
    }

    #[test]
    fn roster_canonical_encoding() {
        let r = TagRoster {
            entries: vec![
                (tag("01008C7200"), name("Visitor Name1")),
                (tag("01008C7201"), name("Visitor Name2")),
            ],
        };
        assert_eq!(
            encode_tag_roster(&r),
            "<TagId | Name>=<01008C7200 | Visitor Name1, 01008C7201 | Visitor Name2>"
        );
        assert_eq!(encode_tag_roster(&TagRoster::default()), "<TagId | Name>=<>");
        assert_eq!(decode_tag_roster("<TagId | Name>=<>").unwrap(), TagRoster::default());
    }

    #[test]
    fn single_record_report() {
        let c = CheckpointReport {
            records: vec![ReportRecord {
                node: normalize_node_id("192.168.0.1").unwrap(),
                name: name("Rp1"),
                room: RoomId::new("Room1").unwrap(),
                at: parse_timestamp("28-09-2017T11:08:15").unwrap(),
            }],
        };
        assert_eq!(
            encode_checkpoint_report(&c),
            "<IpAdress | Name | Location | LastMeasurementTime>=<192.168.0.1| Rp1 | Room1 |28-09-2017T11:08:15>"
        );
    }

    #[test]
    fn grammar_errors_report_position() {
        let err = decode_tag_roster("<TagId | Name>=<01008C7200 Visitor>").unwrap_err();
        assert!(matches!(err, WireError::Grammar { position: 34, .. }), "{err:?}");
        let err = decode_tag_roster("<TagId | Nome>=<>").unwrap_err();
        assert!(matches!(err, WireError::Grammar { position: 9, .. }), "{err:?}");
        assert!(decode_tag_roster("<TagId | Name>=<> extra").is_err());
        assert!(decode_tag_roster("<TagId | Name>=<01008C7200 | A").is_err());
        let err = decode_tag_roster("<TagId | Name>=<01008C72 | A>").unwrap_err();
        assert!(matches!(err, WireError::Field { index: 0, field: "tag", .. }));
        let err = decode_checkpoint_report(
            "<IpAdress | Name | Location | LastMeasurementTime>=<1.2.3.4| a | R |28-09-2017T11:08:15 , 1.2.3.4| a | R |31-02-2017T11:08:15>",
        )
        .unwrap_err();
        assert!(matches!(err, WireError::Field { index: 1, field: "timestamp", .. }));
    }

    #[test]
    fn elision_only_as_final_element() {
        let r = decode_tag_roster("<TagId | Name>=<01008C7200 | A, ... >").unwrap();
        assert_eq!(r.entries.len(), 1);
        assert_eq!(decode_tag_roster("<TagId | Name>=<...>").unwrap().entries.len(), 0);
        assert!(decode_tag_roster("<TagId | Name>=<..., 01008C7200 | A>").is_err());
        // a name may itself be "..."
        let r = decode_tag_roster("<TagId | Name>=<01008C7200 | ...>").unwrap();
        assert_eq!(r.entries[0].1.as_str(), "...");
    }

    #[test]
    fn report_payload_pairs_tags_with_records() {
        let text = "<IpAdress | Name | Location | LastMeasurementTime>=<1.2.3.4| Rp1 | Room1 |28-09-2017T11:08:15>\n<TagId | Name>=<01008C7200 | 01008C7200>";
        let p = decode_report_payload(text).unwrap();
        assert_eq!(encode_report_payload(&p), text);
        let bad = "<IpAdress | Name | Location | LastMeasurementTime>=<1.2.3.4| Rp1 | Room1 |28-09-2017T11:08:15>\n<TagId | Name>=<>";
        assert_eq!(
            decode_report_payload(bad).unwrap_err(),
            WireError::Pairing { records: 1, tags: 0 }
        );
    }

    #[test]
    fn frame_examples() {
        let f = frame_message(FrameKind::Report, "<x>").unwrap();
        assert_eq!(f, b"report\n<x>\n\n");
        assert_eq!(
            unframe(&f).unwrap(),
            Frame { kind: FrameKind::Report, payload: "<x>".into() }
        );
        let hb = frame_message(FrameKind::Heartbeat, "").unwrap();
        assert_eq!(hb, b"heartbeat\n\n\n");
        assert_eq!(unframe(&hb).unwrap().payload, "");
        assert_eq!(unframe(b"report\n<x>\n"), Err(FrameError::MissingTerminator));
        assert_eq!(unframe(b"report"), Err(FrameError::MissingTerminator));
        assert_eq!(unframe(b"bogus\nx\n\n"), Err(FrameError::UnknownKind("bogus".into())));
        assert_eq!(unframe(b"report\nx\n\nmore"), Err(FrameError::TrailingBytes(4)));
        assert_eq!(
            frame_message(FrameKind::Report, "a\n\nb"),
            Err(FrameError::PayloadContainsTerminator)
        );
        // single line breaks inside a payload are fine
        let f = frame_message(FrameKind::Report, "\na\nb").unwrap();
        assert_eq!(unframe(&f).unwrap().payload, "\na\nb");
    }

    #[test]
    fn split_frame_handles_streams() {
        let mut buf = frame_message(FrameKind::Heartbeat, "1.2.3.4 28-09-2017T11:08:15").unwrap();
        buf.extend(frame_message(FrameKind::Roster, "<TagId | Name>=<>").unwrap());
        let (a, used) = split_frame(&buf).unwrap().unwrap();
        assert_eq!(a.kind, FrameKind::Heartbeat);
        let (b, used2) = split_frame(&buf[used..]).unwrap().unwrap();
        assert_eq!(b.kind, FrameKind::Roster);
        assert_eq!(used + used2, buf.len());
        assert_eq!(split_frame(&buf[..used - 1]).unwrap(), None);
    }

    #[test]
    fn heartbeat_payload() {
        let h = decode_heartbeat("B8:27:EB:01:02:03 28-09-2017T11:08:15").unwrap();
        assert_eq!(encode_heartbeat(&h), "b8:27:eb:01:02:03 28-09-2017T11:08:15");
        assert!(decode_heartbeat("1.2.3.4").is_err());
        assert!(decode_heartbeat("1.2.3.4  28-09-2017T11:08:15").is_err());
    }

    #[test]
    fn reply_lines() {
        for r in [
            Reply::Ok(None),
            Reply::Ok(Some("00ff".into())),
            Reply::Err { status: 403, message: "unknown checkpoint 1.2.3.4".into() },
        ] {
            assert_eq!(Reply::decode(&r.encode()), Some(r));
        }
        assert_eq!(Reply::decode("err 99 x"), None);
        assert_eq!(Reply::decode("ok zz"), None);
        assert_eq!(Reply::decode("nope"), None);
    }

    #[test]
    fn batch_id_is_stable() {
        assert_eq!(batch_id("abc"), batch_id("abc"));
        assert_ne!(batch_id("abc"), batch_id("abd"));
        assert_eq!(batch_id("abc").len(), 16);
    }
}

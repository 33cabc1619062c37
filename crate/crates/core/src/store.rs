// SPDX-License-Identifier: Apache-2.0

//! Append-only event log and state snapshots on local disk.
//!
//! Layout of a data directory:
//!
//! ```text
//! events-<first_seq>.log   one record per line: <record>\t#<crc32 hex>\n
//! state-<seq>.snap         header line, then the engine state
//! ```
//!
//! The checksum covers the record text before the `\t#`. A final line with no
//! line feed is a torn write (it was never acknowledged) and is cut off when
//! the store is opened. Any other damage is reported as `CorruptLog` with the
//! seq of the offending record.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::warn;
use thiserror::Error;

use crate::engine::{Engine, EngineConfig, EngineError, LogRecord};
use crate::graph::BuildingGraph;

pub const DEFAULT_SEGMENT_BYTES: u64 = 10 * 1024 * 1024;
const SNAPSHOT_MAGIC: &str = "roomtrack-state v1";
const SNAPSHOTS_KEPT: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("storage full")]
    StorageFull,
    #[error("i/o failure: {0}")]
    IoFailure(String),
    #[error("store halted after an earlier failure: {0}")]
    Halted(String),
    #[error("seq {seq} out of range (last seq {last})")]
    SeqOutOfRange { seq: u64, last: u64 },
    #[error("append out of order: expected seq {expected}, got {got}")]
    SeqMismatch { expected: u64, got: u64 },
    #[error("corrupt log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        StoreError::IoFailure(e.to_string())
    }
}

impl From<StoreError> for EngineError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::CorruptLog { seq, reason } => EngineError::CorruptLog { seq, reason },
            other => EngineError::CorruptLog {
                seq: 0,
                reason: other.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreConfig {
    pub segment_bytes: u64,
    /// fsync after every append group.
    pub sync: bool,
    /// Total log bytes allowed; `None` for unlimited.
    pub capacity_bytes: Option<u64>,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            segment_bytes: DEFAULT_SEGMENT_BYTES,
            sync: true,
            capacity_bytes: None,
        }
    }
}

/// Deterministic write failures for crash testing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FaultPlan {
    /// Fail once this many log bytes exist, after writing the bytes up to
    /// the limit (a torn write).
    pub fail_at_total_bytes: Option<u64>,
    /// Fail the n-th append call from now (0-based), writing nothing.
    pub fail_append: Option<u64>,
}

#[derive(Debug, Clone)]
struct Segment {
    first_seq: u64,
    path: PathBuf,
    bytes: u64,
}

#[derive(Debug)]
pub struct EventStore {
    dir: PathBuf,
    cfg: StoreConfig,
    segments: Vec<Segment>,
    writer: Option<File>,
    last_seq: u64,
    total_bytes: u64,
    halted: Option<String>,
    faults: FaultPlan,
    appends: u64,
}

/// What `open` had to repair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpenReport {
    pub records: u64,
    pub torn_bytes_truncated: u64,
}

fn segment_name(first_seq: u64) -> String {
    format!("events-{first_seq}.log")
}

fn parse_numbered(name: &str, prefix: &str, suffix: &str) -> Option<u64> {
    let n = name.strip_prefix(prefix)?.strip_suffix(suffix)?;
    if n.is_empty() || !n.bytes().all(|b| b.is_ascii_digit()) || (n.len() > 1 && n.starts_with('0')) {
        return None;
    }
    n.parse().ok()
}

pub fn encode_line(rec: &LogRecord) -> String {
    let body = rec.render();
    let crc = crc32fast::hash(body.as_bytes());
    format!("{body}\t#{crc:08x}\n")
}

/// Verifies and parses one stored line (without its line feed).
pub fn decode_line(line: &str, expected_seq: u64) -> Result<LogRecord, StoreError> {
    let corrupt = |reason: &str| StoreError::CorruptLog {
        seq: expected_seq,
        reason: reason.to_string(),
    };
    let (body, crc) = line.rsplit_once("\t#").ok_or_else(|| corrupt("missing checksum"))?;
    let valid_hex = crc.len() == 8 && crc.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
    let crc = u32::from_str_radix(crc, 16)
        .ok()
        .filter(|_| valid_hex)
        .ok_or_else(|| corrupt("malformed checksum"))?;
    if crc32fast::hash(body.as_bytes()) != crc {
        return Err(corrupt("checksum mismatch"));
    }
    let rec = LogRecord::parse(body).map_err(|e| corrupt(&e.0))?;
    if rec.seq != expected_seq {
        return Err(corrupt(&format!("found seq {}", rec.seq)));
    }
    Ok(rec)
}

fn list_numbered(dir: &Path, prefix: &str, suffix: &str) -> io::Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if let Some(n) = entry
            .file_name()
            .to_str()
            .and_then(|s| parse_numbered(s, prefix, suffix))
        {
            out.push((n, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

impl EventStore {
    /// Opens (or creates) the log in `dir`, verifying every record and
    /// cutting off a torn final line.
    pub fn open(dir: impl AsRef<Path>, cfg: StoreConfig) -> Result<(EventStore, OpenReport), StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut report = OpenReport::default();
        let mut segments = Vec::new();
        let mut expected = 1u64;
        let found = list_numbered(&dir, "events-", ".log")?;
        let count = found.len();
        for (i, (first_seq, path)) in found.into_iter().enumerate() {
            if first_seq != expected {
                return Err(StoreError::CorruptLog {
                    seq: expected,
                    reason: format!("segment {} does not continue the log", path.display()),
                });
            }
            let mut data = Vec::new();
            File::open(&path)?.read_to_end(&mut data)?;
            let mut good = 0usize;
            let mut rest = &data[..];
            while !rest.is_empty() {
                let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
                    if i + 1 == count {
                        // torn final write
                        break;
                    }
                    return Err(StoreError::CorruptLog {
                        seq: expected,
                        reason: "unterminated record inside the log".into(),
                    });
                };
                let line = std::str::from_utf8(&rest[..nl]).map_err(|_| StoreError::CorruptLog {
                    seq: expected,
                    reason: "record is not UTF-8".into(),
                })?;
                decode_line(line, expected)?;
                expected += 1;
                good += nl + 1;
                rest = &rest[nl + 1..];
            }
            if good < data.len() {
                let torn = (data.len() - good) as u64;
                warn!("{}: truncating {torn} bytes of torn write", path.display());
                let f = OpenOptions::new().write(true).open(&path)?;
                f.set_len(good as u64)?;
                f.sync_all()?;
                report.torn_bytes_truncated += torn;
            }
            segments.push(Segment {
                first_seq,
                path,
                bytes: good as u64,
            });
        }
        let last_seq = expected - 1;
        report.records = last_seq;
        let total_bytes = segments.iter().map(|s| s.bytes).sum();
        Ok((
            EventStore {
                dir,
                cfg,
                segments,
                writer: None,
                last_seq,
                total_bytes,
                halted: None,
                faults: FaultPlan::default(),
                appends: 0,
            },
            report,
        ))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bytes
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn is_halted(&self) -> bool {
        self.halted.is_some()
    }

    pub fn inject(&mut self, plan: FaultPlan) {
        self.faults = plan;
        self.appends = 0;
    }

    /// Appends one record; it is flushed (and synced, if configured) before
    /// its seq is returned.
    pub fn append(&mut self, rec: &LogRecord) -> Result<u64, StoreError> {
        self.append_all(std::slice::from_ref(rec))
    }

    /// Appends records as one group with a single sync at the end. Returns
    /// the last seq written.
    pub fn append_all(&mut self, recs: &[LogRecord]) -> Result<u64, StoreError> {
        if let Some(why) = &self.halted {
            return Err(StoreError::Halted(why.clone()));
        }
        let n = self.appends;
        self.appends += 1;
        if self.faults.fail_append == Some(n) {
            return Err(self.fail(StoreError::IoFailure("injected append failure".into())));
        }
        for rec in recs {
            if rec.seq != self.last_seq + 1 {
                return Err(StoreError::SeqMismatch {
                    expected: self.last_seq + 1,
                    got: rec.seq,
                });
            }
            let line = encode_line(rec);
            if let Err(e) = self.write_line(line.as_bytes()) {
                return Err(self.fail(e));
            }
            self.last_seq = rec.seq;
        }
        if let Err(e) = self.sync() {
            return Err(self.fail(e));
        }
        Ok(self.last_seq)
    }

    /// Refuses all further appends.
    pub fn halt(&mut self, reason: String) {
        self.halted = Some(reason);
        self.writer = None;
    }

    fn fail(&mut self, e: StoreError) -> StoreError {
        self.halt(e.to_string());
        e
    }

    fn write_line(&mut self, line: &[u8]) -> Result<(), StoreError> {
        let len = line.len() as u64;
        if self
            .cfg
            .capacity_bytes
            .is_some_and(|cap| self.total_bytes + len > cap)
        {
            return Err(StoreError::StorageFull);
        }
        let roll = match self.segments.last() {
            None => true,
            Some(s) => s.bytes > 0 && s.bytes + len > self.cfg.segment_bytes,
        };
        if roll {
            self.sync()?;
            let first_seq = self.last_seq + 1;
            let path = self.dir.join(segment_name(first_seq));
            self.segments.push(Segment {
                first_seq,
                path,
                bytes: 0,
            });
            self.writer = None;
        }
        if self.writer.is_none() {
            let seg = self.segments.last().expect("segment exists");
            let mut f = OpenOptions::new().create(true).append(true).open(&seg.path)?;
            f.seek(SeekFrom::End(0))?;
            self.writer = Some(f);
            if roll {
                sync_dir(&self.dir)?;
            }
        }
        let w = self.writer.as_mut().expect("writer open");
        if let Some(limit) = self.faults.fail_at_total_bytes {
            if self.total_bytes + len > limit {
                let keep = limit.saturating_sub(self.total_bytes) as usize;
                w.write_all(&line[..keep])?;
                w.flush()?;
                return Err(StoreError::IoFailure("injected torn write".into()));
            }
        }
        w.write_all(line)?;
        w.flush()?;
        self.total_bytes += len;
        self.segments.last_mut().expect("segment exists").bytes += len;
        Ok(())
    }

    fn sync(&mut self) -> Result<(), StoreError> {
        if self.cfg.sync {
            if let Some(w) = &self.writer {
                w.sync_data()?;
            }
        }
        Ok(())
    }

    /// Records `seq..=last_seq` as of this call, in order.
    pub fn read_from(&self, seq: u64) -> Result<LogReader, StoreError> {
        if seq == 0 || seq > self.last_seq + 1 {
            return Err(StoreError::SeqOutOfRange {
                seq,
                last: self.last_seq,
            });
        }
        let start = self
            .segments
            .iter()
            .rposition(|s| s.first_seq <= seq)
            .unwrap_or(0);
        Ok(LogReader {
            segments: self.segments[start..]
                .iter()
                .map(|s| (s.first_seq, s.path.clone()))
                .collect(),
            current: None,
            next_seq: self.segments.get(start).map_or(seq, |s| s.first_seq),
            from: seq,
            until: self.last_seq,
            failed: false,
        })
    }
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    // Directory fsync makes a new file's name durable; not every platform
    // allows opening a directory, so failure to open is ignored.
    if let Ok(d) = File::open(dir) {
        d.sync_all()?;
    }
    Ok(())
}

/// Streaming reader over a bounded range of the log.
pub struct LogReader {
    segments: std::collections::VecDeque<(u64, PathBuf)>,
    current: Option<BufReader<File>>,
    next_seq: u64,
    from: u64,
    until: u64,
    failed: bool,
}

impl Iterator for LogReader {
    type Item = Result<LogRecord, StoreError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.failed || self.next_seq > self.until {
                return None;
            }
            if self.current.is_none() {
                let (_, path) = self.segments.pop_front()?;
                match File::open(&path) {
                    Ok(f) => self.current = Some(BufReader::new(f)),
                    Err(e) => {
                        self.failed = true;
                        return Some(Err(e.into()));
                    }
                }
            }
            let reader = self.current.as_mut().expect("opened");
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => {
                    self.current = None;
                    continue;
                }
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    let seq = self.next_seq;
                    return Some(Err(StoreError::CorruptLog {
                        seq,
                        reason: e.to_string(),
                    }));
                }
            }
            let seq = self.next_seq;
            let Some(text) = line.strip_suffix('\n') else {
                self.failed = true;
                return Some(Err(StoreError::CorruptLog {
                    seq,
                    reason: "unterminated record".into(),
                }));
            };
            let rec = decode_line(text, seq);
            self.next_seq += 1;
            if rec.is_err() {
                self.failed = true;
                return Some(rec);
            }
            if seq >= self.from {
                return Some(rec);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Snapshots

fn snapshot_name(seq: u64) -> String {
    format!("state-{seq}.snap")
}

/// Writes `state-<seq>.snap` atomically and prunes older snapshots.
pub fn write_snapshot(dir: &Path, seq: u64, state: &str) -> Result<PathBuf, StoreError> {
    let crc = crc32fast::hash(state.as_bytes());
    let path = dir.join(snapshot_name(seq));
    let tmp = dir.join(format!(".{}.tmp", snapshot_name(seq)));
    {
        let mut f = File::create(&tmp)?;
        write!(f, "{SNAPSHOT_MAGIC} {seq} {crc:08x}\n{state}")?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &path)?;
    sync_dir(dir)?;
    let snaps = list_numbered(dir, "state-", ".snap")?;
    if snaps.len() > SNAPSHOTS_KEPT {
        for (_, old) in &snaps[..snaps.len() - SNAPSHOTS_KEPT] {
            let _ = fs::remove_file(old);
        }
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("corrupt snapshot {path}: {reason}")]
pub struct CorruptSnapshot {
    pub path: String,
    pub reason: String,
}

/// Newest snapshot's `(seq, state)`, or `None` if there is none.
pub fn read_latest_snapshot(dir: &Path) -> Result<Option<(u64, String)>, CorruptSnapshot> {
    let snaps = list_numbered(dir, "state-", ".snap").map_err(|e| CorruptSnapshot {
        path: dir.display().to_string(),
        reason: e.to_string(),
    })?;
    let Some((seq, path)) = snaps.last() else {
        return Ok(None);
    };
    let bad = |reason: &str| CorruptSnapshot {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    let text = fs::read_to_string(path).map_err(|e| bad(&e.to_string()))?;
    let (header, body) = text.split_once('\n').ok_or_else(|| bad("missing header"))?;
    let expected = format!("{SNAPSHOT_MAGIC} {seq} {:08x}", crc32fast::hash(body.as_bytes()));
    if header != expected {
        return Err(bad("header or checksum mismatch"));
    }
    Ok(Some((*seq, body.to_string())))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RestoreSource {
    Snapshot(u64),
    FullReplay,
    /// The newest snapshot was unusable; the log was replayed from seq 1.
    FallbackReplay(String),
}

/// Rebuilds engine state from the newest usable snapshot plus the log tail.
pub fn restore(
    store: &EventStore,
    graph: Arc<BuildingGraph>,
    cfg: EngineConfig,
) -> Result<(Engine, RestoreSource), EngineError> {
    let snapshot = match read_latest_snapshot(store.dir()) {
        Ok(Some((seq, _))) if seq > store.last_seq() => Err(format!(
            "snapshot at seq {seq} is ahead of the log (last seq {})",
            store.last_seq()
        )),
        Ok(Some((seq, body))) => Engine::decode_state(graph.clone(), cfg, &body)
            .and_then(|e| {
                if e.last_seq() == seq {
                    Ok(e)
                } else {
                    Err(EngineError::CorruptState("seq mismatch".into()))
                }
            })
            .map(Some)
            .map_err(|e| e.to_string()),
        Ok(None) => Ok(None),
        Err(e) => Err(e.to_string()),
    };
    match snapshot {
        Ok(Some(mut engine)) => {
            let seq = engine.last_seq();
            engine.replay_tail(store.read_from(seq + 1)?.map(|r| r.map_err(EngineError::from)))?;
            Ok((engine, RestoreSource::Snapshot(seq)))
        }
        Ok(None) => {
            let engine = Engine::replay(graph, cfg, store.read_from(1)?.map(|r| r.map_err(EngineError::from)))?;
            Ok((engine, RestoreSource::FullReplay))
        }
        Err(reason) => {
            warn!("{reason}; falling back to full replay");
            let engine = Engine::replay(graph, cfg, store.read_from(1)?.map(|r| r.map_err(EngineError::from)))?;
            Ok((engine, RestoreSource::FallbackReplay(reason)))
        }
    }
}

// SPDX-License-Identifier: Apache-2.0

//! The gateway's request handling, independent of any network transport.
//!
//! Every mutation is validated against the live engine, appended to the
//! event store, and only then applied, all under one writer lock. Queries
//! run against an immutable engine snapshot that is refreshed lazily when
//! the state has moved on.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;

use log::{error, info, warn};
use thiserror::Error;

use crate::engine::{
    Applied, Engine, EngineConfig, EngineError, Event, IntervalFlow, LogRecord, OccupancySnapshot,
};
use crate::evac::{evac_report, AlertOutcome, Channel, EvacError, EvacReport, Outbox, DEFAULT_COOLDOWN_S};
use crate::graph::BuildingGraph;
use crate::model::{Checkpoint, Demographic, Name, NodeId, RoomId, TagId, Timestamp, Visitor, VisitorStatus};
use crate::store::{restore, write_snapshot, EventStore, FaultPlan, OpenReport, RestoreSource, StoreConfig, StoreError};
use crate::wire::{batch_id, decode_heartbeat, decode_report_payload, unframe, FrameKind, Reply};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Manager,
    Viewer,
}

/// Static bearer tokens for the two roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Auth {
    pub manager_token: String,
    pub viewer_token: Option<String>,
}

impl Auth {
    pub fn role(&self, token: Option<&str>) -> Option<Role> {
        let token = token?;
        if token == self.manager_token {
            Some(Role::Manager)
        } else if self.viewer_token.as_deref() == Some(token) {
            Some(Role::Viewer)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("missing or unknown token")]
    Unauthenticated,
    #[error("this operation needs the manager role")]
    Unauthorized,
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    RejectedUnknownCheckpoint(String),
    #[error("storage unavailable: {0}")]
    Unavailable(String),
}

impl ServiceError {
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::Unauthenticated => 401,
            ServiceError::Unauthorized | ServiceError::RejectedUnknownCheckpoint(_) => 403,
            ServiceError::BadRequest(_) => 400,
            ServiceError::NotFound(_) => 404,
            ServiceError::Conflict(_) => 409,
            ServiceError::Unavailable(_) => 503,
        }
    }

    pub fn render(&self) -> String {
        format!("error: {self}\n")
    }
}

impl From<EngineError> for ServiceError {
    fn from(e: EngineError) -> Self {
        let m = e.to_string();
        match e {
            EngineError::TagAlreadyActive(_) | EngineError::DuplicateNode(_) | EngineError::DuplicateBatch(_) => {
                ServiceError::Conflict(m)
            }
            EngineError::TagNotActive(_) | EngineError::UnknownRoom(_) => ServiceError::NotFound(m),
            EngineError::UnknownCheckpoint(_) => ServiceError::RejectedUnknownCheckpoint(m),
            EngineError::QueryBeforeEpoch | EngineError::InvalidInterval => ServiceError::BadRequest(m),
            EngineError::SeqGap { .. } | EngineError::CorruptLog { .. } | EngineError::CorruptState(_) => {
                ServiceError::Unavailable(m)
            }
        }
    }
}

impl From<EvacError> for ServiceError {
    fn from(e: EvacError) -> Self {
        let m = e.to_string();
        match e {
            EvacError::Io(_) => ServiceError::Unavailable(m),
            EvacError::BadOutboxLine { .. } => ServiceError::Unavailable(m),
            _ => ServiceError::BadRequest(m),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub engine: EngineConfig,
    pub store: StoreConfig,
    /// Write a state snapshot every this many log records; 0 disables.
    pub snapshot_every: u64,
    pub outbox_path: Option<PathBuf>,
    pub alert_cooldown_s: i64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            store: StoreConfig::default(),
            snapshot_every: 10_000,
            outbox_path: None,
            alert_cooldown_s: DEFAULT_COOLDOWN_S,
        }
    }
}

struct Writer {
    engine: Engine,
    store: EventStore,
    snapshot_seq: u64,
}

pub struct Service {
    graph: Arc<BuildingGraph>,
    cfg: ServiceConfig,
    writer: Mutex<Writer>,
    /// Incremented after every applied mutation.
    version: AtomicU64,
    published: RwLock<(u64, Arc<Engine>)>,
    outbox: Mutex<Outbox>,
    snapshotter: Mutex<Option<JoinHandle<()>>>,
}

/// How `Service::open` rebuilt its state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenInfo {
    pub store: OpenReport,
    pub source: RestoreSource,
    pub last_seq: u64,
}

/// Outcome of ingesting one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOutcome {
    pub reply: Reply,
    /// Log records appended (0 for a redelivered batch or an error).
    pub appended: u64,
}

impl Service {
    pub fn open(
        graph: Arc<BuildingGraph>,
        cfg: ServiceConfig,
        data_dir: impl AsRef<Path>,
    ) -> Result<(Service, OpenInfo), ServiceError> {
        let data_dir = data_dir.as_ref();
        let (store, report) = EventStore::open(data_dir, cfg.store).map_err(store_error)?;
        let (engine, source) = restore(&store, graph.clone(), cfg.engine)?;
        let outbox_path = cfg
            .outbox_path
            .clone()
            .unwrap_or_else(|| data_dir.join("outbox.tsv"));
        let outbox = Outbox::open(outbox_path, cfg.alert_cooldown_s)?;
        let info = OpenInfo {
            store: report,
            source,
            last_seq: engine.last_seq(),
        };
        let snapshot_seq = match &info.source {
            RestoreSource::Snapshot(s) => *s,
            _ => 0,
        };
        let published = Arc::new(engine.clone());
        Ok((
            Service {
                graph,
                cfg,
                writer: Mutex::new(Writer {
                    engine,
                    store,
                    snapshot_seq,
                }),
                version: AtomicU64::new(0),
                published: RwLock::new((0, published)),
                outbox: Mutex::new(outbox),
                snapshotter: Mutex::new(None),
            },
            info,
        ))
    }

    pub fn graph(&self) -> &Arc<BuildingGraph> {
        &self.graph
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    fn lock_writer(&self) -> std::sync::MutexGuard<'_, Writer> {
        self.writer.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Current engine state, shared and immutable.
    pub fn snapshot(&self) -> Arc<Engine> {
        let want = self.version.load(Ordering::Acquire);
        {
            let p = self.published.read().unwrap_or_else(|p| p.into_inner());
            if p.0 == want {
                return p.1.clone();
            }
        }
        let w = self.lock_writer();
        let version = self.version.load(Ordering::Acquire);
        let fresh = Arc::new(w.engine.clone());
        drop(w);
        let mut p = self.published.write().unwrap_or_else(|p| p.into_inner());
        if p.0 < version {
            *p = (version, fresh.clone());
        }
        p.1.clone()
    }

    /// Arms storage faults on the underlying event store (crash testing).
    pub fn inject_faults(&self, plan: FaultPlan) {
        self.lock_writer().store.inject(plan);
    }

    /// Seq of the last applied record, without publishing a snapshot.
    pub fn last_seq(&self) -> u64 {
        self.lock_writer().engine.last_seq()
    }

    pub fn is_halted(&self) -> bool {
        self.lock_writer().store.is_halted()
    }

    /// Validates, logs and applies `events` as one group.
    fn commit(&self, events: Vec<Event>) -> Result<Vec<Applied>, ServiceError> {
        self.commit_with(|_| Ok(events))
    }

    /// Like `commit`, with the events built under the writer lock from the
    /// live engine. An empty list commits nothing.
    fn commit_with(
        &self,
        build: impl FnOnce(&Engine) -> Result<Vec<Event>, ServiceError>,
    ) -> Result<Vec<Applied>, ServiceError> {
        let mut w = self.lock_writer();
        if w.store.is_halted() {
            return Err(ServiceError::Unavailable("event store halted after a write failure".into()));
        }
        let events = build(&w.engine)?;
        if events.is_empty() {
            return Ok(Vec::new());
        }
        for e in &events {
            w.engine.validate(e)?;
        }
        let first = w.engine.next_seq();
        let records: Vec<LogRecord> = events
            .into_iter()
            .enumerate()
            .map(|(i, event)| LogRecord {
                seq: first + i as u64,
                event,
            })
            .collect();
        if let Err(e) = w.store.append_all(&records) {
            error!("event store failure, refusing further ingest: {e}");
            return Err(store_error(e));
        }
        let mut applied = Vec::with_capacity(records.len());
        for rec in &records {
            match w.engine.apply(rec) {
                Ok(a) => applied.push(a),
                Err(e) => {
                    // Logged but not applicable: the in-memory state no longer
                    // matches the log, so stop taking writes.
                    error!("record {} logged but rejected by the engine: {e}", rec.seq);
                    w.store.halt(format!("engine rejected logged record {}", rec.seq));
                    return Err(ServiceError::Unavailable(e.to_string()));
                }
            }
        }
        self.version.fetch_add(1, Ordering::AcqRel);
        self.maybe_snapshot(&mut w);
        Ok(applied)
    }

    fn maybe_snapshot(&self, w: &mut Writer) {
        let every = self.cfg.snapshot_every;
        if every == 0 || w.engine.last_seq() < w.snapshot_seq + every {
            return;
        }
        let mut slot = self.snapshotter.lock().unwrap_or_else(|p| p.into_inner());
        if slot.as_ref().is_some_and(|h| !h.is_finished()) {
            return;
        }
        if let Some(h) = slot.take() {
            let _ = h.join();
        }
        let engine = w.engine.clone();
        let dir = w.store.dir().to_path_buf();
        w.snapshot_seq = engine.last_seq();
        *slot = Some(std::thread::spawn(move || {
            let seq = engine.last_seq();
            match write_snapshot(&dir, seq, &engine.encode_state()) {
                Ok(path) => info!("wrote {}", path.display()),
                Err(e) => warn!("snapshot at seq {seq} failed: {e}"),
            }
        }));
    }

    /// Waits for a snapshot being written in the background.
    pub fn wait_for_snapshot(&self) {
        let handle = self.snapshotter.lock().unwrap_or_else(|p| p.into_inner()).take();
        if let Some(h) = handle {
            let _ = h.join();
        }
    }

    /// Writes a snapshot of the current state now.
    pub fn snapshot_now(&self) -> Result<PathBuf, ServiceError> {
        self.wait_for_snapshot();
        let mut w = self.lock_writer();
        let seq = w.engine.last_seq();
        let path = write_snapshot(w.store.dir(), seq, &w.engine.encode_state()).map_err(store_error)?;
        w.snapshot_seq = seq;
        Ok(path)
    }

    // -----------------------------------------------------------------------
    // Commands

    pub fn register_checkpoint(
        &self,
        role: Role,
        node: NodeId,
        name: Name,
        room: RoomId,
        at: Timestamp,
    ) -> Result<Checkpoint, ServiceError> {
        require_manager(role)?;
        match self.commit(vec![Event::Checkpoint { node, room, at, name }])?.pop() {
            Some(Applied::CheckpointRegistered(c)) => Ok(c),
            other => unreachable!("{other:?}"),
        }
    }

    pub fn register_visitor(
        &self,
        role: Role,
        tag: TagId,
        name: Name,
        demographic: Demographic,
        at: Timestamp,
    ) -> Result<Visitor, ServiceError> {
        require_manager(role)?;
        match self.commit(vec![Event::Register { tag, demographic, at, name }])?.pop() {
            Some(Applied::Registered(v)) => Ok(v),
            other => unreachable!("{other:?}"),
        }
    }

    pub fn return_tag(&self, role: Role, tag: TagId, at: Timestamp) -> Result<Visitor, ServiceError> {
        require_manager(role)?;
        match self.commit(vec![Event::Return { tag, at }])?.pop() {
            Some(Applied::Returned(v)) => Ok(v),
            other => unreachable!("{other:?}"),
        }
    }

    /// Handles one framed message from a reader node.
    pub fn ingest(&self, bytes: &[u8]) -> IngestOutcome {
        match self.ingest_inner(bytes) {
            Ok((id, appended)) => IngestOutcome {
                reply: Reply::Ok(id),
                appended,
            },
            Err(e) => IngestOutcome {
                reply: Reply::Err {
                    status: e.status(),
                    message: e.to_string(),
                },
                appended: 0,
            },
        }
    }

    fn ingest_inner(&self, bytes: &[u8]) -> Result<(Option<String>, u64), ServiceError> {
        let frame = unframe(bytes).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        match frame.kind {
            FrameKind::Heartbeat => {
                let hb = decode_heartbeat(&frame.payload).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
                self.commit(vec![Event::Heartbeat { node: hb.node, at: hb.at }])?;
                Ok((None, 1))
            }
            FrameKind::Roster => Err(ServiceError::BadRequest(
                "roster frames are only accepted inside reports".into(),
            )),
            FrameKind::Report => {
                let payload =
                    decode_report_payload(&frame.payload).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
                let id = batch_id(&frame.payload);
                let applied = self.commit_with(|engine| {
                    if engine.has_batch(&id) {
                        return Ok(Vec::new());
                    }
                    if let Some(first) = payload.report.records.first() {
                        if engine.checkpoint(&first.node).is_none() {
                            return Err(ServiceError::RejectedUnknownCheckpoint(format!(
                                "checkpoint {} is not registered",
                                first.node
                            )));
                        }
                    }
                    let mut events: Vec<Event> = payload
                        .report
                        .records
                        .iter()
                        .zip(&payload.tags.entries)
                        .map(|(r, (tag, _))| Event::Read {
                            tag: *tag,
                            node: r.node.clone(),
                            at: r.at,
                        })
                        .collect();
                    events.push(Event::Batch {
                        id: id.clone(),
                        count: payload.report.records.len() as u32,
                    });
                    Ok(events)
                })?;
                Ok((Some(id), applied.len() as u64))
            }
        }
    }

    // -----------------------------------------------------------------------
    // Queries

    pub fn occupancy(&self, at: Option<Timestamp>) -> Result<OccupancySnapshot, ServiceError> {
        Ok(self.snapshot().occupancy(at)?)
    }

    pub fn last_position(&self, tag: &TagId) -> Result<LastPosition, ServiceError> {
        let engine = self.snapshot();
        let rec = engine
            .visitors()
            .filter(|r| r.visitor.tag == *tag)
            .last()
            .ok_or_else(|| ServiceError::NotFound(format!("tag {tag} was never issued")))?;
        let track = engine.track(tag).expect("visitor exists");
        Ok(LastPosition {
            at: engine.latest().unwrap_or(track.last_seen),
            visitor: rec.visitor.clone(),
            returned_at: rec.returned.map(|(t, _)| t),
            room: track.last_room,
            seen_at: track.last_seen,
            history: track.history,
        })
    }

    pub fn flow(&self, room: &RoomId, from: Timestamp, to: Timestamp) -> Result<IntervalFlow, ServiceError> {
        Ok(self.snapshot().interval_flow(room, from, to)?)
    }

    pub fn checkpoints(&self) -> CheckpointList {
        let engine = self.snapshot();
        let at = engine.latest().unwrap_or_else(Timestamp::now);
        let stale = engine.stale_checkpoints(at);
        CheckpointList {
            at,
            rows: engine
                .checkpoints()
                .into_iter()
                .map(|c| {
                    let s = stale.contains(&c.node);
                    (c, s)
                })
                .collect(),
        }
    }

    pub fn evac_report(&self, at: Option<Timestamp>) -> Result<EvacReport, ServiceError> {
        let snap = self.occupancy(at)?;
        Ok(evac_report(&self.graph, &snap)?)
    }

    pub fn evac_alert(
        &self,
        role: Role,
        channels: &[Channel],
        recipients: &[String],
        now: Timestamp,
    ) -> Result<(EvacReport, AlertOutcome), ServiceError> {
        require_manager(role)?;
        // describe the building as it was at `now`; nothing changes after the latest record
        let engine = self.snapshot();
        let at = match (engine.epoch(), engine.latest()) {
            (Some(first), Some(last)) if first <= now && now < last => Some(now),
            _ => None,
        };
        let report = self.evac_report(at)?;
        let mut outbox = self.outbox.lock().unwrap_or_else(|p| p.into_inner());
        let outcome = outbox.trigger_alert(&report, channels, recipients, now)?;
        Ok((report, outcome))
    }

    pub fn outbox_len(&self) -> usize {
        self.outbox.lock().unwrap_or_else(|p| p.into_inner()).len()
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        self.wait_for_snapshot();
    }
}

fn require_manager(role: Role) -> Result<(), ServiceError> {
    match role {
        Role::Manager => Ok(()),
        Role::Viewer => Err(ServiceError::Unauthorized),
    }
}

fn store_error(e: StoreError) -> ServiceError {
    ServiceError::Unavailable(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LastPosition {
    pub at: Timestamp,
    pub visitor: Visitor,
    pub returned_at: Option<Timestamp>,
    pub room: RoomId,
    pub seen_at: Timestamp,
    pub history: Vec<(RoomId, Timestamp)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointList {
    pub at: Timestamp,
    pub rows: Vec<(Checkpoint, bool)>,
}

// ---------------------------------------------------------------------------
// Response bodies: `key: value` lines, then zero or more tables, each
// preceded by a blank line and starting with a tab-separated header row.

fn opt_ts(t: Option<Timestamp>) -> String {
    t.map_or_else(|| "-".to_string(), |t| t.to_string())
}

pub fn render_occupancy(s: &OccupancySnapshot) -> String {
    let mut out = format!("at: {}\ntotal: {}\n", s.at, s.total);
    let stale: Vec<String> = s.stale_checkpoints.iter().map(|n| n.to_string()).collect();
    let _ = writeln!(out, "stale_checkpoints: {}", if stale.is_empty() { "-".into() } else { stale.join(",") });
    out.push_str("\nroom\toccupancy\n");
    for (room, n) in &s.per_room {
        let _ = writeln!(out, "{room}\t{n}");
    }
    out.push_str("\ndemographic\tcount\n");
    for (d, n) in &s.by_demographic {
        let _ = writeln!(out, "{d}\t{n}");
    }
    out
}

pub fn render_last_position(p: &LastPosition) -> String {
    let status = match p.visitor.status {
        VisitorStatus::Active => "active",
        VisitorStatus::Returned => "returned",
    };
    let mut out = format!(
        "at: {}\ntag: {}\nname: {}\ndemographic: {}\nstatus: {status}\nissued_at: {}\nreturned_at: {}\nroom: {}\nseen_at: {}\n",
        p.at,
        p.visitor.tag,
        p.visitor.name,
        p.visitor.demographic,
        p.visitor.issued_at,
        opt_ts(p.returned_at),
        p.room,
        p.seen_at,
    );
    out.push_str("\nroom\tseen_at\n");
    for (room, t) in &p.history {
        let _ = writeln!(out, "{room}\t{t}");
    }
    out
}

pub fn render_flow(at: Timestamp, f: &IntervalFlow) -> String {
    format!(
        "at: {at}\nroom: {}\nfrom: {}\nto: {}\nentered: {}\nleft: {}\n",
        f.room, f.from, f.to, f.entered, f.left
    )
}

pub fn render_checkpoints(list: &CheckpointList) -> String {
    let mut out = format!("at: {}\ncount: {}\n\nnode\tname\troom\tlast_report\tstale\n", list.at, list.rows.len());
    for (c, stale) in &list.rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            c.node,
            c.name,
            c.location,
            opt_ts(c.last_report),
            if *stale { "yes" } else { "no" }
        );
    }
    out
}

pub fn render_checkpoint(c: &Checkpoint) -> String {
    format!(
        "node: {}\nname: {}\nroom: {}\nlast_report: {}\n",
        c.node,
        c.name,
        c.location,
        opt_ts(c.last_report)
    )
}

pub fn render_visitor(v: &Visitor) -> String {
    let status = match v.status {
        VisitorStatus::Active => "active",
        VisitorStatus::Returned => "returned",
    };
    format!(
        "tag: {}\nname: {}\ndemographic: {}\nissued_at: {}\nstatus: {status}\n",
        v.tag, v.name, v.demographic, v.issued_at
    )
}

pub fn render_alert(report: &EvacReport, outcome: &AlertOutcome, outbox_len: usize) -> String {
    let head = match outcome {
        AlertOutcome::Queued(n) => format!("alert: queued\nnotifications: {}\n", n.len()),
        AlertOutcome::Coalesced { previous } => format!("alert: coalesced\nprevious: {previous}\nnotifications: 0\n"),
    };
    format!("{head}outbox_records: {outbox_len}\n{}", report.render())
}

/// Offline audit of a data directory: rebuilds state from the log alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub last_seq: u64,
    pub torn_bytes_truncated: u64,
    pub visitors: usize,
    pub active: usize,
    pub checkpoints: usize,
    pub diagnostics: crate::engine::Diagnostics,
    /// Whether the newest snapshot (if any) agrees with the replay.
    pub snapshot_matches: Option<bool>,
}

pub fn audit(graph: Arc<BuildingGraph>, cfg: EngineConfig, data_dir: &Path) -> Result<AuditReport, ServiceError> {
    let (store, report) = EventStore::open(data_dir, StoreConfig::default()).map_err(store_error)?;
    let engine = Engine::replay(graph.clone(), cfg, store.read_from(1).map_err(store_error)?.map(|r| r.map_err(EngineError::from)))?;
    let snapshot_matches = match crate::store::read_latest_snapshot(data_dir) {
        Ok(Some((seq, body))) => {
            let partial = Engine::replay(
                graph,
                cfg,
                store
                    .read_from(1)
                    .map_err(store_error)?
                    .take(seq as usize)
                    .map(|r| r.map_err(EngineError::from)),
            )?;
            Some(partial.encode_state() == body)
        }
        Ok(None) => None,
        Err(_) => Some(false),
    };
    Ok(AuditReport {
        last_seq: engine.last_seq(),
        torn_bytes_truncated: report.torn_bytes_truncated,
        visitors: engine.visitors().count(),
        active: engine.active_count(),
        checkpoints: engine.checkpoints().len(),
        diagnostics: engine.diagnostics(),
        snapshot_matches,
    })
}

pub fn render_audit(a: &AuditReport) -> String {
    let d = a.diagnostics;
    format!(
        "last_seq: {}\ntorn_bytes_truncated: {}\nvisitors: {}\nactive: {}\ncheckpoints: {}\nreads: {}\nduplicates: {}\nquarantined_unknown_checkpoint: {}\nquarantined_unknown_tag: {}\nsnapshot_matches: {}\n",
        a.last_seq,
        a.torn_bytes_truncated,
        a.visitors,
        a.active,
        a.checkpoints,
        d.reads,
        d.duplicates,
        d.quarantined_unknown_checkpoint,
        d.quarantined_unknown_tag,
        match a.snapshot_matches {
            None => "no snapshot",
            Some(true) => "yes",
            Some(false) => "NO",
        }
    )
}

/// In-process link to a service: the registration desk and the reader
/// nodes' transport in one.
pub struct LocalLink<'a> {
    pub service: &'a Service,
    pub role: Role,
}

impl crate::node::Transport for LocalLink<'_> {
    fn send(&mut self, frame: &[u8]) -> Result<Reply, crate::node::TransportError> {
        Ok(self.service.ingest(frame).reply)
    }
}

impl crate::sim::Desk for LocalLink<'_> {
    fn register(&mut self, v: &crate::sim::VisitorTruth) -> Result<(), String> {
        self.service
            .register_visitor(self.role, v.tag, v.name.clone(), v.demographic, v.arrive())
            .map(|_| ())
            .map_err(|e| e.to_string())
    }

    fn return_tag(&mut self, tag: TagId, at: Timestamp) -> Result<(), String> {
        self.service.return_tag(self.role, tag, at).map(|_| ()).map_err(|e| e.to_string())
    }

    fn transport(&mut self) -> &mut dyn crate::node::Transport {
        self
    }
}

/// Registers every checkpoint of the floor plan, skipping ones already known.
pub fn register_plan_checkpoints(svc: &Service, role: Role, at: Timestamp) -> Result<usize, ServiceError> {
    let mut added = 0;
    for (node, cp) in svc.graph().checkpoints() {
        match svc.register_checkpoint(role, node.clone(), cp.name.clone(), cp.room.clone(), at) {
            Ok(_) => added += 1,
            Err(ServiceError::Conflict(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(added)
}

#[cfg(test)]
mod tests;

// SPDX-License-Identifier: Apache-2.0

//! Event-sourced tracking state.
//!
//! The engine is a deterministic fold over [`LogRecord`]s. Everything it
//! knows (visitors, positions, occupancy, flows, checkpoint freshness) is a
//! function of the records applied so far, so replaying a log reproduces the
//! live state exactly.
//!
//! Positions are ordered by `(observed_at, seq)`: a read that arrives late
//! from a slow node is slotted into the visitor's history at its observation
//! time, and reads stamped in the same second are ordered by ingest seq.

mod dedup;
mod record;

pub use dedup::{dedupe, Deduper, DEFAULT_DEDUP_WINDOW_S};
pub use record::{Event, LogRecord, RecordError};

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::BuildingGraph;
use crate::model::{
    Checkpoint, Demographic, Name, NodeId, RoomId, TagId, Timestamp, Visitor, VisitorStatus,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("tag {0} is already active")]
    TagAlreadyActive(TagId),
    #[error("tag {0} is not active")]
    TagNotActive(TagId),
    #[error("unknown checkpoint {0}")]
    UnknownCheckpoint(NodeId),
    #[error("checkpoint {0} is already registered")]
    DuplicateNode(NodeId),
    #[error("unknown room {0}")]
    UnknownRoom(RoomId),
    #[error("batch {0} already recorded")]
    DuplicateBatch(String),
    #[error("query time precedes the first event")]
    QueryBeforeEpoch,
    #[error("interval start is after its end")]
    InvalidInterval,
    #[error("expected seq {expected}, got {got}")]
    SeqGap { expected: u64, got: u64 },
    #[error("corrupt log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
    #[error("corrupt state: {0}")]
    CorruptState(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    pub dedup_window_s: i64,
    /// Checkpoints silent for more than three periods are reported stale.
    pub heartbeat_period_s: i64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            dedup_window_s: DEFAULT_DEDUP_WINDOW_S,
            heartbeat_period_s: crate::node::DEFAULT_HEARTBEAT_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub room: RoomId,
    pub at: Timestamp,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitorRecord {
    pub visitor: Visitor,
    pub returned: Option<(Timestamp, u64)>,
    /// Sorted by `(at, seq)`; the first step is the registration.
    pub history: Vec<Step>,
}

impl VisitorRecord {
    fn key_before(&self, at: Timestamp, seq: u64) -> usize {
        self.history.partition_point(|s| (s.at, s.seq) < (at, seq))
    }

    /// Steps that happened while the tag was issued.
    fn live_history(&self) -> &[Step] {
        match self.returned {
            Some((at, seq)) => &self.history[..self.key_before(at, seq)],
            None => &self.history,
        }
    }

    fn active_at(&self, at: Timestamp) -> bool {
        self.visitor.issued_at <= at && self.returned.is_none_or(|(r, _)| r > at)
    }

    fn step_at(&self, at: Timestamp) -> Option<&Step> {
        let n = self.history.partition_point(|s| s.at <= at);
        n.checked_sub(1).map(|i| &self.history[i])
    }

    /// Room entries (+1) and exits (-1) implied by this record.
    fn transitions(&self) -> Vec<(RoomId, Transition)> {
        let live = self.live_history();
        let mut out = Vec::new();
        let mut prev: Option<&Step> = None;
        for s in live {
            match prev {
                None => out.push((s.room.clone(), Transition::new(s.at, s.seq, 1))),
                Some(p) if p.room != s.room => {
                    out.push((p.room.clone(), Transition::new(s.at, s.seq, -1)));
                    out.push((s.room.clone(), Transition::new(s.at, s.seq, 1)));
                }
                Some(_) => {}
            }
            prev = Some(s);
        }
        if let (Some((at, seq)), Some(last)) = (self.returned, live.last()) {
            out.push((last.room.clone(), Transition::new(at, seq, -1)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Transition {
    at: Timestamp,
    seq: u64,
    /// +1 entry, -1 exit
    delta: i8,
    visitor: usize,
}

impl Transition {
    fn new(at: Timestamp, seq: u64, delta: i8) -> Self {
        Self {
            at,
            seq,
            delta,
            visitor: usize::MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointState {
    pub name: Name,
    pub location: RoomId,
    pub registered_at: Timestamp,
    /// Latest heartbeat or read time.
    pub last_report: Option<Timestamp>,
    /// Sorted, distinct times of registration, heartbeats and reads.
    activity: Vec<Timestamp>,
}

impl CheckpointState {
    fn touch(&mut self, at: Timestamp) {
        self.last_report = Some(self.last_report.map_or(at, |t| t.max(at)));
        if let Err(pos) = self.activity.binary_search(&at) {
            self.activity.insert(pos, at);
        }
    }

    fn last_activity(&self, at: Timestamp) -> Option<Timestamp> {
        let n = self.activity.partition_point(|t| *t <= at);
        n.checked_sub(1).map(|i| self.activity[i])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub reads: u64,
    pub duplicates: u64,
    pub quarantined_unknown_checkpoint: u64,
    pub quarantined_unknown_tag: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quarantine {
    UnknownCheckpoint,
    UnknownOrInactiveTag,
}

/// What applying one record did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Applied {
    Registered(Visitor),
    Returned(Visitor),
    Moved { tag: TagId, from: RoomId, to: RoomId },
    Stayed { tag: TagId, room: RoomId },
    Duplicate,
    Quarantined(Quarantine),
    Heartbeat,
    CheckpointRegistered(Checkpoint),
    BatchRecorded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancySnapshot {
    pub at: Timestamp,
    pub per_room: BTreeMap<RoomId, u64>,
    pub total: u64,
    pub by_demographic: BTreeMap<Demographic, u64>,
    pub stale_checkpoints: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackRecord {
    pub tag: TagId,
    pub last_room: RoomId,
    pub last_seen: Timestamp,
    pub history: Vec<(RoomId, Timestamp)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalFlow {
    pub room: RoomId,
    pub from: Timestamp,
    pub to: Timestamp,
    pub entered: u64,
    pub left: u64,
}

/// Serializable part of the engine; everything else is derived from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct State {
    last_seq: u64,
    epoch: Option<Timestamp>,
    latest: Option<Timestamp>,
    visitors: Vec<VisitorRecord>,
    active: BTreeMap<TagId, usize>,
    checkpoints: BTreeMap<NodeId, CheckpointState>,
    dedup: DedupState,
    batches: BTreeSet<String>,
    diagnostics: Diagnostics,
}

/// Dedup memory in a JSON-friendly shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct DedupState {
    window_s: i64,
    seen: Vec<(TagId, NodeId, Vec<i64>)>,
}

#[derive(Debug, Clone)]
pub struct Engine {
    graph: Arc<BuildingGraph>,
    cfg: EngineConfig,
    state: State,
    deduper: Deduper,
    /// Per-room entries and exits, sorted.
    flows: BTreeMap<RoomId, Vec<Transition>>,
    visitor_transitions: Vec<Vec<(RoomId, Transition)>>,
}

impl Engine {
    pub fn new(graph: Arc<BuildingGraph>, cfg: EngineConfig) -> Self {
        let flows = graph.rooms().map(|(r, _)| (r.clone(), Vec::new())).collect();
        Self {
            graph,
            cfg,
            state: State {
                last_seq: 0,
                epoch: None,
                latest: None,
                visitors: Vec::new(),
                active: BTreeMap::new(),
                checkpoints: BTreeMap::new(),
                dedup: DedupState {
                    window_s: cfg.dedup_window_s,
                    seen: Vec::new(),
                },
                batches: BTreeSet::new(),
                diagnostics: Diagnostics::default(),
            },
            deduper: Deduper::new(cfg.dedup_window_s),
            flows,
            visitor_transitions: Vec::new(),
        }
    }

    pub fn graph(&self) -> &Arc<BuildingGraph> {
        &self.graph
    }

    pub fn config(&self) -> EngineConfig {
        self.cfg
    }

    pub fn last_seq(&self) -> u64 {
        self.state.last_seq
    }

    pub fn next_seq(&self) -> u64 {
        self.state.last_seq + 1
    }

    /// Time of the latest event applied, if any.
    pub fn latest(&self) -> Option<Timestamp> {
        self.state.latest
    }

    pub fn epoch(&self) -> Option<Timestamp> {
        self.state.epoch
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.state.diagnostics
    }

    pub fn has_batch(&self, id: &str) -> bool {
        self.state.batches.contains(id)
    }

    pub fn active_count(&self) -> usize {
        self.state.active.len()
    }

    pub fn active_visitor(&self, tag: &TagId) -> Option<&Visitor> {
        self.state
            .active
            .get(tag)
            .map(|&i| &self.state.visitors[i].visitor)
    }

    pub fn visitors(&self) -> impl Iterator<Item = &VisitorRecord> {
        self.state.visitors.iter()
    }

    pub fn checkpoint(&self, node: &NodeId) -> Option<Checkpoint> {
        self.state.checkpoints.get(node).map(|c| Checkpoint {
            node: node.clone(),
            name: c.name.clone(),
            location: c.location.clone(),
            last_report: c.last_report,
        })
    }

    pub fn checkpoints(&self) -> Vec<Checkpoint> {
        self.state
            .checkpoints
            .keys()
            .filter_map(|n| self.checkpoint(n))
            .collect()
    }

    /// Checks whether `event` would be accepted, without applying it.
    /// Reads are always accepted (problems quarantine them instead).
    pub fn validate(&self, event: &Event) -> Result<(), EngineError> {
        match event {
            Event::Register { tag, .. } => {
                if self.state.active.contains_key(tag) {
                    return Err(EngineError::TagAlreadyActive(*tag));
                }
            }
            Event::Return { tag, .. } => {
                if !self.state.active.contains_key(tag) {
                    return Err(EngineError::TagNotActive(*tag));
                }
            }
            Event::Read { .. } => {}
            Event::Heartbeat { node, .. } => {
                if !self.state.checkpoints.contains_key(node) {
                    return Err(EngineError::UnknownCheckpoint(node.clone()));
                }
            }
            Event::Checkpoint { node, room, .. } => {
                if !self.graph.contains(room) {
                    return Err(EngineError::UnknownRoom(room.clone()));
                }
                if self.state.checkpoints.contains_key(node) {
                    return Err(EngineError::DuplicateNode(node.clone()));
                }
            }
            Event::Batch { id, .. } => {
                if self.state.batches.contains(id) {
                    return Err(EngineError::DuplicateBatch(id.clone()));
                }
            }
        }
        Ok(())
    }

    /// Applies one record. On error the engine is unchanged.
    pub fn apply(&mut self, rec: &LogRecord) -> Result<Applied, EngineError> {
        if rec.seq != self.state.last_seq + 1 {
            return Err(EngineError::SeqGap {
                expected: self.state.last_seq + 1,
                got: rec.seq,
            });
        }
        self.validate(&rec.event)?;
        self.state.last_seq = rec.seq;
        if let Some(at) = rec.event.at() {
            self.state.epoch = Some(self.state.epoch.map_or(at, |e| e.min(at)));
            self.state.latest = Some(self.state.latest.map_or(at, |l| l.max(at)));
        }
        let seq = rec.seq;
        let applied = match &rec.event {
            Event::Register {
                tag,
                demographic,
                at,
                name,
            } => {
                let visitor = Visitor {
                    tag: *tag,
                    name: name.clone(),
                    demographic: *demographic,
                    issued_at: *at,
                    status: VisitorStatus::Active,
                };
                let idx = self.state.visitors.len();
                self.state.visitors.push(VisitorRecord {
                    visitor: visitor.clone(),
                    returned: None,
                    history: vec![Step {
                        room: self.graph.entrance().clone(),
                        at: *at,
                        seq,
                    }],
                });
                self.visitor_transitions.push(Vec::new());
                self.state.active.insert(*tag, idx);
                self.reindex(idx);
                Applied::Registered(visitor)
            }
            Event::Return { tag, at } => {
                let idx = self.state.active.remove(tag).expect("validated");
                let rec = &mut self.state.visitors[idx];
                rec.returned = Some((*at, seq));
                rec.visitor.status = VisitorStatus::Returned;
                let v = rec.visitor.clone();
                self.reindex(idx);
                Applied::Returned(v)
            }
            Event::Read { tag, node, at } => self.apply_read(*tag, node, *at, seq),
            Event::Heartbeat { node, at } => {
                self.state
                    .checkpoints
                    .get_mut(node)
                    .expect("validated")
                    .touch(*at);
                Applied::Heartbeat
            }
            Event::Checkpoint {
                node,
                room,
                at,
                name,
            } => {
                self.state.checkpoints.insert(
                    node.clone(),
                    CheckpointState {
                        name: name.clone(),
                        location: room.clone(),
                        registered_at: *at,
                        last_report: None,
                        activity: vec![*at],
                    },
                );
                Applied::CheckpointRegistered(self.checkpoint(node).expect("just inserted"))
            }
            Event::Batch { id, .. } => {
                self.state.batches.insert(id.clone());
                Applied::BatchRecorded
            }
        };
        Ok(applied)
    }

    fn apply_read(&mut self, tag: TagId, node: &NodeId, at: Timestamp, seq: u64) -> Applied {
        let d = &mut self.state.diagnostics;
        d.reads += 1;
        let Some(cp) = self.state.checkpoints.get_mut(node) else {
            d.quarantined_unknown_checkpoint += 1;
            return Applied::Quarantined(Quarantine::UnknownCheckpoint);
        };
        cp.touch(at);
        let room = cp.location.clone();
        if !self.deduper.admit(&tag, node, at) {
            d.duplicates += 1;
            return Applied::Duplicate;
        }
        let idx = match self.state.active.get(&tag) {
            Some(&i) if self.state.visitors[i].visitor.issued_at <= at => i,
            _ => {
                d.quarantined_unknown_tag += 1;
                return Applied::Quarantined(Quarantine::UnknownOrInactiveTag);
            }
        };
        let rec = &mut self.state.visitors[idx];
        let pos = rec.key_before(at, seq);
        let from = rec.history[pos - 1].room.clone();
        rec.history.insert(
            pos,
            Step {
                room: room.clone(),
                at,
                seq,
            },
        );
        self.reindex(idx);
        if from == room {
            Applied::Stayed { tag, room }
        } else {
            Applied::Moved { tag, from, to: room }
        }
    }

    /// Replaces visitor `idx`'s contribution to the per-room flow index.
    fn reindex(&mut self, idx: usize) {
        for (room, t) in std::mem::take(&mut self.visitor_transitions[idx]) {
            let list = self.flows.get_mut(&room).expect("rooms are fixed");
            if let Ok(pos) = list.binary_search(&t) {
                list.remove(pos);
            }
        }
        let fresh: Vec<(RoomId, Transition)> = self.state.visitors[idx]
            .transitions()
            .into_iter()
            .map(|(r, mut t)| {
                t.visitor = idx;
                (r, t)
            })
            .collect();
        for (room, t) in &fresh {
            let list = self.flows.get_mut(room).expect("rooms are fixed");
            let pos = list.binary_search(t).unwrap_or_else(|p| p);
            list.insert(pos, *t);
        }
        self.visitor_transitions[idx] = fresh;
    }

    // -----------------------------------------------------------------------
    // Convenience commands for in-memory use (the gateway goes through the
    // event store instead).

    pub fn register_visitor(
        &mut self,
        tag: TagId,
        name: Name,
        demographic: Demographic,
        at: Timestamp,
    ) -> Result<Visitor, EngineError> {
        match self.apply_next(Event::Register {
            tag,
            demographic,
            at,
            name,
        })? {
            Applied::Registered(v) => Ok(v),
            other => unreachable!("{other:?}"),
        }
    }

    pub fn return_tag(&mut self, tag: TagId, at: Timestamp) -> Result<Visitor, EngineError> {
        match self.apply_next(Event::Return { tag, at })? {
            Applied::Returned(v) => Ok(v),
            other => unreachable!("{other:?}"),
        }
    }

    pub fn register_checkpoint(
        &mut self,
        node: NodeId,
        name: Name,
        room: RoomId,
        at: Timestamp,
    ) -> Result<Checkpoint, EngineError> {
        match self.apply_next(Event::Checkpoint {
            node,
            room,
            at,
            name,
        })? {
            Applied::CheckpointRegistered(c) => Ok(c),
            other => unreachable!("{other:?}"),
        }
    }

    pub fn ingest_read(&mut self, tag: TagId, node: NodeId, at: Timestamp) -> Applied {
        self.apply_next(Event::Read { tag, node, at })
            .expect("reads are always accepted")
    }

    pub fn apply_next(&mut self, event: Event) -> Result<Applied, EngineError> {
        let rec = LogRecord {
            seq: self.next_seq(),
            event,
        };
        self.apply(&rec)
    }

    // -----------------------------------------------------------------------
    // Queries

    fn check_epoch(&self, at: Timestamp) -> Result<(), EngineError> {
        match self.state.epoch {
            Some(e) if at < e => Err(EngineError::QueryBeforeEpoch),
            _ => Ok(()),
        }
    }

    /// Occupancy consistent with every event stamped at or before `at`
    /// (`None`: everything applied so far).
    pub fn occupancy(&self, at: Option<Timestamp>) -> Result<OccupancySnapshot, EngineError> {
        let at = match at.or(self.state.latest) {
            Some(t) => t,
            None => return Ok(self.empty_snapshot(Timestamp::now())),
        };
        self.check_epoch(at)?;
        let mut snap = self.empty_snapshot(at);
        for rec in &self.state.visitors {
            if !rec.active_at(at) {
                continue;
            }
            let step = rec.step_at(at).expect("registration precedes any active time");
            *snap.per_room.get_mut(&step.room).expect("rooms are fixed") += 1;
            *snap.by_demographic.entry(rec.visitor.demographic).or_default() += 1;
            snap.total += 1;
        }
        snap.stale_checkpoints = self.stale_checkpoints(at);
        Ok(snap)
    }

    fn empty_snapshot(&self, at: Timestamp) -> OccupancySnapshot {
        OccupancySnapshot {
            at,
            per_room: self.graph.rooms().map(|(r, _)| (r.clone(), 0)).collect(),
            total: 0,
            by_demographic: Demographic::ALL.iter().map(|d| (*d, 0)).collect(),
            stale_checkpoints: BTreeSet::new(),
        }
    }

    /// Checkpoints registered by `at` with no activity in the last three
    /// heartbeat periods.
    pub fn stale_checkpoints(&self, at: Timestamp) -> BTreeSet<NodeId> {
        let limit = 3 * self.cfg.heartbeat_period_s;
        self.state
            .checkpoints
            .iter()
            .filter(|(_, c)| c.registered_at <= at)
            .filter(|(_, c)| {
                c.last_activity(at)
                    .is_none_or(|last| at.seconds_since(last) > limit)
            })
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// Room and time of the latest accepted read (or the registration) of
    /// the most recent issuance of `tag`.
    pub fn last_known(&self, tag: &TagId) -> Option<(RoomId, Timestamp)> {
        let rec = self.latest_record(tag)?;
        rec.history.last().map(|s| (s.room.clone(), s.at))
    }

    /// Last known position as it stood at time `at`.
    pub fn last_known_at(&self, tag: &TagId, at: Timestamp) -> Option<(RoomId, Timestamp)> {
        let rec = self
            .state
            .visitors
            .iter()
            .rev()
            .find(|r| r.visitor.tag == *tag && r.visitor.issued_at <= at)?;
        rec.step_at(at).map(|s| (s.room.clone(), s.at))
    }

    fn latest_record(&self, tag: &TagId) -> Option<&VisitorRecord> {
        self.state.visitors.iter().rev().find(|r| r.visitor.tag == *tag)
    }

    pub fn track(&self, tag: &TagId) -> Option<TrackRecord> {
        let rec = self.latest_record(tag)?;
        let last = rec.history.last()?;
        Some(TrackRecord {
            tag: *tag,
            last_room: last.room.clone(),
            last_seen: last.at,
            history: rec.history.iter().map(|s| (s.room.clone(), s.at)).collect(),
        })
    }

    /// Entries into and exits from `room` stamped in `(from, to]`.
    pub fn interval_flow(
        &self,
        room: &RoomId,
        from: Timestamp,
        to: Timestamp,
    ) -> Result<IntervalFlow, EngineError> {
        if from > to {
            return Err(EngineError::InvalidInterval);
        }
        let list = self
            .flows
            .get(room)
            .ok_or_else(|| EngineError::UnknownRoom(room.clone()))?;
        let lo = list.partition_point(|t| t.at <= from);
        let hi = list.partition_point(|t| t.at <= to);
        let (mut entered, mut left) = (0, 0);
        for t in &list[lo..hi] {
            if t.delta > 0 {
                entered += 1;
            } else {
                left += 1;
            }
        }
        Ok(IntervalFlow {
            room: room.clone(),
            from,
            to,
            entered,
            left,
        })
    }

    /// Number of room changes across all visitors (registrations and
    /// returns excluded).
    pub fn observed_transitions(&self) -> u64 {
        self.state
            .visitors
            .iter()
            .map(|r| {
                r.live_history()
                    .windows(2)
                    .filter(|w| w[0].room != w[1].room)
                    .count() as u64
            })
            .sum()
    }

    // -----------------------------------------------------------------------
    // Persistence

    /// Canonical serialization of the full state.
    pub fn encode_state(&self) -> String {
        let mut state = self.state.clone();
        state.dedup = DedupState {
            window_s: self.deduper.window_s(),
            seen: self.deduper_entries(),
        };
        serde_json::to_string(&state).expect("state is always serializable")
    }

    fn deduper_entries(&self) -> Vec<(TagId, NodeId, Vec<i64>)> {
        self.deduper.entries()
    }

    pub fn decode_state(
        graph: Arc<BuildingGraph>,
        cfg: EngineConfig,
        text: &str,
    ) -> Result<Engine, EngineError> {
        let state: State =
            serde_json::from_str(text).map_err(|e| EngineError::CorruptState(e.to_string()))?;
        if state.dedup.window_s != cfg.dedup_window_s {
            return Err(EngineError::CorruptState(
                "snapshot was taken with a different dedup window".into(),
            ));
        }
        let corrupt = |m: &str| Err(EngineError::CorruptState(m.into()));
        for rec in &state.visitors {
            let ok = rec.history.first().is_some_and(|s| s.at == rec.visitor.issued_at)
                && rec.history.iter().all(|s| graph.contains(&s.room) && s.seq <= state.last_seq)
                && rec.history.windows(2).all(|w| (w[0].at, w[0].seq) < (w[1].at, w[1].seq));
            if !ok {
                return corrupt("visitor history does not fit the floor plan");
            }
            if rec.returned.is_some_and(|(_, seq)| seq <= rec.history[0].seq || seq > state.last_seq) {
                return corrupt("tag return is out of sequence");
            }
        }
        let open = state.visitors.iter().filter(|r| r.returned.is_none()).count();
        let active_ok = open == state.active.len()
            && state.active.iter().all(|(tag, &i)| {
                state
                    .visitors
                    .get(i)
                    .is_some_and(|r| r.visitor.tag == *tag && r.returned.is_none())
            });
        if !active_ok {
            return corrupt("active tags do not match the visitor records");
        }
        if !state.checkpoints.values().all(|c| graph.contains(&c.location)) {
            return corrupt("checkpoint placed in a room not on the floor plan");
        }
        let mut engine = Engine::new(graph, cfg);
        engine.deduper = Deduper::from_entries(cfg.dedup_window_s, &state.dedup.seen);
        engine.visitor_transitions = vec![Vec::new(); state.visitors.len()];
        engine.state = state;
        engine.state.dedup.seen.clear();
        for i in 0..engine.state.visitors.len() {
            engine.reindex(i);
        }
        Ok(engine)
    }

    /// Rebuilds state from a log stream.
    pub fn replay<I>(graph: Arc<BuildingGraph>, cfg: EngineConfig, log: I) -> Result<Engine, EngineError>
    where
        I: IntoIterator<Item = Result<LogRecord, EngineError>>,
    {
        let mut engine = Engine::new(graph, cfg);
        engine.replay_tail(log)?;
        Ok(engine)
    }

    /// Applies further records on top of the current state.
    pub fn replay_tail<I>(&mut self, log: I) -> Result<(), EngineError>
    where
        I: IntoIterator<Item = Result<LogRecord, EngineError>>,
    {
        for rec in log {
            let rec = rec?;
            let seq = rec.seq;
            self.apply(&rec).map_err(|e| match e {
                EngineError::CorruptLog { .. } => e,
                other => EngineError::CorruptLog {
                    seq,
                    reason: other.to_string(),
                },
            })?;
        }
        Ok(())
    }
}

impl Deduper {
    fn entries(&self) -> Vec<(TagId, NodeId, Vec<i64>)> {
        self.seen_groups()
            .map(|((t, n), s)| (*t, n.clone(), s.iter().copied().collect()))
            .collect()
    }

    fn from_entries(window_s: i64, entries: &[(TagId, NodeId, Vec<i64>)]) -> Deduper {
        let mut d = Deduper::new(window_s);
        for (t, n, times) in entries {
            d.restore_group(*t, n.clone(), times.iter().copied());
        }
        d
    }
}

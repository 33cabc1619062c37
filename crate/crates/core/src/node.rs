// SPDX-License-Identifier: Apache-2.0

//! Reader node agent.
//!
//! A node turns tag passages into observations under a probabilistic
//! detection model, batches them, and reports each batch to the gateway
//! until it is acknowledged. The agent is sans-io: time is passed in through
//! [`ReaderNode::tick`] and frames leave through a [`Transport`], so the same
//! code runs under the simulator's clock and in the live CLI.

use std::collections::VecDeque;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{parse_timestamp, validate_tag_id, Name, NodeId, RoomId, TagId, Timestamp};
use crate::wire::{
    batch_id, encode_heartbeat, encode_report_payload, frame_message, CheckpointReport, FrameKind,
    Heartbeat, Reply, ReportPayload, ReportRecord, TagRoster,
};

pub const DEFAULT_WINDOW_S: i64 = 5;
pub const DEFAULT_HEARTBEAT_S: i64 = 10;
pub const BACKOFF_CAP_S: i64 = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelParamError {
    #[error("p_detect must lie in [0, 1], got {0}")]
    Probability(f64),
    #[error("read range must be positive, got {0}")]
    Range(f64),
    #[error("duplicate spacing must be at least one second")]
    Spacing,
}

/// Extra reads produced by a single passage: uniform in `0..=max_extra`,
/// `spacing_s` apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuplicateProfile {
    pub max_extra: u32,
    pub spacing_s: i64,
}

impl DuplicateProfile {
    pub const NONE: DuplicateProfile = DuplicateProfile {
        max_extra: 0,
        spacing_s: 1,
    };
}

impl Default for DuplicateProfile {
    fn default() -> Self {
        Self {
            max_extra: 3,
            spacing_s: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionModel {
    /// Passive HF tags are readable up to this distance.
    pub read_range_m: f64,
    /// Carrier frequency; recorded, not simulated.
    pub frequency_mhz: f64,
    pub p_detect: f64,
    pub duplicates: DuplicateProfile,
}

impl Default for DetectionModel {
    fn default() -> Self {
        Self {
            read_range_m: 2.0,
            frequency_mhz: 13.56,
            p_detect: 0.98,
            duplicates: DuplicateProfile::default(),
        }
    }
}

impl DetectionModel {
    pub fn perfect() -> Self {
        Self {
            p_detect: 1.0,
            duplicates: DuplicateProfile::NONE,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelParamError> {
        if !(0.0..=1.0).contains(&self.p_detect) {
            return Err(ModelParamError::Probability(self.p_detect));
        }
        if !(self.read_range_m.is_finite() && self.read_range_m > 0.0) {
            return Err(ModelParamError::Range(self.read_range_m));
        }
        if self.duplicates.spacing_s < 1 {
            return Err(ModelParamError::Spacing);
        }
        Ok(())
    }
}

/// Observations produced when `tag` passes the reader at `at`.
///
/// The detection draw comes first and the duplicate count second, both from
/// the same seeded stream, so runs that differ only in `p_detect` see the
/// same duplicate counts and nested sets of detected passages.
pub fn observe_passage(
    tag: TagId,
    at: Timestamp,
    model: &DetectionModel,
    seed: u64,
) -> Vec<(TagId, Timestamp)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: f64 = rng.random();
    let extra = rng.random_range(0..=model.duplicates.max_extra);
    if u >= model.p_detect {
        return Vec::new();
    }
    (0..=extra as i64)
        .map(|k| (tag, at.plus_seconds(k * model.duplicates.spacing_s)))
        .collect()
}

/// Seed for the `index`-th passage seen by a node seeded with `node_seed`.
pub fn passage_seed(node_seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = node_seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeIdentity {
    pub node: NodeId,
    pub name: Name,
    pub room: RoomId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportBatch {
    pub checkpoint: NodeIdentity,
    pub observations: Vec<(TagId, Timestamp)>,
    pub created_at: Timestamp,
}

impl ReportBatch {
    pub fn to_payload(&self) -> ReportPayload {
        let records = self
            .observations
            .iter()
            .map(|(_, at)| ReportRecord {
                node: self.checkpoint.node.clone(),
                name: self.checkpoint.name.clone(),
                room: self.checkpoint.room.clone(),
                at: *at,
            })
            .collect();
        let entries = self
            .observations
            .iter()
            .map(|(tag, _)| (*tag, Name::new(tag.as_str()).expect("tag ids are valid names")))
            .collect();
        ReportPayload {
            report: CheckpointReport { records },
            tags: TagRoster { entries },
        }
    }
}

/// Observations waiting to be batched, in arrival order.
#[derive(Debug, Clone, Default)]
pub struct Pending {
    items: Vec<(TagId, Timestamp)>,
}

impl Pending {
    pub fn push(&mut self, tag: TagId, at: Timestamp) {
        self.items.push((tag, at));
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn first_at(&self) -> Option<Timestamp> {
        self.items.iter().map(|(_, t)| *t).min()
    }
}

/// Drains `pending` into a batch once `window_s` seconds have elapsed since
/// its earliest observation.
pub fn flush_batch(
    pending: &mut Pending,
    window_s: i64,
    now: Timestamp,
    checkpoint: &NodeIdentity,
) -> Option<ReportBatch> {
    assert!(window_s >= 1, "batch window must be at least one second");
    let first = pending.first_at()?;
    if now.seconds_since(first) < window_s {
        return None;
    }
    let mut observations = std::mem::take(&mut pending.items);
    // stable: equal timestamps stay in passage order
    observations.sort_by_key(|(_, t)| *t);
    Some(ReportBatch {
        checkpoint: checkpoint.clone(),
        observations,
        created_at: now,
    })
}

/// Exponential retry delays: 1, 2, 4, ... seconds, capped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Backoff {
    failures: u32,
}

impl Backoff {
    pub fn next_delay(&mut self) -> i64 {
        let d = 1i64
            .checked_shl(self.failures.min(32))
            .unwrap_or(BACKOFF_CAP_S)
            .min(BACKOFF_CAP_S);
        self.failures = self.failures.saturating_add(1);
        d
    }

    pub fn reset(&mut self) {
        self.failures = 0;
    }

    pub fn failures(&self) -> u32 {
        self.failures
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("gateway unreachable: {0}")]
    Unreachable(String),
    #[error("malformed reply from gateway: {0}")]
    BadReply(String),
}

/// Carries one frame to the gateway and returns its reply.
pub trait Transport {
    fn send(&mut self, frame: &[u8]) -> Result<Reply, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn send(&mut self, frame: &[u8]) -> Result<Reply, TransportError> {
        (**self).send(frame)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReportOutcome {
    Ack(String),
    RetryScheduled { at: Timestamp, failures: u32 },
    RejectedUnknownCheckpoint,
}

#[derive(Debug, Clone)]
struct Outgoing {
    batch: ReportBatch,
    frame: Vec<u8>,
    id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub passages: u64,
    pub observations: u64,
    pub batches_acked: u64,
    pub observations_acked: u64,
    pub send_attempts: u64,
    pub retries: u64,
    pub heartbeats_sent: u64,
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub identity: NodeIdentity,
    pub model: DetectionModel,
    pub window_s: i64,
    /// Zero disables heartbeats.
    pub heartbeat_s: i64,
    pub seed: u64,
}

impl NodeConfig {
    pub fn new(identity: NodeIdentity) -> Self {
        Self {
            identity,
            model: DetectionModel::default(),
            window_s: DEFAULT_WINDOW_S,
            heartbeat_s: DEFAULT_HEARTBEAT_S,
            seed: 0,
        }
    }
}

/// One checkpoint's reader agent.
#[derive(Debug)]
pub struct ReaderNode {
    cfg: NodeConfig,
    /// Observations whose timestamp has not been reached yet, sorted.
    scheduled: VecDeque<(TagId, Timestamp)>,
    pending: Pending,
    outbox: VecDeque<Outgoing>,
    backoff: Backoff,
    retry_at: Option<Timestamp>,
    next_heartbeat: Option<Timestamp>,
    halted: bool,
    stats: NodeStats,
}

impl ReaderNode {
    pub fn new(cfg: NodeConfig) -> Self {
        assert!(cfg.window_s >= 1, "batch window must be at least one second");
        Self {
            cfg,
            scheduled: VecDeque::new(),
            pending: Pending::default(),
            outbox: VecDeque::new(),
            backoff: Backoff::default(),
            retry_at: None,
            next_heartbeat: None,
            halted: false,
            stats: NodeStats::default(),
        }
    }

    pub fn identity(&self) -> &NodeIdentity {
        &self.cfg.identity
    }

    pub fn stats(&self) -> &NodeStats {
        &self.stats
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Clears the halt after the operator registered the checkpoint.
    pub fn resume(&mut self) {
        self.halted = false;
        self.retry_at = None;
        self.backoff.reset();
    }

    /// Observations not yet acknowledged by the gateway.
    pub fn unacked(&self) -> usize {
        self.scheduled.len()
            + self.pending.len()
            + self.outbox.iter().map(|o| o.batch.observations.len()).sum::<usize>()
    }

    pub fn is_idle(&self) -> bool {
        self.unacked() == 0
    }

    /// Earliest time at which `tick` has something to do.
    pub fn next_wakeup(&self) -> Option<Timestamp> {
        let mut next: Vec<Timestamp> = Vec::new();
        if let Some((_, t)) = self.scheduled.front() {
            next.push(*t);
        }
        if let Some(first) = self.pending.first_at() {
            next.push(first.plus_seconds(self.cfg.window_s));
        }
        if !self.halted && !self.outbox.is_empty() {
            if let Some(t) = self.retry_at {
                next.push(t);
            }
        }
        next.into_iter().min()
    }

    /// A tag passed the reader at `at`.
    pub fn passage(&mut self, tag: TagId, at: Timestamp) {
        let seed = passage_seed(self.cfg.seed, self.stats.passages);
        self.stats.passages += 1;
        for obs in observe_passage(tag, at, &self.cfg.model, seed) {
            self.stats.observations += 1;
            let pos = self.scheduled.partition_point(|(_, t)| *t <= obs.1);
            self.scheduled.insert(pos, obs);
        }
    }

    /// Advances the node to `now`: releases due observations, flushes a batch
    /// when its window has elapsed, sends heartbeats, and (re)tries delivery
    /// of the oldest unacknowledged batch.
    pub fn tick(&mut self, now: Timestamp, transport: &mut dyn Transport) -> Option<ReportOutcome> {
        while self.scheduled.front().is_some_and(|(_, t)| *t <= now) {
            let (tag, at) = self.scheduled.pop_front().expect("checked");
            self.pending.push(tag, at);
        }
        if let Some(batch) = flush_batch(&mut self.pending, self.cfg.window_s, now, &self.cfg.identity) {
            self.enqueue(batch);
        }
        self.heartbeat(now, transport);
        self.deliver(now, transport)
    }

    /// Flushes everything still buffered regardless of the window and tries
    /// to deliver it; used at shutdown and by the simulator's drain phase.
    pub fn flush_now(&mut self, now: Timestamp, transport: &mut dyn Transport) -> Option<ReportOutcome> {
        while let Some((tag, at)) = self.scheduled.pop_front() {
            self.pending.push(tag, at);
        }
        if let Some(first) = self.pending.first_at() {
            let at = now.max(first.plus_seconds(self.cfg.window_s));
            if let Some(b) = flush_batch(&mut self.pending, self.cfg.window_s, at, &self.cfg.identity) {
                self.enqueue(b);
            }
        }
        self.deliver(now, transport)
    }

    fn enqueue(&mut self, batch: ReportBatch) {
        let payload = encode_report_payload(&batch.to_payload());
        let frame = frame_message(FrameKind::Report, &payload).expect("encoded payload never contains a blank line");
        let id = batch_id(&payload);
        self.outbox.push_back(Outgoing { batch, frame, id });
    }

    fn heartbeat(&mut self, now: Timestamp, transport: &mut dyn Transport) {
        if self.cfg.heartbeat_s <= 0 || self.halted {
            return;
        }
        let due = *self
            .next_heartbeat
            .get_or_insert(now.plus_seconds(self.cfg.heartbeat_s));
        if now < due {
            return;
        }
        let hb = Heartbeat {
            node: self.cfg.identity.node.clone(),
            at: now,
        };
        let frame = frame_message(FrameKind::Heartbeat, &encode_heartbeat(&hb)).expect("heartbeat is one line");
        // a lost heartbeat is simply retried next period
        match transport.send(&frame) {
            Ok(Reply::Ok(_)) => self.stats.heartbeats_sent += 1,
            Ok(Reply::Err { status, message }) => warn!("heartbeat rejected: {status} {message}"),
            Err(e) => warn!("heartbeat failed: {e}"),
        }
        let mut next = due;
        while next <= now {
            next = next.plus_seconds(self.cfg.heartbeat_s);
        }
        self.next_heartbeat = Some(next);
    }

    fn deliver(&mut self, now: Timestamp, transport: &mut dyn Transport) -> Option<ReportOutcome> {
        let mut last = None;
        while !self.halted {
            if self.retry_at.is_some_and(|t| now < t) {
                break;
            }
            let Some(head) = self.outbox.front() else { break };
            self.stats.send_attempts += 1;
            let outcome = match transport.send(&head.frame) {
                Ok(Reply::Ok(_)) => {
                    let head = self.outbox.pop_front().expect("checked");
                    self.stats.batches_acked += 1;
                    self.stats.observations_acked += head.batch.observations.len() as u64;
                    self.backoff.reset();
                    self.retry_at = None;
                    ReportOutcome::Ack(head.id)
                }
                Ok(Reply::Err { status: 403, message }) => {
                    warn!("{}: gateway rejected report ({message}); halting until re-registered", self.cfg.identity.node);
                    self.halted = true;
                    ReportOutcome::RejectedUnknownCheckpoint
                }
                Ok(Reply::Err { status, message }) => {
                    info!("{}: report not accepted ({status} {message}); will retry", self.cfg.identity.node);
                    self.schedule_retry(now)
                }
                Err(e) => {
                    info!("{}: {e}; will retry", self.cfg.identity.node);
                    self.schedule_retry(now)
                }
            };
            let stop = !matches!(outcome, ReportOutcome::Ack(_));
            last = Some(outcome);
            if stop {
                break;
            }
        }
        last
    }

    fn schedule_retry(&mut self, now: Timestamp) -> ReportOutcome {
        let delay = self.backoff.next_delay();
        self.stats.retries += 1;
        let at = now.plus_seconds(delay);
        self.retry_at = Some(at);
        ReportOutcome::RetryScheduled {
            at,
            failures: self.backoff.failures(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

/// Parses a passage schedule: one `TAGID TIMESTAMP` per line, `#` comments
/// and blank lines ignored. Entries are returned sorted by time (stable).
pub fn parse_trace(text: &str) -> Result<Vec<(TagId, Timestamp)>, TraceError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| TraceError { line: i + 1, message };
        let mut parts = line.split_whitespace();
        let (Some(tag), Some(at), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected TAGID TIMESTAMP".into()));
        };
        let tag = validate_tag_id(tag).map_err(|e| err(e.to_string()))?;
        let at = parse_timestamp(at).map_err(|e| err(e.to_string()))?;
        out.push((tag, at));
    }
    out.sort_by_key(|(_, t)| *t);
    Ok(out)
}

pub fn render_trace(entries: &[(TagId, Timestamp)]) -> String {
    entries.iter().map(|(t, at)| format!("{t} {at}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::normalize_node_id;
    use crate::wire::unframe;

    fn t0() -> Timestamp {
        Timestamp::from_ymd_hms(2017, 9, 28, 11, 8, 15).unwrap()
    }

    fn tag(i: u32) -> TagId {
        validate_tag_id(&format!("01008C{i:04X}")).unwrap()
    }

    fn identity() -> NodeIdentity {
        NodeIdentity {
            node: normalize_node_id("192.168.0.1").unwrap(),
            name: Name::new("Rp1").unwrap(),
            room: RoomId::new("Room1").unwrap(),
        }
    }

    #[test]
    fn observe_deterministic_limits() {
        let m = DetectionModel::perfect();
        assert_eq!(observe_passage(tag(0), t0(), &m, 9), vec![(tag(0), t0())]);
        let m = DetectionModel { p_detect: 0.0, ..DetectionModel::default() };
        assert!(observe_passage(tag(0), t0(), &m, 9).is_empty());
    }

    #[test]
    fn duplicates_are_spaced_one_second() {
        let m = DetectionModel { p_detect: 1.0, ..DetectionModel::default() };
        for seed in 0..200 {
            let obs = observe_passage(tag(1), t0(), &m, seed);
            assert!((1..=4).contains(&obs.len()));
            for (k, (_, at)) in obs.iter().enumerate() {
                assert_eq!(at.seconds_since(t0()), k as i64);
            }
        }
    }

    #[test]
    fn detection_rate_monte_carlo() {
        // Bernoulli(0.98) over 1e5 trials has sd ~ 4.4e-4, so +-0.005 is > 10 sd.
        let m = DetectionModel::default();
        let mut master = ChaCha8Rng::seed_from_u64(42);
        let trials = 100_000;
        let detected = (0..trials)
            .filter(|_| !observe_passage(tag(2), t0(), &m, master.random()).is_empty())
            .count();
        let rate = detected as f64 / trials as f64;
        assert!((rate - 0.98).abs() <= 0.005, "rate {rate}");
    }

    #[test]
    fn flush_batch_examples() {
        let id = identity();
        let mut p = Pending::default();
        assert!(flush_batch(&mut p, 5, t0(), &id).is_none());
        p.push(tag(3), t0().plus_seconds(2));
        p.push(tag(1), t0());
        p.push(tag(2), t0().plus_seconds(2));
        assert!(flush_batch(&mut p, 5, t0().plus_seconds(4), &id).is_none());
        let b = flush_batch(&mut p, 5, t0().plus_seconds(5), &id).unwrap();
        assert!(p.is_empty());
        assert_eq!(
            b.observations,
            vec![
                (tag(1), t0()),
                (tag(3), t0().plus_seconds(2)),
                (tag(2), t0().plus_seconds(2))
            ]
        );
        p.push(tag(1), t0());
        p.push(tag(1), t0());
        let b = flush_batch(&mut p, 5, t0().plus_seconds(9), &id).unwrap();
        assert_eq!(b.observations.len(), 2, "duplicates stay in the batch");
    }

    #[test]
    fn backoff_sequence() {
        let mut b = Backoff::default();
        let seq: Vec<i64> = (0..9).map(|_| b.next_delay()).collect();
        assert_eq!(seq, vec![1, 2, 4, 8, 16, 32, 60, 60, 60]);
        b.reset();
        assert_eq!(b.next_delay(), 1);
    }

    #[test]
    fn trace_file() {
        let text = "# schedule\n01008c7201 28-09-2017T11:08:20\n\n01008C7200 28-09-2017T11:08:15  # first\n";
        let tr = parse_trace(text).unwrap();
        assert_eq!(tr[0], (tag(0x7200), t0()));
        assert_eq!(parse_trace(&render_trace(&tr)).unwrap(), tr);
        assert_eq!(parse_trace("01008C7200\n").unwrap_err().line, 1);
        assert_eq!(parse_trace("\nXX 28-09-2017T11:08:15\n").unwrap_err().line, 2);
    }

    /// Records frames and answers from a script of outcomes.
    struct Scripted {
        frames: Vec<Vec<u8>>,
        down_until: Option<Timestamp>,
        now: Timestamp,
    }

    impl Transport for Scripted {
        fn send(&mut self, frame: &[u8]) -> Result<Reply, TransportError> {
            if self.down_until.is_some_and(|t| self.now < t) {
                return Err(TransportError::Unreachable("down".into()));
            }
            self.frames.push(frame.to_vec());
            Ok(Reply::Ok(None))
        }
    }

    #[test]
    fn heartbeat_count_follows_period() {
        let mut cfg = NodeConfig::new(identity());
        cfg.heartbeat_s = 10;
        let mut node = ReaderNode::new(cfg);
        let mut tr = Scripted { frames: vec![], down_until: None, now: t0() };
        for s in 0..=35 {
            tr.now = t0().plus_seconds(s);
            node.tick(tr.now, &mut tr);
        }
        assert_eq!(node.stats().heartbeats_sent, 3);
        let last = unframe(tr.frames.last().unwrap()).unwrap();
        assert_eq!(last.kind, FrameKind::Heartbeat);
        assert_eq!(last.payload, format!("192.168.0.1 {}", t0().plus_seconds(30)));
    }

    #[test]
    fn outage_is_retried_without_loss() {
        let mut cfg = NodeConfig::new(identity());
        cfg.model = DetectionModel::perfect();
        cfg.heartbeat_s = 0;
        let mut node = ReaderNode::new(cfg);
        node.passage(tag(7), t0());
        let start = t0().plus_seconds(5);
        let mut tr = Scripted { frames: vec![], down_until: Some(start.plus_seconds(3)), now: start };
        let mut outcomes = vec![];
        for s in 5..20 {
            tr.now = t0().plus_seconds(s);
            if let Some(o) = node.tick(tr.now, &mut tr) {
                outcomes.push(o);
            }
        }
        assert_eq!(tr.frames.len(), 1, "delivered exactly once");
        assert_eq!(node.stats().retries, 2);
        assert!(matches!(outcomes.last(), Some(ReportOutcome::Ack(_))));
        assert!(node.is_idle());
    }
}

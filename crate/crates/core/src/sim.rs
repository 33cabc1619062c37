// SPDX-License-Identifier: Apache-2.0

//! Ground-truth visitor movement and a simulated clock that drives reader
//! nodes with it.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::graph::{BuildingGraph, GraphError};
use crate::model::{
    parse_timestamp, validate_tag_id, Demographic, Name, NodeId, RoomId, TagId, Timestamp,
};
use crate::node::{passage_seed, DetectionModel, NodeConfig, NodeIdentity, ReaderNode, Transport};

pub const MIN_DWELL_S: i64 = 10;
const FIRST_TAG: u64 = 0x01_008C_0000;
/// Chance that a visitor standing in the entrance hall after at least one
/// move leaves the building.
const LEAVE_PROBABILITY: f64 = 0.5;
/// Simulated seconds the feed keeps ticking after the last event so that
/// retries can drain.
const DRAIN_LIMIT_S: i64 = 3600;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario parameters: {0}")]
    InvalidParams(String),
    #[error("no reader node for checkpoint {0}")]
    MissingNode(NodeId),
    #[error("scenario line {line}: {message}")]
    Scenario { line: usize, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("feed target refused {what}: {message}")]
    Desk { what: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisitPolicy {
    RandomWalk,
    TourAllRooms,
}

impl FromStr for VisitPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random_walk" => Ok(VisitPolicy::RandomWalk),
            "tour_all_rooms" => Ok(VisitPolicy::TourAllRooms),
            _ => Err(format!("unknown visit policy {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub graph: BuildingGraph,
    pub n_visitors: usize,
    pub arrival_mean_s: f64,
    pub dwell_mean_s: f64,
    pub policy: VisitPolicy,
    pub duration_s: i64,
    pub seed: u64,
    pub start: Timestamp,
}

impl ScenarioParams {
    pub fn new(graph: BuildingGraph) -> Self {
        Self {
            graph,
            n_visitors: 100,
            arrival_mean_s: 60.0,
            dwell_mean_s: 300.0,
            policy: VisitPolicy::RandomWalk,
            duration_s: 8 * 3600,
            seed: 0,
            start: Timestamp::from_ymd_hms(2017, 9, 28, 9, 0, 0).expect("valid date"),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParams(m.to_string()));
        if !(self.arrival_mean_s.is_finite() && self.arrival_mean_s > 0.0) {
            return bad("arrival mean must be positive");
        }
        if !(self.dwell_mean_s.is_finite() && self.dwell_mean_s > 0.0) {
            return bad("dwell mean must be positive");
        }
        if self.duration_s <= 0 {
            return bad("duration must be positive");
        }
        let entrance = self.graph.entrance();
        if self.n_visitors > 0 && !self.graph.neighbors(entrance).any(|r| self.visitable(r)) {
            return bad("no visitable room next to the entrance");
        }
        Ok(())
    }

    /// The entrance hall and every room with a reader.
    pub fn visitable(&self, room: &RoomId) -> bool {
        room == self.graph.entrance() || self.graph.checkpoint_in(room).is_some()
    }
}

/// Reads a scenario file: a floor plan plus optional `SIM <key> <value>`
/// lines overriding the defaults.
pub fn parse_scenario(text: &str) -> Result<ScenarioParams, SimError> {
    let mut plan = String::with_capacity(text.len());
    let mut settings = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.split_whitespace().next() == Some("SIM") {
            settings.push((i + 1, content.to_string()));
            plan.push('\n');
        } else {
            plan.push_str(raw);
            plan.push('\n');
        }
    }
    let mut p = ScenarioParams::new(BuildingGraph::parse(&plan)?);
    for (line, content) in settings {
        let err = |message: String| SimError::Scenario { line, message };
        let toks: Vec<&str> = content.split_whitespace().collect();
        let [_, key, value] = toks.as_slice() else {
            return Err(err("expected SIM <key> <value>".into()));
        };
        let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("{key}: not a number")));
        let int = |v: &str| v.parse::<i64>().map_err(|_| err(format!("{key}: not an integer")));
        match *key {
            "visitors" => p.n_visitors = value.parse().map_err(|_| err("visitors: not a count".into()))?,
            "arrival_mean_s" => p.arrival_mean_s = num(value)?,
            "dwell_mean_s" => p.dwell_mean_s = num(value)?,
            "policy" => p.policy = value.parse().map_err(err)?,
            "duration_s" => p.duration_s = int(value)?,
            "seed" => p.seed = value.parse().map_err(|_| err("seed: not an unsigned integer".into()))?,
            "start" => p.start = parse_timestamp(value).map_err(|e| err(e.to_string()))?,
            other => return Err(err(format!("unknown setting {other:?}"))),
        }
    }
    p.validate()?;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stay {
    pub room: RoomId,
    pub enter: Timestamp,
    pub leave: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitorTruth {
    pub tag: TagId,
    pub name: Name,
    pub demographic: Demographic,
    /// Contiguous; starts and ends in the entrance hall. The first stay's
    /// `enter` is the tag issue time, the last stay's `leave` the return.
    pub stays: Vec<Stay>,
}

impl VisitorTruth {
    pub fn arrive(&self) -> Timestamp {
        self.stays[0].enter
    }

    pub fn depart(&self) -> Timestamp {
        self.stays[self.stays.len() - 1].leave
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub rooms: Vec<RoomId>,
    pub visitors: Vec<VisitorTruth>,
    /// Per checkpoint, the room entries it witnessed in time order.
    pub passages: BTreeMap<NodeId, Vec<(TagId, Timestamp)>>,
}

struct Walker<'a> {
    p: &'a ScenarioParams,
    rng: ChaCha8Rng,
    dwell: Exp<f64>,
}

impl Walker<'_> {
    fn dwell(&mut self) -> i64 {
        (self.dwell.sample(&mut self.rng).round() as i64).max(MIN_DWELL_S)
    }

    fn route(&mut self, arrive: Timestamp, end: Timestamp) -> Vec<(RoomId, Timestamp)> {
        let g = &self.p.graph;
        let entrance = g.entrance().clone();
        let mut entries = vec![(entrance.clone(), arrive)];
        let mut t = arrive.plus_seconds(self.dwell());
        match self.p.policy {
            VisitPolicy::RandomWalk => {
                let mut cur = entrance.clone();
                loop {
                    if cur == entrance && (t >= end || (entries.len() > 1 && self.rng.random::<f64>() < LEAVE_PROBABILITY)) {
                        break;
                    }
                    let next = if t >= end {
                        g.shortest_path(&cur, &entrance, |r| self.p.visitable(r))
                            .expect("visitable rooms are reached from the entrance")[1]
                            .clone()
                    } else {
                        let options: Vec<&RoomId> = g.neighbors(&cur).filter(|r| self.p.visitable(r)).collect();
                        options[self.rng.random_range(0..options.len())].clone()
                    };
                    entries.push((next.clone(), t));
                    t = t.plus_seconds(self.dwell());
                    cur = next;
                }
            }
            VisitPolicy::TourAllRooms => {
                let dist = g.bfs_distances(std::iter::once(&entrance), |r| self.p.visitable(r));
                let mut unvisited: BTreeSet<RoomId> = dist.keys().filter(|r| **r != entrance).cloned().collect();
                let mut cur = entrance.clone();
                while !unvisited.is_empty() || cur != entrance {
                    let here = g.bfs_distances(std::iter::once(&cur), |r| self.p.visitable(r));
                    let target = unvisited
                        .iter()
                        .min_by_key(|r| (here[*r], (*r).clone()))
                        .cloned()
                        .unwrap_or_else(|| entrance.clone());
                    let path = g
                        .shortest_path(&cur, &target, |r| self.p.visitable(r))
                        .expect("target is reachable");
                    for room in path.into_iter().skip(1) {
                        unvisited.remove(&room);
                        entries.push((room.clone(), t));
                        t = t.plus_seconds(self.dwell());
                        cur = room;
                    }
                }
            }
        }
        entries.push((entrance, t));
        entries
    }
}

fn tag_for(i: usize) -> TagId {
    validate_tag_id(&format!("{:010X}", FIRST_TAG + i as u64)).expect("ten hex digits")
}

/// Deterministic ground truth for `p`.
pub fn generate(p: &ScenarioParams) -> Result<GroundTruth, SimError> {
    p.validate()?;
    let g = &p.graph;
    let end = p.start.plus_seconds(p.duration_s);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let arrival = Exp::new(1.0 / p.arrival_mean_s).map_err(|e| SimError::InvalidParams(e.to_string()))?;
    let dwell = Exp::new(1.0 / p.dwell_mean_s).map_err(|e| SimError::InvalidParams(e.to_string()))?;
    let mut visitors = Vec::new();
    let mut t = p.start;
    for i in 0..p.n_visitors {
        t = t.plus_seconds(arrival.sample(&mut rng).round() as i64);
        if t >= end {
            break;
        }
        let mut w = Walker {
            p,
            rng: ChaCha8Rng::seed_from_u64(passage_seed(p.seed, i as u64)),
            dwell,
        };
        let demographic = Demographic::ALL[w.rng.random_range(0..Demographic::ALL.len())];
        let entries = w.route(t, end);
        let stays = entries
            .windows(2)
            .map(|win| Stay {
                room: win[0].0.clone(),
                enter: win[0].1,
                leave: win[1].1,
            })
            .collect();
        visitors.push(VisitorTruth {
            tag: tag_for(i),
            name: Name::new(&format!("Visitor {}", i + 1)).expect("plain name"),
            demographic,
            stays,
        });
    }
    let mut passages: BTreeMap<NodeId, Vec<(TagId, Timestamp)>> =
        g.checkpoints().keys().map(|n| (n.clone(), Vec::new())).collect();
    for v in &visitors {
        for s in &v.stays[1..] {
            if let Some(node) = g.checkpoint_in(&s.room) {
                passages.get_mut(node).expect("listed").push((v.tag, s.enter));
            }
        }
    }
    for list in passages.values_mut() {
        list.sort_by_key(|(tag, at)| (*at, *tag));
    }
    Ok(GroundTruth {
        rooms: g.rooms().map(|(r, _)| r.clone()).collect(),
        visitors,
        passages,
    })
}

impl GroundTruth {
    /// Visitors per room at `at` (every room listed).
    pub fn occupancy(&self, at: Timestamp) -> BTreeMap<RoomId, u64> {
        let mut out: BTreeMap<RoomId, u64> = self.rooms.iter().map(|r| (r.clone(), 0)).collect();
        for v in &self.visitors {
            if let Some(s) = v.stays.iter().find(|s| s.enter <= at && at < s.leave) {
                *out.get_mut(&s.room).expect("room in plan") += 1;
            }
        }
        out
    }

    /// Room and entry time of the latest room entry at or before `at`.
    pub fn last_known(&self, tag: &TagId, at: Timestamp) -> Option<(RoomId, Timestamp)> {
        let v = self.visitors.iter().find(|v| v.tag == *tag)?;
        v.stays
            .iter()
            .rev()
            .find(|s| s.enter <= at)
            .map(|s| (s.room.clone(), s.enter))
    }

    /// Entries into and exits from `room` in `(from, to]`.
    pub fn flow(&self, room: &RoomId, from: Timestamp, to: Timestamp) -> (u64, u64) {
        let inside = |t: Timestamp| from < t && t <= to;
        let mut entered = 0;
        let mut left = 0;
        for s in self.visitors.iter().flat_map(|v| &v.stays) {
            if &s.room == room {
                entered += inside(s.enter) as u64;
                left += inside(s.leave) as u64;
            }
        }
        (entered, left)
    }

    /// Room changes inside the building (issue and return excluded).
    pub fn transitions(&self) -> u64 {
        self.visitors.iter().map(|v| v.stays.len() as u64 - 1).sum()
    }

    /// Every instant at which something happens, ascending.
    pub fn event_times(&self) -> Vec<Timestamp> {
        let set: BTreeSet<Timestamp> = self
            .visitors
            .iter()
            .flat_map(|v| v.stays.iter().flat_map(|s| [s.enter, s.leave]))
            .collect();
        set.into_iter().collect()
    }

    /// Truth file: `TAG ROOM ENTER_TS LEAVE_TS` per stay.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for v in &self.visitors {
            for s in &v.stays {
                out.push_str(&format!("{} {} {} {}\n", v.tag, s.room, s.enter, s.leave));
            }
        }
        out
    }
}

/// Registration desk and report sink the feed drives.
pub trait Desk {
    fn register(&mut self, v: &VisitorTruth) -> Result<(), String>;
    fn return_tag(&mut self, tag: TagId, at: Timestamp) -> Result<(), String>;
    /// Channel the reader nodes send their frames over.
    fn transport(&mut self) -> &mut dyn Transport;
}

/// One reader node per checkpoint of `g`, each with its own detection seed.
pub fn make_nodes(
    g: &BuildingGraph,
    model: DetectionModel,
    seed: u64,
) -> BTreeMap<NodeId, ReaderNode> {
    g.checkpoints()
        .iter()
        .enumerate()
        .map(|(i, (node, cp))| {
            let mut cfg = NodeConfig::new(NodeIdentity {
                node: node.clone(),
                name: cp.name.clone(),
                room: cp.room.clone(),
            });
            cfg.model = model;
            cfg.seed = passage_seed(seed, i as u64);
            (node.clone(), ReaderNode::new(cfg))
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeedReport {
    pub passages: u64,
    pub registered: u64,
    pub returned: u64,
    pub undelivered: u64,
    pub finished_at: Option<Timestamp>,
}

/// Replays `gt` second by second: registrations, then passages, then node
/// ticks, then returns. `pace` is called once per simulated second.
pub fn feed(
    gt: &GroundTruth,
    nodes: &mut BTreeMap<NodeId, ReaderNode>,
    desk: &mut dyn Desk,
    pace: &mut dyn FnMut(Timestamp),
) -> Result<FeedReport, SimError> {
    for (node, list) in &gt.passages {
        if !list.is_empty() && !nodes.contains_key(node) {
            return Err(SimError::MissingNode(node.clone()));
        }
    }
    let mut report = FeedReport::default();
    if gt.visitors.is_empty() {
        return Ok(report);
    }
    let mut arrivals: Vec<&VisitorTruth> = gt.visitors.iter().collect();
    arrivals.sort_by_key(|v| (v.arrive(), v.tag));
    let mut departures: Vec<&VisitorTruth> = gt.visitors.iter().collect();
    departures.sort_by_key(|v| (v.depart(), v.tag));
    let mut passages: Vec<(Timestamp, &NodeId, TagId)> = gt
        .passages
        .iter()
        .flat_map(|(n, list)| list.iter().map(move |(tag, at)| (*at, n, *tag)))
        .collect();
    passages.sort();

    let start = arrivals[0].arrive();
    let last = departures[departures.len() - 1].depart();
    let (mut ai, mut di, mut pi) = (0, 0, 0);
    let mut now = start;
    loop {
        pace(now);
        while ai < arrivals.len() && arrivals[ai].arrive() <= now {
            desk.register(arrivals[ai]).map_err(|message| SimError::Desk {
                what: format!("registration of {}", arrivals[ai].tag),
                message,
            })?;
            report.registered += 1;
            ai += 1;
        }
        while pi < passages.len() && passages[pi].0 <= now {
            let (at, node, tag) = passages[pi];
            nodes.get_mut(node).expect("checked above").passage(tag, at);
            report.passages += 1;
            pi += 1;
        }
        for n in nodes.values_mut() {
            n.tick(now, desk.transport());
        }
        while di < departures.len() && departures[di].depart() <= now {
            desk.return_tag(departures[di].tag, departures[di].depart())
                .map_err(|message| SimError::Desk {
                    what: format!("return of {}", departures[di].tag),
                    message,
                })?;
            report.returned += 1;
            di += 1;
        }
        let done = now >= last && nodes.values().all(|n| n.is_idle() || n.is_halted());
        if done || now.seconds_since(last) >= DRAIN_LIMIT_S {
            break;
        }
        now = now.plus_seconds(1);
    }
    for n in nodes.values_mut() {
        if !n.is_idle() {
            n.flush_now(now, desk.transport());
        }
        report.undelivered += n.unacked() as u64;
    }
    report.finished_at = Some(now);
    Ok(report)
}

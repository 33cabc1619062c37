// SPDX-License-Identifier: Apache-2.0

//! Evacuation routes, reports and the alert outbox.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::engine::OccupancySnapshot;
use crate::graph::{walk_down, BuildingGraph};
use crate::model::{parse_timestamp, RoomId, Timestamp};

pub const DEFAULT_COOLDOWN_S: i64 = 60;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvacError {
    #[error("snapshot names room {0} which is not in the floor plan")]
    UnknownRoomInSnapshot(RoomId),
    #[error("no alert channels given")]
    NoChannels,
    #[error("no alert recipients given")]
    NoRecipients,
    #[error("recipient {0:?} contains a tab or line break")]
    BadRecipient(String),
    #[error("outbox i/o failure: {0}")]
    Io(String),
    #[error("outbox line {line}: {message}")]
    BadOutboxLine { line: usize, message: String },
}

impl From<io::Error> for EvacError {
    fn from(e: io::Error) -> Self {
        EvacError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvacRoute {
    pub from: RoomId,
    pub path: Vec<RoomId>,
    pub hops: usize,
}

impl fmt::Display for EvacRoute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.path.iter().enumerate() {
            if i > 0 {
                f.write_str(" -> ")?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Minimum-hop route from every room to its nearest exit.
pub fn evac_routes(g: &BuildingGraph) -> BTreeMap<RoomId, EvacRoute> {
    let dist = g.bfs_distances(g.exits().iter(), |_| true);
    g.rooms()
        .map(|(room, _)| {
            let path = walk_down(g, room, &dist).expect("floor plan is connected and has exits");
            let route = EvacRoute {
                from: room.clone(),
                hops: path.len() - 1,
                path,
            };
            (room.clone(), route)
        })
        .collect()
}

/// Minimum-hop route to the nearest exit. Ties are broken by taking the
/// smallest next room at every step.
///
/// # Panics
/// If `room` is not in the floor plan.
pub fn nearest_exit(g: &BuildingGraph, room: &RoomId) -> EvacRoute {
    assert!(g.contains(room), "room {room} is not in the floor plan");
    let dist = g.bfs_distances(g.exits().iter(), |_| true);
    let path = walk_down(g, room, &dist).expect("floor plan is connected and has exits");
    EvacRoute {
        from: room.clone(),
        hops: path.len() - 1,
        path,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvacEntry {
    pub room: RoomId,
    pub occupancy: u64,
    pub route: EvacRoute,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvacReport {
    pub at: Timestamp,
    pub per_room: Vec<EvacEntry>,
    pub total_inside: u64,
}

/// Occupied rooms and all exits, busiest first (ties by room id).
pub fn evac_report(g: &BuildingGraph, snapshot: &OccupancySnapshot) -> Result<EvacReport, EvacError> {
    if let Some(r) = snapshot.per_room.keys().find(|r| !g.contains(r)) {
        return Err(EvacError::UnknownRoomInSnapshot(r.clone()));
    }
    let routes = evac_routes(g);
    let mut per_room: Vec<EvacEntry> = routes
        .into_iter()
        .filter_map(|(room, route)| {
            let occupancy = snapshot.per_room.get(&room).copied().unwrap_or(0);
            (occupancy > 0 || g.is_exit(&room)).then_some(EvacEntry { room, occupancy, route })
        })
        .collect();
    per_room.sort_by(|a, b| b.occupancy.cmp(&a.occupancy).then_with(|| a.room.cmp(&b.room)));
    Ok(EvacReport {
        at: snapshot.at,
        per_room,
        total_inside: snapshot.total,
    })
}

impl EvacReport {
    /// Text rendering used by the API and CLI.
    pub fn render(&self) -> String {
        let mut out = format!("at: {}\ntotal_inside: {}\n", self.at, self.total_inside);
        out.push_str("\nroom\toccupancy\thops\troute\n");
        for e in &self.per_room {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", e.room, e.occupancy, e.route.hops, e.route));
        }
        out
    }

    /// One-line alert text with the total and every non-empty room.
    pub fn alert_body(&self) -> String {
        let mut body = format!("Evacuation alert at {}: {} inside", self.at, self.total_inside);
        let occupied: Vec<String> = self
            .per_room
            .iter()
            .filter(|e| e.occupancy > 0)
            .map(|e| format!("{} {} (exit via {})", e.room, e.occupancy, e.route))
            .collect();
        if !occupied.is_empty() {
            body.push_str("; ");
            body.push_str(&occupied.join(", "));
        }
        body
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    Email,
    Sms,
    Phone,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Email => "email",
            Channel::Sms => "sms",
            Channel::Phone => "phone",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "email" => Ok(Channel::Email),
            "sms" => Ok(Channel::Sms),
            "phone" => Ok(Channel::Phone),
            _ => Err(format!("unknown channel {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlertNotification {
    pub channel: Channel,
    pub recipient: String,
    pub body: String,
    pub queued_at: Timestamp,
}

impl AlertNotification {
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.queued_at, self.channel, self.recipient, self.body)
    }

    pub fn parse_line(line: &str) -> Result<AlertNotification, String> {
        let mut parts = line.splitn(4, '\t');
        let (Some(at), Some(ch), Some(to), Some(body)) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err("expected four tab-separated fields".into());
        };
        if body.contains(['\t', '\n', '\r']) {
            return Err("body contains a tab or line break".into());
        }
        Ok(AlertNotification {
            queued_at: parse_timestamp(at).map_err(|e| e.to_string())?,
            channel: ch.parse()?,
            recipient: to.to_string(),
            body: body.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlertOutcome {
    Queued(Vec<AlertNotification>),
    /// Within the cool-down of the trigger queued at this time.
    Coalesced { previous: Timestamp },
}

/// Append-only alert outbox file with trigger cool-down.
#[derive(Debug)]
pub struct Outbox {
    path: PathBuf,
    cooldown_s: i64,
    last_trigger: Option<Timestamp>,
    records: usize,
}

impl Outbox {
    /// Opens the outbox, picking the cool-down state up from its last line.
    pub fn open(path: impl AsRef<Path>, cooldown_s: i64) -> Result<Outbox, EvacError> {
        let path = path.as_ref().to_path_buf();
        let existing = match File::open(&path) {
            Ok(_) => read_outbox(&path)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        Ok(Outbox {
            path,
            cooldown_s,
            last_trigger: existing.iter().map(|n| n.queued_at).max(),
            records: existing.len(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records == 0
    }

    /// Queues one notification per (channel, recipient), unless another
    /// trigger was queued less than the cool-down ago.
    pub fn trigger_alert(
        &mut self,
        report: &EvacReport,
        channels: &[Channel],
        recipients: &[String],
        now: Timestamp,
    ) -> Result<AlertOutcome, EvacError> {
        if channels.is_empty() {
            return Err(EvacError::NoChannels);
        }
        if recipients.is_empty() {
            return Err(EvacError::NoRecipients);
        }
        if let Some(r) = recipients.iter().find(|r| r.is_empty() || r.contains(['\t', '\n', '\r'])) {
            return Err(EvacError::BadRecipient(r.clone()));
        }
        if let Some(prev) = self.last_trigger {
            let since = now.seconds_since(prev);
            if (0..self.cooldown_s).contains(&since) {
                return Ok(AlertOutcome::Coalesced { previous: prev });
            }
        }
        let body = report.alert_body();
        let notes: Vec<AlertNotification> = channels
            .iter()
            .flat_map(|c| {
                recipients.iter().map(|r| AlertNotification {
                    channel: *c,
                    recipient: r.clone(),
                    body: body.clone(),
                    queued_at: now,
                })
            })
            .collect();
        let mut text = String::new();
        for n in &notes {
            text.push_str(&n.to_line());
            text.push('\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(text.as_bytes())?;
        f.sync_data()?;
        self.last_trigger = Some(now);
        self.records += notes.len();
        Ok(AlertOutcome::Queued(notes))
    }
}

pub fn read_outbox(path: &Path) -> Result<Vec<AlertNotification>, EvacError> {
    let f = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        out.push(AlertNotification::parse_line(&line).map_err(|message| EvacError::BadOutboxLine {
            line: i + 1,
            message,
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::model::Demographic;
    use proptest::prelude::*;
    use std::collections::{BTreeSet, HashSet};

    fn r(s: &str) -> RoomId {
        RoomId::new(s).unwrap()
    }

    fn ts(s: &str) -> Timestamp {
        parse_timestamp(s).unwrap()
    }

    fn snapshot(g: &BuildingGraph, counts: &[(&str, u64)]) -> OccupancySnapshot {
        let mut per_room: BTreeMap<RoomId, u64> = g.rooms().map(|(r, _)| (r.clone(), 0)).collect();
        for (room, n) in counts {
            per_room.insert(r(room), *n);
        }
        OccupancySnapshot {
            at: ts("28-09-2017T12:00:00"),
            total: per_room.values().sum(),
            per_room,
            by_demographic: Demographic::ALL.iter().map(|d| (*d, 0)).collect(),
            stale_checkpoints: BTreeSet::new(),
        }
    }

    /// Fewest hops to any exit, by enumerating every simple path.
    fn brute_force_hops(g: &BuildingGraph, from: &RoomId) -> usize {
        fn dfs(g: &BuildingGraph, cur: &RoomId, seen: &mut HashSet<RoomId>, depth: usize, best: &mut usize) {
            if g.is_exit(cur) {
                *best = (*best).min(depth);
            }
            for n in g.neighbors(cur) {
                if seen.insert(n.clone()) {
                    dfs(g, n, seen, depth + 1, best);
                    seen.remove(n);
                }
            }
        }
        let mut best = usize::MAX;
        let mut seen = HashSet::from([from.clone()]);
        dfs(g, from, &mut seen, 0, &mut best);
        best
    }

    #[test]
    fn exit_room_routes_to_itself() {
        let g = BuildingGraph::default_scenario();
        let route = nearest_exit(&g, &r("Entrance"));
        assert_eq!((route.path, route.hops), (vec![r("Entrance")], 0));
    }

    #[test]
    fn linear_graph() {
        let g = GraphBuilder::new()
            .room("A", 0)
            .room("B", 0)
            .room("Out", 0)
            .edge("A", "B")
            .edge("B", "Out")
            .exit("Out")
            .entrance("Out")
            .build()
            .unwrap();
        let route = nearest_exit(&g, &r("A"));
        assert_eq!(route.path, vec![r("A"), r("B"), r("Out")]);
        assert_eq!(route.hops, 2);
    }

    #[test]
    fn tie_break_takes_smallest_next_room() {
        // A reaches the exit through either B or C in two hops
        let g = GraphBuilder::new()
            .room("A", 0)
            .room("C", 0)
            .room("B", 0)
            .room("X", 0)
            .edge("A", "C")
            .edge("A", "B")
            .edge("C", "X")
            .edge("B", "X")
            .exit("X")
            .entrance("X")
            .build()
            .unwrap();
        assert_eq!(nearest_exit(&g, &r("A")).path, vec![r("A"), r("B"), r("X")]);
    }

    #[test]
    fn default_scenario_routes_end_at_ground_floor_exit() {
        let g = BuildingGraph::default_scenario();
        for (room, route) in evac_routes(&g) {
            assert_eq!(route.path.last(), Some(&r("Entrance")), "{room}");
            assert_eq!(g.floor(route.path.last().unwrap()), Some(0));
        }
        assert_eq!(nearest_exit(&g, &r("Venue")).hops, 1);
    }

    #[test]
    fn all_zero_snapshot_lists_exits_only() {
        let g = BuildingGraph::default_scenario();
        let rep = evac_report(&g, &snapshot(&g, &[])).unwrap();
        assert_eq!(rep.total_inside, 0);
        assert_eq!(rep.per_room.len(), 1);
        assert_eq!(rep.per_room[0].room, r("Entrance"));
    }

    #[test]
    fn report_orders_by_descending_occupancy() {
        let g = BuildingGraph::default_scenario();
        let rep = evac_report(&g, &snapshot(&g, &[("Room2", 4), ("Venue", 9), ("Room1", 4)])).unwrap();
        let order: Vec<_> = rep.per_room.iter().map(|e| e.room.as_str().to_string()).collect();
        assert_eq!(order, ["Venue", "Room1", "Room2", "Entrance"]);
        assert_eq!(rep.total_inside, 17);
        assert_eq!(rep.render(), evac_report(&g, &snapshot(&g, &[("Room2", 4), ("Venue", 9), ("Room1", 4)])).unwrap().render());
    }

    #[test]
    fn unknown_room_in_snapshot() {
        let g = BuildingGraph::default_scenario();
        let mut snap = snapshot(&g, &[]);
        snap.per_room.insert(r("Attic"), 1);
        assert_eq!(evac_report(&g, &snap), Err(EvacError::UnknownRoomInSnapshot(r("Attic"))));
    }

    #[test]
    fn alerts_cross_product_cooldown_and_persistence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("outbox.tsv");
        let g = BuildingGraph::default_scenario();
        let rep = evac_report(&g, &snapshot(&g, &[("Room1", 2), ("Venue", 1)])).unwrap();
        let mut ob = Outbox::open(&path, DEFAULT_COOLDOWN_S).unwrap();
        let t0 = ts("28-09-2017T12:00:00");

        assert_eq!(ob.trigger_alert(&rep, &[], &["a".into()], t0), Err(EvacError::NoChannels));

        let AlertOutcome::Queued(one) = ob.trigger_alert(&rep, &[Channel::Email], &["ops@example.org".into()], t0).unwrap()
        else {
            panic!("expected queued")
        };
        assert_eq!(one.len(), 1);
        assert!(one[0].body.contains("3 inside"));
        assert!(one[0].body.contains("Room1 2") && one[0].body.contains("Venue 1"));

        let again = ob.trigger_alert(&rep, &[Channel::Email], &["ops@example.org".into()], t0.plus_seconds(5)).unwrap();
        assert_eq!(again, AlertOutcome::Coalesced { previous: t0 });
        assert_eq!(read_outbox(&path).unwrap().len(), 1);

        // cool-down survives reopening
        let mut ob = Outbox::open(&path, DEFAULT_COOLDOWN_S).unwrap();
        assert!(matches!(
            ob.trigger_alert(&rep, &[Channel::Sms], &["x".into()], t0.plus_seconds(59)).unwrap(),
            AlertOutcome::Coalesced { .. }
        ));
        let all = [Channel::Email, Channel::Sms, Channel::Phone];
        let AlertOutcome::Queued(six) = ob
            .trigger_alert(&rep, &all, &["a".into(), "b".into()], t0.plus_seconds(60))
            .unwrap()
        else {
            panic!("expected queued")
        };
        assert_eq!(six.len(), 6);
        let stored = read_outbox(&path).unwrap();
        assert_eq!(stored.len(), 7);
        assert_eq!(&stored[1..], &six[..]);
        assert_eq!(ob.len(), 7);
    }

    fn graph_strategy() -> impl Strategy<Value = BuildingGraph> {
        (2usize..=10)
            .prop_flat_map(|n| {
                (
                    Just(n),
                    proptest::collection::vec(any::<proptest::sample::Index>(), n - 1),
                    proptest::collection::vec((0..n, 0..n), 0..n * 2),
                    proptest::collection::btree_set(0..n, 1..=3.min(n)),
                )
            })
            .prop_map(|(n, parents, extra, exits)| {
                let name = |i: usize| format!("R{i}");
                let mut b = GraphBuilder::new();
                for i in 0..n {
                    b = b.room(&name(i), 0);
                }
                let mut edges = BTreeSet::new();
                for i in 1..n {
                    let p = parents[i - 1].index(i);
                    edges.insert((p.min(i), p.max(i)));
                }
                for (a, c) in extra {
                    if a != c {
                        edges.insert((a.min(c), a.max(c)));
                    }
                }
                for (a, c) in edges {
                    b = b.edge(&name(a), &name(c));
                }
                for e in &exits {
                    b = b.exit(&name(*e));
                }
                b.entrance(&name(*exits.iter().next().unwrap())).build().unwrap()
            })
    }

    proptest! {
        #[test]
        fn routes_are_optimal_and_well_formed(g in graph_strategy()) {
            let routes = evac_routes(&g);
            for (room, route) in &routes {
                prop_assert_eq!(route.hops, brute_force_hops(&g, room));
                prop_assert_eq!(route.hops + 1, route.path.len());
                prop_assert_eq!(route.path.first(), Some(room));
                prop_assert!(g.is_exit(route.path.last().unwrap()));
                for w in route.path.windows(2) {
                    prop_assert!(g.has_edge(&w[0], &w[1]));
                }
                prop_assert_eq!(&nearest_exit(&g, room), route);
            }
        }
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Building topology and the line-oriented floor-plan file.
//!
//! ```text
//! # comment
//! ROOM <RoomId> <floor-int>
//! EDGE <RoomId> <RoomId>
//! EXIT <RoomId>
//! ENTRANCE <RoomId>
//! CHECKPOINT <NodeId> <name> <RoomId>
//! ```

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{normalize_node_id, ModelError, Name, NodeId, RoomId};

/// The floor plan of the reference building, bundled with the crate.
pub const DEFAULT_SCENARIO: &str = include_str!("../../../scenarios/default.plan");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Field { line: usize, source: ModelError },
    #[error("duplicate room {0}")]
    DuplicateRoom(RoomId),
    #[error("duplicate checkpoint node {0}")]
    DuplicateCheckpoint(NodeId),
    #[error("room {0} referenced but never declared")]
    UnknownRoom(RoomId),
    #[error("self-loop edge on room {0}")]
    SelfLoop(RoomId),
    #[error("building graph is not connected: {0} unreachable from the entrance")]
    Disconnected(RoomId),
    #[error("no entrance declared")]
    MissingEntrance,
    #[error("more than one entrance declared")]
    MultipleEntrances,
    #[error("entrance {0} is not an exit")]
    EntranceNotExit(RoomId),
    #[error("graph has no rooms")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointPlacement {
    pub name: Name,
    pub room: RoomId,
}

/// Validated building topology.
///
/// Rooms, edges and checkpoints are kept in ordered collections so that every
/// derived output (routes, reports, rendered files) is byte-stable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildingGraph {
    rooms: BTreeMap<RoomId, i32>,
    adjacency: BTreeMap<RoomId, BTreeSet<RoomId>>,
    exits: BTreeSet<RoomId>,
    entrance: RoomId,
    checkpoints: BTreeMap<NodeId, CheckpointPlacement>,
}

/// Unvalidated graph description, as read from a file or assembled in code.
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    rooms: Vec<(RoomId, i32)>,
    edges: Vec<(RoomId, RoomId)>,
    exits: Vec<RoomId>,
    entrances: Vec<RoomId>,
    checkpoints: Vec<(NodeId, Name, RoomId)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn room(mut self, id: &str, floor: i32) -> Self {
        self.rooms.push((RoomId::new(id).expect("valid room id"), floor));
        self
    }

    pub fn edge(mut self, a: &str, b: &str) -> Self {
        self.edges
            .push((RoomId::new(a).expect("valid room id"), RoomId::new(b).expect("valid room id")));
        self
    }

    pub fn exit(mut self, id: &str) -> Self {
        self.exits.push(RoomId::new(id).expect("valid room id"));
        self
    }

    pub fn entrance(mut self, id: &str) -> Self {
        self.entrances.push(RoomId::new(id).expect("valid room id"));
        self
    }

    pub fn checkpoint(mut self, node: &str, name: &str, room: &str) -> Self {
        self.checkpoints.push((
            normalize_node_id(node).expect("valid node id"),
            Name::new(name).expect("valid name"),
            RoomId::new(room).expect("valid room id"),
        ));
        self
    }

    pub fn build(self) -> Result<BuildingGraph, GraphError> {
        let mut rooms = BTreeMap::new();
        for (id, floor) in self.rooms {
            if rooms.insert(id.clone(), floor).is_some() {
                return Err(GraphError::DuplicateRoom(id));
            }
        }
        if rooms.is_empty() {
            return Err(GraphError::Empty);
        }
        let known = |r: &RoomId| -> Result<(), GraphError> {
            if rooms.contains_key(r) {
                Ok(())
            } else {
                Err(GraphError::UnknownRoom(r.clone()))
            }
        };
        let mut adjacency: BTreeMap<RoomId, BTreeSet<RoomId>> =
            rooms.keys().map(|r| (r.clone(), BTreeSet::new())).collect();
        for (a, b) in &self.edges {
            known(a)?;
            known(b)?;
            if a == b {
                return Err(GraphError::SelfLoop(a.clone()));
            }
            adjacency.get_mut(a).unwrap().insert(b.clone());
            adjacency.get_mut(b).unwrap().insert(a.clone());
        }
        let mut exits = BTreeSet::new();
        for e in self.exits {
            known(&e)?;
            exits.insert(e);
        }
        let entrance = match self.entrances.as_slice() {
            [] => return Err(GraphError::MissingEntrance),
            [one] => one.clone(),
            _ => return Err(GraphError::MultipleEntrances),
        };
        known(&entrance)?;
        if !exits.contains(&entrance) {
            return Err(GraphError::EntranceNotExit(entrance));
        }
        let mut checkpoints = BTreeMap::new();
        for (node, name, room) in self.checkpoints {
            known(&room)?;
            if checkpoints
                .insert(node.clone(), CheckpointPlacement { name, room })
                .is_some()
            {
                return Err(GraphError::DuplicateCheckpoint(node));
            }
        }
        let graph = BuildingGraph {
            rooms,
            adjacency,
            exits,
            entrance,
            checkpoints,
        };
        let reached = graph.bfs_distances(std::iter::once(&graph.entrance), |_| true);
        if let Some(r) = graph.rooms.keys().find(|r| !reached.contains_key(*r)) {
            return Err(GraphError::Disconnected(r.clone()));
        }
        Ok(graph)
    }
}

impl BuildingGraph {
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut b = GraphBuilder::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            let syntax = |message: &str| GraphError::Syntax {
                line,
                message: message.to_string(),
            };
            let field = |source| GraphError::Field { line, source };
            let room = |s: &str| RoomId::new(s).map_err(field);
            match toks.as_slice() {
                ["ROOM", id, floor] => {
                    let floor: i32 = floor.parse().map_err(|_| syntax("floor must be an integer"))?;
                    b.rooms.push((room(id)?, floor));
                }
                ["EDGE", a, c] => b.edges.push((room(a)?, room(c)?)),
                ["EXIT", id] => b.exits.push(room(id)?),
                ["ENTRANCE", id] => b.entrances.push(room(id)?),
                ["CHECKPOINT", node, name, id] => b.checkpoints.push((
                    normalize_node_id(node).map_err(field)?,
                    Name::new(name).map_err(field)?,
                    room(id)?,
                )),
                [kw, ..] if ["ROOM", "EDGE", "EXIT", "ENTRANCE", "CHECKPOINT"].contains(kw) => {
                    return Err(syntax(&format!("wrong number of fields for {kw}")))
                }
                [kw, ..] => return Err(syntax(&format!("unknown directive {kw:?}"))),
                [] => unreachable!(),
            }
        }
        b.build()
    }

    pub fn default_scenario() -> Self {
        Self::parse(DEFAULT_SCENARIO).expect("bundled scenario is valid")
    }

    /// Canonical rendering; `parse(render(g)) == g`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (r, f) in &self.rooms {
            let _ = writeln!(out, "ROOM {r} {f}");
        }
        for (a, nbrs) in &self.adjacency {
            for b in nbrs.iter().filter(|b| a < *b) {
                let _ = writeln!(out, "EDGE {a} {b}");
            }
        }
        for e in &self.exits {
            let _ = writeln!(out, "EXIT {e}");
        }
        let _ = writeln!(out, "ENTRANCE {}", self.entrance);
        for (n, p) in &self.checkpoints {
            let _ = writeln!(out, "CHECKPOINT {n} {} {}", p.name, p.room);
        }
        out
    }

    pub fn rooms(&self) -> impl Iterator<Item = (&RoomId, i32)> {
        self.rooms.iter().map(|(r, f)| (r, *f))
    }

    pub fn room_count(&self) -> usize {
        self.rooms.len()
    }

    pub fn contains(&self, room: &RoomId) -> bool {
        self.rooms.contains_key(room)
    }

    pub fn floor(&self, room: &RoomId) -> Option<i32> {
        self.rooms.get(room).copied()
    }

    pub fn neighbors(&self, room: &RoomId) -> impl Iterator<Item = &RoomId> {
        self.adjacency.get(room).into_iter().flatten()
    }

    pub fn has_edge(&self, a: &RoomId, b: &RoomId) -> bool {
        self.adjacency.get(a).is_some_and(|n| n.contains(b))
    }

    pub fn edges(&self) -> impl Iterator<Item = (&RoomId, &RoomId)> {
        self.adjacency
            .iter()
            .flat_map(|(a, n)| n.iter().filter(move |b| a < *b).map(move |b| (a, b)))
    }

    pub fn exits(&self) -> &BTreeSet<RoomId> {
        &self.exits
    }

    pub fn is_exit(&self, room: &RoomId) -> bool {
        self.exits.contains(room)
    }

    pub fn entrance(&self) -> &RoomId {
        &self.entrance
    }

    pub fn checkpoints(&self) -> &BTreeMap<NodeId, CheckpointPlacement> {
        &self.checkpoints
    }

    pub fn checkpoint_room(&self, node: &NodeId) -> Option<&RoomId> {
        self.checkpoints.get(node).map(|p| &p.room)
    }

    /// First checkpoint (by node order) watching the given room's entrance.
    pub fn checkpoint_in(&self, room: &RoomId) -> Option<&NodeId> {
        self.checkpoints
            .iter()
            .find(|(_, p)| &p.room == room)
            .map(|(n, _)| n)
    }

    /// Multi-source BFS restricted to rooms accepted by `allow`.
    pub fn bfs_distances<'a>(
        &self,
        sources: impl IntoIterator<Item = &'a RoomId>,
        allow: impl Fn(&RoomId) -> bool,
    ) -> BTreeMap<RoomId, usize> {
        let mut dist = BTreeMap::new();
        let mut queue = VecDeque::new();
        for s in sources {
            if allow(s) && !dist.contains_key(s) {
                dist.insert(s.clone(), 0);
                queue.push_back(s.clone());
            }
        }
        while let Some(r) = queue.pop_front() {
            let d = dist[&r];
            for n in self.neighbors(&r) {
                if allow(n) && !dist.contains_key(n) {
                    dist.insert(n.clone(), d + 1);
                    queue.push_back(n.clone());
                }
            }
        }
        dist
    }

    /// Minimum-hop path from `from` to `to` through rooms accepted by
    /// `allow`, choosing the lexicographically smallest next room at each
    /// step among those that stay on a shortest path.
    pub fn shortest_path(
        &self,
        from: &RoomId,
        to: &RoomId,
        allow: impl Fn(&RoomId) -> bool,
    ) -> Option<Vec<RoomId>> {
        let dist = self.bfs_distances(std::iter::once(to), &allow);
        walk_down(self, from, &dist)
    }
}

/// Follows a distance field downhill from `from` to a zero, taking the
/// smallest neighbour (by id) at every step.
pub(crate) fn walk_down(
    g: &BuildingGraph,
    from: &RoomId,
    dist: &BTreeMap<RoomId, usize>,
) -> Option<Vec<RoomId>> {
    let mut d = *dist.get(from)?;
    let mut path = vec![from.clone()];
    let mut cur = from.clone();
    while d > 0 {
        // neighbours iterate in ascending order, so the first match is the smallest
        let next = g
            .neighbors(&cur)
            .find(|n| dist.get(*n) == Some(&(d - 1)))?
            .clone();
        path.push(next.clone());
        cur = next;
        d -= 1;
    }
    Some(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> RoomId {
        RoomId::new(s).unwrap()
    }

    #[test]
    fn default_scenario_is_valid() {
        let g = BuildingGraph::default_scenario();
        assert_eq!(g.entrance(), &r("Entrance"));
        assert!(g.is_exit(&r("Entrance")));
        assert!(g.checkpoints().len() >= 4);
        for room in ["Room1", "Room2", "Room3", "Control", "Venue"] {
            assert!(g.contains(&r(room)), "{room}");
        }
        assert_eq!(g.floor(&r("Venue")), Some(1));
        assert_eq!(BuildingGraph::parse(&g.render()).unwrap(), g);
    }

    #[test]
    fn validation_names_the_violated_rule() {
        let base = || GraphBuilder::new().room("A", 0).room("B", 0).exit("A").entrance("A");
        assert_eq!(
            base().build().unwrap_err(),
            GraphError::Disconnected(r("B"))
        );
        assert_eq!(
            base().edge("A", "B").edge("B", "B").build().unwrap_err(),
            GraphError::SelfLoop(r("B"))
        );
        assert_eq!(
            GraphBuilder::new().room("A", 0).room("B", 0).edge("A", "B").exit("B").entrance("A").build().unwrap_err(),
            GraphError::EntranceNotExit(r("A"))
        );
        assert_eq!(
            base().edge("A", "B").checkpoint("10.0.0.1", "Rp1", "C").build().unwrap_err(),
            GraphError::UnknownRoom(r("C"))
        );
        assert_eq!(
            base()
                .edge("A", "B")
                .checkpoint("10.0.0.1", "Rp1", "A")
                .checkpoint("10.0.0.01", "Rp2", "B")
                .build()
                .unwrap_err(),
            GraphError::DuplicateCheckpoint(normalize_node_id("10.0.0.1").unwrap())
        );
        assert_eq!(
            GraphBuilder::new().room("A", 0).exit("A").build().unwrap_err(),
            GraphError::MissingEntrance
        );
        assert_eq!(base().room("A", 1).build().unwrap_err(), GraphError::DuplicateRoom(r("A")));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = BuildingGraph::parse("ROOM A 0\nROOM B x\n").unwrap_err();
        assert!(matches!(err, GraphError::Syntax { line: 2, .. }));
        let err = BuildingGraph::parse("# c\nWALL A B\n").unwrap_err();
        assert!(matches!(err, GraphError::Syntax { line: 2, .. }));
        let err = BuildingGraph::parse("ROOM A 0\nCHECKPOINT 1.2.3 Rp1 A\n").unwrap_err();
        assert!(matches!(err, GraphError::Field { line: 2, .. }));
    }

    #[test]
    fn shortest_path_breaks_ties_lexicographically() {
        let g = GraphBuilder::new()
            .room("S", 0)
            .room("B", 0)
            .room("A", 0)
            .room("X", 0)
            .edge("S", "B")
            .edge("S", "A")
            .edge("A", "X")
            .edge("B", "X")
            .exit("X")
            .entrance("X")
            .build()
            .unwrap();
        assert_eq!(
            g.shortest_path(&r("S"), &r("X"), |_| true).unwrap(),
            vec![r("S"), r("A"), r("X")]
        );
    }
}

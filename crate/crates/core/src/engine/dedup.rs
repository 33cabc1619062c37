// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{NodeId, ReadEvent, TagId, Timestamp};

pub const DEFAULT_DEDUP_WINDOW_S: i64 = 2;

/// Streaming duplicate filter keyed by (tag, node).
///
/// A read is a duplicate when any read of the same tag at the same node seen
/// before it (kept or not) lies within `window_s` seconds. Bursts of reads
/// spaced closer than the window therefore collapse onto their first read,
/// and presenting an already-seen read again is always a no-op.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deduper {
    window_s: i64,
    seen: BTreeMap<(TagId, NodeId), BTreeSet<i64>>,
}

impl Deduper {
    pub fn new(window_s: i64) -> Self {
        assert!(window_s >= 0, "dedup window must be non-negative");
        Self {
            window_s,
            seen: BTreeMap::new(),
        }
    }

    pub fn window_s(&self) -> i64 {
        self.window_s
    }

    pub(crate) fn seen_groups(&self) -> impl Iterator<Item = (&(TagId, NodeId), &BTreeSet<i64>)> {
        self.seen.iter()
    }

    pub(crate) fn restore_group(&mut self, tag: TagId, node: NodeId, times: impl IntoIterator<Item = i64>) {
        self.seen.entry((tag, node)).or_default().extend(times);
    }

    pub fn is_duplicate(&self, tag: &TagId, node: &NodeId, at: Timestamp) -> bool {
        let t = at.to_epoch_seconds();
        self.seen
            .get(&(*tag, node.clone()))
            .is_some_and(|s| s.range(t - self.window_s..=t + self.window_s).next().is_some())
    }

    /// Records the read and reports whether it survives.
    pub fn admit(&mut self, tag: &TagId, node: &NodeId, at: Timestamp) -> bool {
        let dup = self.is_duplicate(tag, node, at);
        self.seen
            .entry((*tag, node.clone()))
            .or_default()
            .insert(at.to_epoch_seconds());
        !dup
    }
}

/// Batch form of [`Deduper`]: survivors in input order.
pub fn dedupe(events: &[ReadEvent], window_s: i64) -> Vec<ReadEvent> {
    let mut d = Deduper::new(window_s);
    events
        .iter()
        .filter(|e| d.admit(&e.tag, &e.node, e.observed_at))
        .cloned()
        .collect()
}

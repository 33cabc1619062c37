// SPDX-License-Identifier: Apache-2.0

//! Every text decoder, fed mutated copies of the fuzz corpus seeds: no
//! panics, and whatever is accepted re-encodes to something that decodes
//! to the same value.

use std::path::PathBuf;
use std::sync::Arc;

use proptest::prelude::*;
use proptest::sample::Index;

use roomtrack_core::engine::{Engine, EngineConfig, LogRecord};
use roomtrack_core::evac::{evac_routes, AlertNotification};
use roomtrack_core::graph::BuildingGraph;
use roomtrack_core::model::{normalize_node_id, parse_timestamp, validate_tag_id, Name, RoomId};
use roomtrack_core::node::{parse_trace, render_trace};
use roomtrack_core::sim::parse_scenario;
use roomtrack_core::store::{decode_line, encode_line};
use roomtrack_core::wire::{
    batch_id, decode_checkpoint_report, decode_heartbeat, decode_report_payload, decode_tag_roster,
    encode_checkpoint_report, encode_heartbeat, encode_report_payload, encode_tag_roster, frame_message, split_frame,
    unframe, Reply,
};

fn seeds(target: &str) -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<String> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| std::fs::read_to_string(e.unwrap().path()).unwrap())
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

/// Characters that matter to at least one grammar.
const POOL: &[char] = &[
    '|', ',', '<', '>', '=', ' ', '\n', '\t', '#', ':', '.', '-', 'T', '0', '1', '9', 'A', 'F', 'a', 'f', 'x', '\r',
    'é', '\u{2028}', '\0',
];

#[derive(Debug, Clone)]
enum Edit {
    Insert(Index, Index),
    Delete(Index),
    Replace(Index, Index),
    Duplicate(Index, Index),
    Truncate(Index),
}

fn edit() -> impl Strategy<Value = Edit> {
    prop_oneof![
        (any::<Index>(), any::<Index>()).prop_map(|(a, b)| Edit::Insert(a, b)),
        any::<Index>().prop_map(Edit::Delete),
        (any::<Index>(), any::<Index>()).prop_map(|(a, b)| Edit::Replace(a, b)),
        (any::<Index>(), any::<Index>()).prop_map(|(a, b)| Edit::Duplicate(a, b)),
        any::<Index>().prop_map(Edit::Truncate),
    ]
}

fn mutate(seed: &str, edits: &[Edit]) -> String {
    let mut c: Vec<char> = seed.chars().collect();
    for e in edits {
        let n = c.len();
        match e {
            Edit::Insert(at, ch) => c.insert(at.index(n + 1), POOL[ch.index(POOL.len())]),
            Edit::Delete(at) if n > 0 => {
                c.remove(at.index(n));
            }
            Edit::Replace(at, ch) if n > 0 => c[at.index(n)] = POOL[ch.index(POOL.len())],
            Edit::Duplicate(from, len) if n > 0 => {
                let start = from.index(n);
                let end = (start + len.index(16) + 1).min(n);
                let piece: Vec<char> = c[start..end].to_vec();
                c.splice(end..end, piece);
            }
            Edit::Truncate(at) => c.truncate(at.index(n + 1)),
            _ => {}
        }
    }
    c.into_iter().collect()
}

fn inputs(target: &'static str) -> impl Strategy<Value = String> {
    let s = seeds(target);
    prop_oneof![
        3 => (proptest::sample::select(s), proptest::collection::vec(edit(), 0..6)).prop_map(|(s, e)| mutate(&s, &e)),
        1 => ".{0,200}",
    ]
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 4000,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn roster(s in inputs("wire_roster")) {
        if let Ok(r) = decode_tag_roster(&s) {
            let canon = encode_tag_roster(&r);
            prop_assert_eq!(decode_tag_roster(&canon), Ok(r));
        }
    }

    #[test]
    fn report(s in inputs("wire_report")) {
        if let Ok(r) = decode_checkpoint_report(&s) {
            prop_assert_eq!(decode_checkpoint_report(&encode_checkpoint_report(&r)), Ok(r));
        }
    }

    #[test]
    fn payload(s in inputs("wire_payload")) {
        if let Ok(p) = decode_report_payload(&s) {
            prop_assert_eq!(p.report.records.len(), p.tags.entries.len());
            let canon = encode_report_payload(&p);
            prop_assert_eq!(batch_id(&canon).len(), 16);
            prop_assert_eq!(decode_report_payload(&canon), Ok(p));
        }
    }

    #[test]
    fn heartbeat(s in inputs("wire_heartbeat")) {
        if let Ok(h) = decode_heartbeat(&s) {
            prop_assert_eq!(decode_heartbeat(&encode_heartbeat(&h)), Ok(h));
        }
    }

    #[test]
    fn frames(s in inputs("frame")) {
        let data = s.as_bytes();
        if let Ok(f) = unframe(data) {
            prop_assert_eq!(frame_message(f.kind, &f.payload).unwrap(), data);
        }
        let mut rest = data;
        while let Ok(Some((f, used))) = split_frame(rest) {
            prop_assert!(used > 0 && used <= rest.len());
            prop_assert_eq!(frame_message(f.kind, &f.payload).unwrap(), &rest[..used]);
            rest = &rest[used..];
        }
    }

    #[test]
    fn replies(s in inputs("reply")) {
        if let Some(r) = Reply::decode(&s) {
            prop_assert_eq!(Reply::decode(&r.encode()), Some(r));
        }
    }

    #[test]
    fn identifiers(s in inputs("identifiers")) {
        if let Ok(t) = validate_tag_id(&s) {
            prop_assert_eq!(validate_tag_id(t.as_str()), Ok(t));
        }
        if let Ok(n) = normalize_node_id(&s) {
            prop_assert_eq!(normalize_node_id(n.as_str()), Ok(n));
        }
        if let Ok(ts) = parse_timestamp(&s) {
            prop_assert_eq!(ts.to_string(), s.clone());
        }
        if let Ok(r) = RoomId::new(&s) {
            prop_assert_eq!(r.as_str(), s.as_str());
        }
        if let Ok(n) = Name::new(&s) {
            prop_assert_eq!(n.as_str(), s.as_str());
        }
    }

    #[test]
    fn floor_plans(s in inputs("floor_plan")) {
        if let Ok(g) = BuildingGraph::parse(&s) {
            let again = BuildingGraph::parse(&g.render()).unwrap();
            prop_assert_eq!(again.render(), g.render());
            prop_assert_eq!(evac_routes(&g).len(), g.room_count());
        }
    }

    #[test]
    fn log_lines(s in inputs("log_line")) {
        if let Ok(rec) = LogRecord::parse(&s) {
            prop_assert_eq!(rec.render(), s.clone());
        }
        if let Some(seq) = s.split('\t').next().and_then(|f| f.parse::<u64>().ok()) {
            if let Ok(rec) = decode_line(&s, seq) {
                prop_assert_eq!(encode_line(&rec), format!("{s}\n"));
            }
        }
    }

    #[test]
    fn traces(s in inputs("trace")) {
        if let Ok(entries) = parse_trace(&s) {
            prop_assert_eq!(parse_trace(&render_trace(&entries)).unwrap(), entries);
        }
    }

    #[test]
    fn outbox_lines(s in inputs("outbox_line")) {
        if let Ok(n) = AlertNotification::parse_line(&s) {
            prop_assert_eq!(AlertNotification::parse_line(&n.to_line()), Ok(n));
        }
    }

    #[test]
    fn scenarios(s in inputs("scenario")) {
        if let Ok(p) = parse_scenario(&s) {
            prop_assert!(p.validate().is_ok());
        }
    }

    #[test]
    fn snapshot_states(s in inputs("snapshot_state")) {
        let graph = Arc::new(BuildingGraph::default_scenario());
        if let Ok(e) = Engine::decode_state(graph.clone(), EngineConfig::default(), &s) {
            let _ = e.occupancy(None);
            let text = e.encode_state();
            let again = Engine::decode_state(graph, EngineConfig::default(), &text).unwrap();
            prop_assert_eq!(again.encode_state(), text);
        }
    }
}

// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use std::sync::Arc;

use roomtrack_core::engine::{Engine, EngineConfig};
use roomtrack_core::graph::BuildingGraph;

fuzz_target!(|data: &str| {
    let graph = Arc::new(BuildingGraph::default_scenario());
    if let Ok(e) = Engine::decode_state(graph.clone(), EngineConfig::default(), data) {
        // whatever was accepted must answer queries and re-encode stably
        let _ = e.occupancy(None);
        let text = e.encode_state();
        let again = Engine::decode_state(graph, EngineConfig::default(), &text).expect("re-decodes");
        assert_eq!(again.encode_state(), text);
    }
});

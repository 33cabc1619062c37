// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use roomtrack_core::evac::evac_routes;
use roomtrack_core::graph::BuildingGraph;

fuzz_target!(|data: &str| {
    if let Ok(g) = BuildingGraph::parse(data) {
        let again = BuildingGraph::parse(&g.render()).expect("rendered plans parse");
        assert_eq!(again.render(), g.render());
        // accepted plans are connected with at least one exit
        assert_eq!(evac_routes(&g).len(), g.room_count());
    }
});

// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use roomtrack_core::sim::parse_scenario;

fuzz_target!(|data: &str| {
    if let Ok(p) = parse_scenario(data) {
        assert!(p.validate().is_ok());
    }
});

// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use roomtrack_core::node::{parse_trace, render_trace};

fuzz_target!(|data: &str| {
    if let Ok(entries) = parse_trace(data) {
        assert!(entries.windows(2).all(|w| w[0].1 <= w[1].1));
        assert_eq!(parse_trace(&render_trace(&entries)).unwrap(), entries);
    }
});

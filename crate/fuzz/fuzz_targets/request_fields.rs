// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use roomtrack_gateway::http::parse_fields;

fuzz_target!(|data: &str| {
    if let Ok(f) = parse_fields(data) {
        let text: String = f.iter().map(|(k, v)| format!("{k}: {v}\n")).collect();
        if f.keys().all(|k| !k.is_empty() && !k.contains(':')) {
            assert_eq!(parse_fields(&text), Ok(f));
        }
    }
});

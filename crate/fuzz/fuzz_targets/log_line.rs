// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use roomtrack_core::engine::LogRecord;
use roomtrack_core::store::{decode_line, encode_line};

fuzz_target!(|data: &str| {
    if let Ok(rec) = LogRecord::parse(data) {
        assert_eq!(rec.render(), data);
    }
    if let Some(seq) = data.split('\t').next().and_then(|s| s.parse::<u64>().ok()) {
        if let Ok(rec) = decode_line(data, seq) {
            assert_eq!(encode_line(&rec), format!("{data}\n"));
        }
    }
});

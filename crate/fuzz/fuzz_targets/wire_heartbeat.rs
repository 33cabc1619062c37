// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use roomtrack_core::wire::{decode_heartbeat, encode_heartbeat};

fuzz_target!(|data: &str| {
    if let Ok(h) = decode_heartbeat(data) {
        assert_eq!(decode_heartbeat(&encode_heartbeat(&h)).as_ref(), Ok(&h));
    }
});

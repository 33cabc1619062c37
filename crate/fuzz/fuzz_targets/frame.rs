// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use roomtrack_core::wire::{frame_message, split_frame, unframe, MAX_FRAME_BYTES};

fuzz_target!(|data: &[u8]| {
    if let Ok(f) = unframe(data) {
        assert_eq!(frame_message(f.kind, &f.payload).unwrap(), data);
    }
    // a stream splits into frames that each re-encode to the bytes consumed
    let mut rest = data;
    while let Ok(Some((f, used))) = split_frame(rest) {
        assert!(used > 0 && used <= rest.len() && used <= MAX_FRAME_BYTES);
        assert_eq!(frame_message(f.kind, &f.payload).unwrap(), &rest[..used]);
        rest = &rest[used..];
    }
});

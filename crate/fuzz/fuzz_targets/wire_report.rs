// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use roomtrack_core::wire::{decode_checkpoint_report, encode_checkpoint_report};

fuzz_target!(|data: &str| {
    if let Ok(r) = decode_checkpoint_report(data) {
        let canon = encode_checkpoint_report(&r);
        assert_eq!(decode_checkpoint_report(&canon).as_ref(), Ok(&r));
    }
});

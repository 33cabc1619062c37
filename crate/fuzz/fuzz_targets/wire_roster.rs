// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use roomtrack_core::wire::{decode_tag_roster, encode_tag_roster};

fuzz_target!(|data: &str| {
    if let Ok(r) = decode_tag_roster(data) {
        let canon = encode_tag_roster(&r);
        assert_eq!(decode_tag_roster(&canon).as_ref(), Ok(&r));
        assert_eq!(encode_tag_roster(&decode_tag_roster(&canon).unwrap()), canon);
    }
});

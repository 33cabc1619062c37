// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use roomtrack_core::wire::Reply;

fuzz_target!(|data: &str| {
    if let Some(r) = Reply::decode(data) {
        let line = r.encode();
        assert!(line.ends_with('\n'));
        assert_eq!(Reply::decode(&line), Some(r));
    }
});

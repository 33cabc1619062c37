// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use roomtrack_core::wire::{batch_id, decode_report_payload, encode_report_payload};

fuzz_target!(|data: &str| {
    if let Ok(p) = decode_report_payload(data) {
        assert_eq!(p.report.records.len(), p.tags.entries.len());
        let canon = encode_report_payload(&p);
        assert_eq!(decode_report_payload(&canon).as_ref(), Ok(&p));
        assert_eq!(batch_id(&canon).len(), 16);
    }
});

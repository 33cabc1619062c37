// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use roomtrack_core::evac::AlertNotification;

fuzz_target!(|data: &str| {
    if let Ok(n) = AlertNotification::parse_line(data) {
        assert_eq!(AlertNotification::parse_line(&n.to_line()), Ok(n));
    }
});

// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use roomtrack_core::model::{normalize_node_id, parse_timestamp, validate_tag_id, Name, RoomId};

fuzz_target!(|data: &str| {
    if let Ok(t) = validate_tag_id(data) {
        assert_eq!(validate_tag_id(t.as_str()), Ok(t));
    }
    if let Ok(n) = normalize_node_id(data) {
        assert_eq!(normalize_node_id(n.as_str()).as_ref(), Ok(&n));
    }
    if let Ok(ts) = parse_timestamp(data) {
        assert_eq!(parse_timestamp(&ts.to_string()), Ok(ts));
    }
    if let Ok(r) = RoomId::new(data) {
        assert_eq!(r.as_str(), data);
    }
    if let Ok(n) = Name::new(data) {
        assert_eq!(n.as_str(), data);
    }
});

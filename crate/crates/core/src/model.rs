// SPDX-License-Identifier: Apache-2.0

//! Domain values shared by every part of the system.
//!
//! All types here are validated on construction and immutable afterwards.
//! Each has a single canonical text form; `parse(format(x)) == x` holds for
//! every valid value, and equality is defined on the canonical form.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Characters reserved by the wire grammars; they may not appear in names.
pub const RESERVED_CHARS: [char; 4] = ['|', ',', '<', '>'];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("malformed tag id {0:?}: expected exactly 10 hexadecimal digits")]
    MalformedTagId(String),
    #[error("malformed node id {0:?}: expected dotted-quad IPv4 or colon-separated MAC")]
    MalformedNodeId(String),
    #[error("malformed timestamp {raw:?}: {reason}")]
    MalformedTimestamp { raw: String, reason: &'static str },
    #[error("malformed room id {0:?}")]
    MalformedRoomId(String),
    #[error("malformed name {0:?}: must be non-empty, single-line, without | , < >")]
    MalformedName(String),
    #[error("unknown demographic {0:?}")]
    MalformedDemographic(String),
}

/// RFID tag identity: exactly 10 hex digits, stored uppercase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TagId([u8; 10]);

impl TagId {
    pub const LEN: usize = 10;

    pub fn as_str(&self) -> &str {
        // Only ASCII hex digits are ever stored.
        std::str::from_utf8(&self.0).expect("tag id is ascii")
    }
}

/// Validates and normalizes a raw tag identifier.
pub fn validate_tag_id(raw: &str) -> Result<TagId, ModelError> {
    let bytes = raw.as_bytes();
    if bytes.len() != TagId::LEN || !bytes.iter().all(u8::is_ascii_hexdigit) {
        return Err(ModelError::MalformedTagId(raw.to_string()));
    }
    let mut out = [0u8; TagId::LEN];
    for (dst, src) in out.iter_mut().zip(bytes) {
        *dst = src.to_ascii_uppercase();
    }
    Ok(TagId(out))
}

impl FromStr for TagId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        validate_tag_id(s)
    }
}

impl TryFrom<String> for TagId {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        validate_tag_id(&s)
    }
}

impl From<TagId> for String {
    fn from(t: TagId) -> String {
        t.as_str().to_string()
    }
}

impl fmt::Display for TagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Network identity of a reader node: an IPv4 address or a MAC address.
///
/// Canonical forms: IPv4 octets in decimal without leading zeros, MAC as six
/// lowercase two-digit hex octets separated by `:`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(String);

impl NodeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_mac(&self) -> bool {
        self.0.contains(':')
    }
}

pub fn normalize_node_id(raw: &str) -> Result<NodeId, ModelError> {
    let bad = || ModelError::MalformedNodeId(raw.to_string());
    if raw.contains(':') {
        let parts: Vec<&str> = raw.split(':').collect();
        if parts.len() != 6
            || !parts
                .iter()
                .all(|p| p.len() == 2 && p.bytes().all(|b| b.is_ascii_hexdigit()))
        {
            return Err(bad());
        }
        return Ok(NodeId(raw.to_ascii_lowercase()));
    }
    let parts: Vec<&str> = raw.split('.').collect();
    if parts.len() != 4 {
        return Err(bad());
    }
    let mut octets = [0u8; 4];
    for (slot, part) in octets.iter_mut().zip(&parts) {
        // Bounded length keeps "0000000001" style inputs from overflowing the parse.
        if part.is_empty() || part.len() > 3 || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let v: u16 = part.parse().map_err(|_| bad())?;
        *slot = u8::try_from(v).map_err(|_| bad())?;
    }
    Ok(NodeId(format!(
        "{}.{}.{}.{}",
        octets[0], octets[1], octets[2], octets[3]
    )))
}

impl FromStr for NodeId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        normalize_node_id(s)
    }
}

impl TryFrom<String> for NodeId {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        normalize_node_id(&s)
    }
}

impl From<NodeId> for String {
    fn from(n: NodeId) -> String {
        n.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Wall-clock instant with one-second resolution and no zone.
///
/// Text form is `DD-MM-YYYYThh:mm:ss`, always zero padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Timestamp(NaiveDateTime);

impl Timestamp {
    pub const TEXT_LEN: usize = 19;

    pub fn from_ymd_hms(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> Option<Self> {
        let dt = NaiveDate::from_ymd_opt(y, mo, d)?.and_hms_opt(h, mi, s)?;
        Some(Self(dt))
    }

    /// Seconds since 1970-01-01T00:00:00 in the site's local clock.
    pub fn to_epoch_seconds(self) -> i64 {
        self.0.and_utc().timestamp()
    }

    pub fn from_epoch_seconds(secs: i64) -> Option<Self> {
        chrono::DateTime::from_timestamp(secs, 0)
            .map(|d| d.naive_utc())
            .filter(|d| (0..=9999).contains(&d.year()))
            .map(Self)
    }

    pub fn plus_seconds(self, secs: i64) -> Self {
        let t = self.0 + Duration::seconds(secs);
        assert!((0..=9999).contains(&t.year()), "timestamp out of range");
        Self(t)
    }

    /// Signed difference `self - earlier` in seconds.
    pub fn seconds_since(self, earlier: Timestamp) -> i64 {
        (self.0 - earlier.0).num_seconds()
    }

    pub fn now() -> Self {
        let now = chrono::Local::now().naive_local();
        Self(now.with_nanosecond(0).unwrap_or(now))
    }
}

pub fn parse_timestamp(raw: &str) -> Result<Timestamp, ModelError> {
    let bad = |reason| ModelError::MalformedTimestamp {
        raw: raw.to_string(),
        reason,
    };
    let b = raw.as_bytes();
    if b.len() != Timestamp::TEXT_LEN {
        return Err(bad("expected DD-MM-YYYYThh:mm:ss"));
    }
    let shape_ok = b.iter().enumerate().all(|(i, c)| match i {
        2 | 5 => *c == b'-',
        10 => *c == b'T',
        13 | 16 => *c == b':',
        _ => c.is_ascii_digit(),
    });
    if !shape_ok {
        return Err(bad("expected DD-MM-YYYYThh:mm:ss"));
    }
    let num = |r: std::ops::Range<usize>| -> u32 { raw[r].parse().expect("digits checked") };
    let (d, mo, y) = (num(0..2), num(3..5), num(6..10));
    let (h, mi, s) = (num(11..13), num(14..16), num(17..19));
    let date = NaiveDate::from_ymd_opt(y as i32, mo, d).ok_or_else(|| bad("no such calendar date"))?;
    let dt = date
        .and_hms_opt(h, mi, s)
        .ok_or_else(|| bad("time of day out of range"))?;
    Ok(Timestamp(dt))
}

pub fn format_timestamp(t: Timestamp) -> String {
    t.to_string()
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // years are kept within 0..=9999, so the width is fixed
        let (d, t) = (self.0.date(), self.0.time());
        write!(
            f,
            "{:02}-{:02}-{:04}T{:02}:{:02}:{:02}",
            d.day(),
            d.month(),
            d.year(),
            t.hour(),
            t.minute(),
            t.second()
        )
    }
}

impl FromStr for Timestamp {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_timestamp(s)
    }
}

impl TryFrom<String> for Timestamp {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        parse_timestamp(&s)
    }
}

impl From<Timestamp> for String {
    fn from(t: Timestamp) -> String {
        format_timestamp(t)
    }
}

/// Room identifier: a non-empty token without whitespace or grammar characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RoomId(String);

impl RoomId {
    pub fn new(raw: &str) -> Result<Self, ModelError> {
        let ok = !raw.is_empty()
            && raw
                .chars()
                .all(|c| !c.is_whitespace() && !c.is_control() && !RESERVED_CHARS.contains(&c) && c != '=' && c != '#');
        if ok {
            Ok(Self(raw.to_string()))
        } else {
            Err(ModelError::MalformedRoomId(raw.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for RoomId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoomId::new(s)
    }
}

impl TryFrom<String> for RoomId {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        RoomId::new(&s)
    }
}

impl From<RoomId> for String {
    fn from(r: RoomId) -> String {
        r.0
    }
}

impl fmt::Display for RoomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Human-readable label (visitor or checkpoint name).
///
/// Names are trimmed, non-empty, single-line and free of the wire grammar's
/// reserved characters. They are never escaped.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Name(String);

impl Name {
    pub fn new(raw: &str) -> Result<Self, ModelError> {
        let ok = !raw.is_empty()
            && raw.trim() == raw
            && !raw.contains(|c: char| c.is_control() || RESERVED_CHARS.contains(&c));
        if ok {
            Ok(Self(raw.to_string()))
        } else {
            Err(ModelError::MalformedName(raw.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for Name {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Name::new(s)
    }
}

impl TryFrom<String> for Name {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Name::new(&s)
    }
}

impl From<Name> for String {
    fn from(n: Name) -> String {
        n.0
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Demographic {
    Female,
    Male,
    Unspecified,
}

impl Demographic {
    pub const ALL: [Demographic; 3] = [Demographic::Female, Demographic::Male, Demographic::Unspecified];

    pub fn as_str(self) -> &'static str {
        match self {
            Demographic::Female => "female",
            Demographic::Male => "male",
            Demographic::Unspecified => "unspecified",
        }
    }
}

impl FromStr for Demographic {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "female" => Ok(Demographic::Female),
            "male" => Ok(Demographic::Male),
            "unspecified" => Ok(Demographic::Unspecified),
            _ => Err(ModelError::MalformedDemographic(s.to_string())),
        }
    }
}

impl fmt::Display for Demographic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisitorStatus {
    Active,
    Returned,
}

/// Registration record for one issuance of a tag.
///
/// Returning a tag closes the record; issuing the same tag again opens a new
/// one, so earlier records keep their history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visitor {
    pub tag: TagId,
    pub name: Name,
    pub demographic: Demographic,
    pub issued_at: Timestamp,
    pub status: VisitorStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub node: NodeId,
    pub name: Name,
    pub location: RoomId,
    pub last_report: Option<Timestamp>,
}

/// One tag observation, as ingested by the gateway.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadEvent {
    pub tag: TagId,
    pub node: NodeId,
    pub observed_at: Timestamp,
    pub seq: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tag_id_examples() {
        assert_eq!(validate_tag_id("01008C7200").unwrap().as_str(), "01008C7200");
        assert_eq!(validate_tag_id("01008c7200").unwrap().as_str(), "01008C7200");
        assert!(matches!(
            validate_tag_id("01008C720"),
            Err(ModelError::MalformedTagId(_))
        ));
        assert!(validate_tag_id("01008C72G0").is_err());
        assert!(validate_tag_id("01008C72000").is_err());
        assert!(validate_tag_id("").is_err());
    }

    #[test]
    fn node_id_examples() {
        assert_eq!(normalize_node_id("192.168.0.1").unwrap().as_str(), "192.168.0.1");
        assert_eq!(
            normalize_node_id("B8:27:EB:01:02:03").unwrap().as_str(),
            "b8:27:eb:01:02:03"
        );
        assert!(matches!(
            normalize_node_id("192.168.0.256"),
            Err(ModelError::MalformedNodeId(_))
        ));
        assert_eq!(normalize_node_id("010.001.000.009").unwrap().as_str(), "10.1.0.9");
        assert_eq!(
            normalize_node_id("192.168.000.1").unwrap(),
            normalize_node_id("192.168.0.1").unwrap()
        );
        for bad in ["", "1.2.3", "1.2.3.4.5", "1..2.3", "b8:27:eb:01:02", "b8:27:eb:01:02:0g", "1.2.3.-4", "1.2.3.1000"] {
            assert!(normalize_node_id(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn timestamp_examples() {
        let t = parse_timestamp("28-09-2017T11:08:15").unwrap();
        assert_eq!(t, Timestamp::from_ymd_hms(2017, 9, 28, 11, 8, 15).unwrap());
        assert_eq!(
            format_timestamp(parse_timestamp("01-01-2020T00:00:00").unwrap()),
            "01-01-2020T00:00:00"
        );
        assert!(matches!(
            parse_timestamp("31-02-2017T10:00:00"),
            Err(ModelError::MalformedTimestamp { .. })
        ));
        assert!(parse_timestamp("28-09-2017T24:00:00").is_err());
        assert!(parse_timestamp("28-09-2017 11:08:15").is_err());
        assert!(parse_timestamp("8-09-2017T11:08:15").is_err());
        assert!(parse_timestamp("29-02-2016T00:00:00").is_ok());
    }

    #[test]
    fn names_reject_reserved_characters() {
        assert!(Name::new("Visitor Name1").is_ok());
        for bad in ["", " lead", "a|b", "a,b", "<x", "x>", "two\nlines"] {
            assert!(Name::new(bad).is_err(), "{bad:?}");
        }
        assert!(RoomId::new("stairs_g1").is_ok());
        assert!(RoomId::new("Room 1").is_err());
    }

    proptest! {
        #[test]
        fn tag_id_canonical_roundtrip(raw in "[0-9a-fA-F]{10}") {
            let t = validate_tag_id(&raw).unwrap();
            prop_assert_eq!(validate_tag_id(t.as_str()).unwrap(), t);
            prop_assert_eq!(t.as_str(), raw.to_ascii_uppercase());
        }

        #[test]
        fn node_id_canonical_roundtrip(o in proptest::array::uniform4(0u8..=255), mac in proptest::array::uniform6(any::<u8>()), upper in any::<bool>()) {
            let ip = format!("{}.{}.{}.{}", o[0], o[1], o[2], o[3]);
            let n = normalize_node_id(&ip).unwrap();
            prop_assert_eq!(normalize_node_id(n.as_str()).unwrap(), n.clone());
            prop_assert_eq!(n.as_str(), ip.as_str());
            let m: Vec<String> = mac.iter().map(|b| if upper { format!("{b:02X}") } else { format!("{b:02x}") }).collect();
            let n = normalize_node_id(&m.join(":")).unwrap();
            prop_assert_eq!(normalize_node_id(n.as_str()).unwrap(), n.clone());
            prop_assert_eq!(n.as_str(), m.join(":").to_ascii_lowercase());
        }

        #[test]
        fn timestamp_roundtrip(secs in 0i64..253_402_300_799) {
            let t = Timestamp::from_epoch_seconds(secs).unwrap();
            let text = format_timestamp(t);
            prop_assert_eq!(text.len(), Timestamp::TEXT_LEN);
            prop_assert_eq!(parse_timestamp(&text).unwrap(), t);
            prop_assert_eq!(t.to_epoch_seconds(), secs);
        }
    }
}

//! Line-delimited JSON wire format.
//!
//! One object per line, fields in the fixed order `event`, `args`,
//! `report`, `error`, `seq`; absent fields are omitted. Unknown fields,
//! raw newlines and lines over [`MAX_LINE`] bytes are rejected.
//!
//! ```text
//! {"event":"Login","seq":1}
//! {"event":"LoginRequest","args":{"pwd":"pwdx","username":"ali"},"seq":2}
//! {"event":"LoginResponse","report":"Success","seq":2}
//! {"error":"malformed"}
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Report;
use crate::session::{EventKind, EventName, Output, ProtocolEvent};

/// Longest accepted line, newline excluded.
pub const MAX_LINE: usize = 64 * 1024;

pub const ERR_MALFORMED: &str = "malformed";
pub const ERR_REFUSED: &str = "refused";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireMessage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub args: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<Report>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("line longer than {MAX_LINE} bytes")]
    TooLong,
    #[error("line is not UTF-8")]
    NotUtf8,
    #[error("line is not a wire message: {0}")]
    Syntax(String),
    #[error("unknown event {0:?}")]
    UnknownEvent(String),
    #[error("message has no event")]
    NoEvent,
    #[error("{0} carries fields it should not")]
    Shape(String),
}

impl WireMessage {
    /// Canonical single-line encoding, without the trailing newline.
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }

    /// Parses one line (trailing `\n` or `\r\n` allowed).
    pub fn decode(line: &[u8]) -> Result<Self, WireError> {
        let line = line.strip_suffix(b"\n").unwrap_or(line);
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        if line.len() > MAX_LINE {
            return Err(WireError::TooLong);
        }
        let text = std::str::from_utf8(line).map_err(|_| WireError::NotUtf8)?;
        serde_json::from_str(text).map_err(|e| WireError::Syntax(e.to_string()))
    }

    pub fn error(kind: &str, seq: Option<u64>) -> Self {
        WireMessage { error: Some(kind.to_owned()), seq, ..Default::default() }
    }

    pub fn from_event(event: &ProtocolEvent, seq: Option<u64>) -> Self {
        let mut m = WireMessage { event: Some(event.name().to_string()), seq, ..Default::default() };
        match event {
            ProtocolEvent::Announce(_) => {}
            ProtocolEvent::Request(_, args) => m.args = Some(args.clone()),
            ProtocolEvent::Response(_, report, outputs) => {
                m.report = Some(*report);
                if !outputs.is_empty() {
                    m.args = Some(outputs.clone());
                }
            }
        }
        m
    }

    pub fn to_event(&self) -> Result<ProtocolEvent, WireError> {
        let raw = self.event.as_deref().ok_or(WireError::NoEvent)?;
        let name: EventName = raw.parse().map_err(|_| WireError::UnknownEvent(raw.to_owned()))?;
        if self.error.is_some() {
            return Err(WireError::Shape(raw.to_owned()));
        }
        match name.kind {
            EventKind::Announce if self.args.is_none() && self.report.is_none() => Ok(ProtocolEvent::Announce(name.op)),
            EventKind::Request if self.report.is_none() => {
                Ok(ProtocolEvent::Request(name.op, self.args.clone().unwrap_or_default()))
            }
            EventKind::Response => match self.report {
                Some(r) => Ok(ProtocolEvent::Response(name.op, r, self.args.clone().unwrap_or_default())),
                None => Err(WireError::Shape(raw.to_owned())),
            },
            _ => Err(WireError::Shape(raw.to_owned())),
        }
    }

    /// The reply for a machine output. Accepted announcements are echoed so
    /// that every client line gets exactly one reply line.
    pub fn reply(input: &ProtocolEvent, output: Option<&Output>, seq: Option<u64>) -> Self {
        match output {
            Some(Output::Event(e)) => Self::from_event(e, seq),
            Some(Output::Refused(name)) => WireMessage {
                event: Some(name.to_string()),
                error: Some(ERR_REFUSED.into()),
                seq,
                ..Default::default()
            },
            None => Self::from_event(input, seq),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{Args, Operation};

    #[test]
    fn canonical_field_order() {
        let m = WireMessage {
            event: Some("LoginResponse".into()),
            args: Some(BTreeMap::from([("b".into(), "2".into()), ("a".into(), "1".into())])),
            report: Some(Report::Success),
            error: Some("x".into()),
            seq: Some(7),
        };
        assert_eq!(
            m.encode(),
            r#"{"event":"LoginResponse","args":{"a":"1","b":"2"},"report":"Success","error":"x","seq":7}"#
        );
    }

    #[test]
    fn round_trips_events() {
        let events = [
            ProtocolEvent::Announce(Operation::Login),
            ProtocolEvent::request(Operation::Login, [("username", "ali"), ("pwd", "pw\"d\n")]),
            ProtocolEvent::Response(Operation::ProxyList, Report::Failure, Args::new()),
        ];
        for e in events {
            let line = WireMessage::from_event(&e, Some(3)).encode();
            assert!(!line.contains('\n'));
            let back = WireMessage::decode(line.as_bytes()).unwrap();
            assert_eq!(back.seq, Some(3));
            assert_eq!(back.to_event().unwrap(), e);
        }
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(WireMessage::decode(b"%%%").is_err());
        assert!(WireMessage::decode(br#"{"event":"Login","extra":1}"#).is_err());
        assert!(WireMessage::decode(b"{\"event\":\"Login\"}\xff").is_err());
        let long = format!(r#"{{"event":"{}"}}"#, "a".repeat(MAX_LINE));
        assert_eq!(WireMessage::decode(long.as_bytes()), Err(WireError::TooLong));
        let m = WireMessage::decode(br#"{"event":"Login","args":{}}"#).unwrap();
        assert!(m.to_event().is_err());
        let m = WireMessage::decode(br#"{"event":"login"}"#).unwrap();
        assert!(m.to_event().is_err());
        let m = WireMessage::decode(br#"{"seq":1}"#).unwrap();
        assert_eq!(m.to_event(), Err(WireError::NoEvent));
    }
}

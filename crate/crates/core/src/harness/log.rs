//! Line-delimited event log. Records are appended in simulation order, so
//! two runs can be compared with a plain byte diff.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{MessageId, Timestamp, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogLevel {
    /// Errors and the end-of-run summary.
    Quiet,
    /// Trace events, sessions and receipts.
    #[default]
    Normal,
    /// Adds every advertisement and per-link byte counts for each tick.
    Verbose,
}

impl FromStr for LogLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "quiet" | "0" | "off" => Ok(LogLevel::Quiet),
            "normal" | "1" | "" => Ok(LogLevel::Normal),
            "verbose" | "2" | "debug" => Ok(LogLevel::Verbose),
            other => Err(format!("unknown log level {other:?} (quiet, normal, verbose)")),
        }
    }
}

impl fmt::Display for LogLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogLevel::Quiet => "quiet",
            LogLevel::Normal => "normal",
            LogLevel::Verbose => "verbose",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    SignedUp { user: UserId },
    ContactUp { a: UserId, b: UserId, bandwidth: u64 },
    ContactDown { a: UserId, b: UserId, untransferred: Vec<MessageId> },
    Published { message: MessageId },
    Followed { follower: UserId, followee: UserId },
    Unfollowed { follower: UserId, followee: UserId },
    CloudSynced { node: UserId, actions: usize, crl: usize },
    Revoked { user: UserId },
    Advertised { from: UserId, to: UserId, entries: usize },
    SessionEstablished { session: u64, a: UserId, b: UserId },
    HandshakeRefused { a: UserId, b: UserId, refused_by: Option<UserId>, reason: String },
    SessionClosed { session: u64, a: UserId, b: UserId },
    LinkUsage { a: UserId, b: UserId, data_bytes: u64 },
    Delivered { message: MessageId, from: UserId, to: UserId, hops: u32 },
    Duplicate { message: MessageId, from: UserId, to: UserId },
    Dropped { message: MessageId, from: UserId, to: UserId, reason: String },
    ProtocolError { a: UserId, b: UserId, error: String },
    Finished { ticks: u64, deliveries: usize, protocol_errors: usize },
}

impl LogEvent {
    fn level(&self) -> LogLevel {
        match self {
            LogEvent::ProtocolError { .. } | LogEvent::Finished { .. } => LogLevel::Quiet,
            LogEvent::Advertised { .. } | LogEvent::LinkUsage { .. } => LogLevel::Verbose,
            _ => LogLevel::Normal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: Timestamp,
    #[serde(flatten)]
    pub event: LogEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    level: LogLevel,
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn new(level: LogLevel) -> Self {
        Self { level, records: Vec::new() }
    }

    pub fn level(&self) -> LogLevel {
        self.level
    }

    /// Whether events of `level` are kept; lets callers skip building them.
    pub fn enabled(&self, level: LogLevel) -> bool {
        level <= self.level
    }

    pub fn push(&mut self, t: Timestamp, event: LogEvent) {
        if self.enabled(event.level()) {
            self.records.push(LogRecord { t, event });
        }
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("log records serialize"));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_filter() {
        let a = UserId::new("ALICE00001").unwrap();
        let b = UserId::new("BOB0000001").unwrap();
        let events = [
            LogEvent::Advertised { from: a, to: b, entries: 1 },
            LogEvent::ContactUp { a, b, bandwidth: 1 },
            LogEvent::Finished { ticks: 1, deliveries: 0, protocol_errors: 0 },
        ];
        for (level, kept) in [(LogLevel::Quiet, 1), (LogLevel::Normal, 2), (LogLevel::Verbose, 3)] {
            let mut log = EventLog::new(level);
            for e in &events {
                log.push(0, e.clone());
            }
            assert_eq!(log.records().len(), kept, "{level}");
        }
    }

    #[test]
    fn jsonl_shape() {
        let mut log = EventLog::new(LogLevel::Normal);
        log.push(7, LogEvent::Revoked { user: UserId::new("ALICE00001").unwrap() });
        assert_eq!(log.to_jsonl(), "{\"t\":7,\"event\":\"revoked\",\"user\":\"ALICE00001\"}\n");
    }

    #[test]
    fn level_parsing() {
        assert_eq!("VERBOSE".parse::<LogLevel>(), Ok(LogLevel::Verbose));
        assert_eq!("0".parse::<LogLevel>(), Ok(LogLevel::Quiet));
        assert!("loud".parse::<LogLevel>().is_err());
    }
}

//! Line-delimited trace format.
//!
//! One JSON object per line, e.g.
//!
//! ```text
//! {"at":0,"kind":"follow","follower":"BOB0000001","followee":"ALICE00001"}
//! {"at":5,"kind":"publish","author":"ALICE00001","payload":"hello"}
//! {"at":60,"kind":"contact_up","a":"ALICE00001","b":"BOB0000001","bandwidth":2000}
//! {"at":180,"kind":"contact_down","a":"ALICE00001","b":"BOB0000001"}
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::RunConfig;
use crate::adhoc::{pair_key, Contact, Pair};
use crate::model::{Timestamp, UserId, MAX_PAYLOAD};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEventKind {
    ContactUp { a: UserId, b: UserId, bandwidth: u64 },
    ContactDown { a: UserId, b: UserId },
    Publish { author: UserId, payload: String },
    Follow { follower: UserId, followee: UserId },
    Unfollow { follower: UserId, followee: UserId },
    CloudSync { node: UserId },
    Revoke { user: UserId },
}

impl TraceEventKind {
    /// Order of kinds sharing a timestamp: links drop before anything else
    /// happens and come up after everything else.
    pub fn rank(&self) -> u8 {
        match self {
            TraceEventKind::ContactDown { .. } => 0,
            TraceEventKind::Revoke { .. } => 1,
            TraceEventKind::CloudSync { .. } => 2,
            TraceEventKind::Unfollow { .. } => 3,
            TraceEventKind::Follow { .. } => 4,
            TraceEventKind::Publish { .. } => 5,
            TraceEventKind::ContactUp { .. } => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub at: Timestamp,
    #[serde(flatten)]
    pub kind: TraceEventKind,
}

impl TraceEvent {
    pub fn new(at: Timestamp, kind: TraceEventKind) -> Self {
        Self { at, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("event {index}: {reason}")]
    Invalid { index: usize, reason: String },
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, TraceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TraceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_trace(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for event in events {
        out.push_str(&serde_json::to_string(event).expect("trace events serialize"));
        out.push('\n');
    }
    out
}

/// Checks a trace against a configuration and returns it in canonical order:
/// by time, then kind rank, then file order. Error indices refer to the
/// input order.
pub fn validate_trace(config: &RunConfig, events: &[TraceEvent]) -> Result<Vec<TraceEvent>, TraceError> {
    let invalid = |index: usize, reason: String| TraceError::Invalid { index, reason };
    for (i, pair) in events.windows(2).enumerate() {
        if pair[1].at < pair[0].at {
            return Err(invalid(i + 1, format!("time {} goes backwards from {}", pair[1].at, pair[0].at)));
        }
    }
    let mut ordered: Vec<(usize, &TraceEvent)> = events.iter().enumerate().collect();
    ordered.sort_by_key(|(i, e)| (e.at, e.kind.rank(), *i));

    let users = config.user_ids();
    let known = |index: usize, user: &UserId| {
        if users.contains(user) {
            Ok(())
        } else {
            Err(invalid(index, format!("unknown user {user}")))
        }
    };
    let mut following: BTreeSet<(UserId, UserId)> = config.follow_edges.iter().copied().collect();
    let mut open: BTreeMap<Pair, Timestamp> = BTreeMap::new();

    for (index, event) in &ordered {
        let index = *index;
        match &event.kind {
            TraceEventKind::ContactUp { a, b, bandwidth } => {
                known(index, a)?;
                known(index, b)?;
                if a == b {
                    return Err(invalid(index, format!("contact of {a} with itself")));
                }
                if *bandwidth == 0 {
                    return Err(invalid(index, "contact bandwidth must be positive".into()));
                }
                if open.insert(pair_key(*a, *b), event.at).is_some() {
                    return Err(invalid(index, format!("contact {a}-{b} is already up")));
                }
            }
            TraceEventKind::ContactDown { a, b } => {
                known(index, a)?;
                known(index, b)?;
                match open.remove(&pair_key(*a, *b)) {
                    None => return Err(invalid(index, format!("contact {a}-{b} goes down without coming up"))),
                    Some(start) if start >= event.at => {
                        return Err(invalid(index, format!("contact {a}-{b} has empty duration")))
                    }
                    Some(_) => {}
                }
            }
            TraceEventKind::Publish { author, payload } => {
                known(index, author)?;
                if payload.len() > MAX_PAYLOAD {
                    return Err(invalid(
                        index,
                        format!("payload of {} bytes exceeds {MAX_PAYLOAD}", payload.len()),
                    ));
                }
            }
            TraceEventKind::Follow { follower, followee } => {
                known(index, follower)?;
                known(index, followee)?;
                if follower == followee {
                    return Err(invalid(index, format!("{follower} cannot follow themselves")));
                }
                if !following.insert((*follower, *followee)) {
                    return Err(invalid(index, format!("{follower} already follows {followee}")));
                }
            }
            TraceEventKind::Unfollow { follower, followee } => {
                known(index, follower)?;
                known(index, followee)?;
                if !following.remove(&(*follower, *followee)) {
                    return Err(invalid(index, format!("{follower} does not follow {followee}")));
                }
            }
            TraceEventKind::CloudSync { node } => known(index, node)?,
            TraceEventKind::Revoke { user } => known(index, user)?,
        }
    }
    Ok(ordered.into_iter().map(|(_, e)| e.clone()).collect())
}

/// Pairs ContactUp/ContactDown events into intervals. Contacts still open at
/// the end of the trace close at `trace_end`.
pub fn contacts(events: &[TraceEvent], trace_end: Timestamp) -> Vec<Contact> {
    let mut open: BTreeMap<Pair, (UserId, UserId, Timestamp, u64)> = BTreeMap::new();
    let mut out = Vec::new();
    for event in events {
        match &event.kind {
            TraceEventKind::ContactUp { a, b, bandwidth } => {
                open.insert(pair_key(*a, *b), (*a, *b, event.at, *bandwidth));
            }
            TraceEventKind::ContactDown { a, b } => {
                if let Some((a, b, start, bandwidth)) = open.remove(&pair_key(*a, *b)) {
                    out.push(Contact { a, b, start, end: event.at, bandwidth });
                }
            }
            _ => {}
        }
    }
    for (_, (a, b, start, bandwidth)) in open {
        out.push(Contact { a, b, start, end: trace_end.max(start + 1), bandwidth });
    }
    out.sort_by_key(|c| (c.start, c.pair()));
    out
}

//! Synthetic scenarios: a random follow graph plus Poisson pairwise contacts
//! and publishes.

use rand::distributions::{Alphanumeric, Distribution};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::config::RunConfig;
use crate::harness::trace::{TraceEvent, TraceEventKind};
use crate::model::{UserId, MAX_PAYLOAD};
use crate::routing::RoutingSchemeKind;
use crate::security::SECONDS_PER_DAY;

/// Ids are `NODE` plus six digits.
pub const MAX_NODES: usize = 1_000_000;

/// Rough upper bound on a message frame on the wire, excluding payload.
const FRAME_OVERHEAD_ESTIMATE: u64 = 400;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceGenError {
    #[error("{0}")]
    Invalid(String),
}

fn default_payload_bytes() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceGenParams {
    pub n_nodes: usize,
    /// Seconds.
    pub duration: u64,
    pub mean_contacts_per_pair_per_day: f64,
    /// Inclusive range of contact lengths, seconds.
    pub contact_duration: (u64, u64),
    /// Bytes per second.
    pub bandwidth: u64,
    /// Messages per node per day.
    pub publish_rate: f64,
    pub follow_density: f64,
    #[serde(default = "default_payload_bytes")]
    pub payload_bytes: usize,
    /// Appends a chain of contacts through every node, out and back, after
    /// `duration`. Every message then has a time-respecting path to every
    /// node, with enough bandwidth to carry the whole backlog.
    #[serde(default)]
    pub connectivity_sweep: bool,
    #[serde(default)]
    pub scheme: RoutingSchemeKind,
}

impl TraceGenParams {
    /// Ten phones carried around a campus for a week.
    pub fn gainesville_like() -> Self {
        Self {
            n_nodes: 10,
            duration: 7 * SECONDS_PER_DAY,
            mean_contacts_per_pair_per_day: 0.5,
            contact_duration: (60, 1800),
            bandwidth: 2000,
            publish_rate: 3.7,
            follow_density: 0.64,
            payload_bytes: default_payload_bytes(),
            connectivity_sweep: false,
            scheme: RoutingSchemeKind::InterestBased,
        }
    }

    pub fn validate(&self) -> Result<(), TraceGenError> {
        let fail = |m: String| Err(TraceGenError::Invalid(m));
        if self.n_nodes < 2 || self.n_nodes > MAX_NODES {
            return fail(format!("n_nodes must be in 2..={MAX_NODES}, got {}", self.n_nodes));
        }
        if self.duration == 0 {
            return fail("duration must be positive".into());
        }
        let (lo, hi) = self.contact_duration;
        if lo == 0 || lo > hi {
            return fail(format!("contact_duration ({lo}, {hi}) must satisfy 0 < min <= max"));
        }
        if hi > SECONDS_PER_DAY {
            return fail(format!("contact_duration max {hi}s exceeds one day"));
        }
        if self.bandwidth == 0 {
            return fail("bandwidth must be positive".into());
        }
        if !(self.mean_contacts_per_pair_per_day.is_finite() && self.mean_contacts_per_pair_per_day > 0.0) {
            return fail("mean_contacts_per_pair_per_day must be positive".into());
        }
        if !(self.publish_rate.is_finite() && self.publish_rate > 0.0) {
            return fail("publish_rate must be positive".into());
        }
        if !(self.follow_density > 0.0 && self.follow_density <= 1.0) {
            return fail(format!("follow_density must be in (0, 1], got {}", self.follow_density));
        }
        if self.payload_bytes > MAX_PAYLOAD {
            return fail(format!("payload_bytes exceeds {MAX_PAYLOAD}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScenario {
    pub config: RunConfig,
    pub trace: Vec<TraceEvent>,
}

pub fn node_id(i: usize) -> UserId {
    UserId::new(&format!("NODE{i:06}")).expect("ten ascii characters")
}

pub fn generate(params: &TraceGenParams, seed: u64) -> Result<GeneratedScenario, TraceGenError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.n_nodes;
    let ids: Vec<UserId> = (0..n).map(node_id).collect();

    let mut ordered: Vec<(UserId, UserId)> = ids
        .iter()
        .flat_map(|&a| ids.iter().filter(move |&&b| b != a).map(move |&b| (a, b)))
        .collect();
    ordered.shuffle(&mut rng);
    let follow_count = (params.follow_density * ordered.len() as f64).round() as usize;
    let mut follows: Vec<(UserId, UserId)> = ordered[..follow_count.max(1)].to_vec();
    follows.sort();

    let mut events = Vec::new();
    let contact_gap = Exp::new(params.mean_contacts_per_pair_per_day / SECONDS_PER_DAY as f64)
        .map_err(|e| TraceGenError::Invalid(e.to_string()))?;
    for (x, &a) in ids.iter().enumerate() {
        for &b in &ids[x + 1..] {
            let mut free_at = 0u64;
            let mut clock = 0f64;
            loop {
                clock = clock.max(free_at as f64) + contact_gap.sample(&mut rng);
                let start = clock as u64;
                if start >= params.duration {
                    break;
                }
                let length = rng.gen_range(params.contact_duration.0..=params.contact_duration.1);
                let end = (start + length).min(params.duration);
                if end <= start {
                    break;
                }
                events.push(TraceEvent::new(
                    start,
                    TraceEventKind::ContactUp { a, b, bandwidth: params.bandwidth },
                ));
                events.push(TraceEvent::new(end, TraceEventKind::ContactDown { a, b }));
                free_at = end;
            }
        }
    }

    let publish_gap = Exp::new(params.publish_rate / SECONDS_PER_DAY as f64)
        .map_err(|e| TraceGenError::Invalid(e.to_string()))?;
    let mut published = 0u64;
    for &author in &ids {
        let mut clock = 0f64;
        loop {
            clock += publish_gap.sample(&mut rng);
            let at = clock as u64;
            if at >= params.duration {
                break;
            }
            let payload: String = (&mut rng)
                .sample_iter(Alphanumeric)
                .take(params.payload_bytes)
                .map(char::from)
                .collect();
            events.push(TraceEvent::new(at, TraceEventKind::Publish { author, payload }));
            published += 1;
        }
    }

    if params.connectivity_sweep {
        // Both directions of a session may be busy, so budget for twice the
        // backlog.
        let backlog = published * (FRAME_OVERHEAD_ESTIMATE + params.payload_bytes as u64) * 2;
        let hold = backlog.div_ceil(params.bandwidth) + 2;
        let chain: Vec<(UserId, UserId)> = ids
            .windows(2)
            .map(|w| (w[0], w[1]))
            .chain(ids.windows(2).rev().map(|w| (w[1], w[0])))
            .collect();
        let mut at = params.duration;
        for (a, b) in chain {
            events.push(TraceEvent::new(at, TraceEventKind::ContactUp { a, b, bandwidth: params.bandwidth }));
            events.push(TraceEvent::new(at + hold, TraceEventKind::ContactDown { a, b }));
            at += hold;
        }
    }

    events.sort_by_key(|e| (e.at, e.kind.rank()));
    let config = RunConfig::uniform(ids, params.scheme, seed).with_follows(follows);
    Ok(GeneratedScenario { config, trace: events })
}

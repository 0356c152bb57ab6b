//! Trace-driven event loop and the evaluation pipeline on top of it.
//!
//! Each tick runs, in order: trace events due this tick, advertisement
//! broadcast, interest decisions, handshakes for new sessions, transfers,
//! and closing of sessions with nothing left to send. Stretches where no
//! link is up, or where the last tick moved nothing, are skipped to the next
//! trace event since no state can change in between.

pub mod config;
pub mod log;
pub mod metrics;
pub mod report;
pub mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adhoc::{
    broadcast_advertisements, establish, interest_decisions, pair_key, tick_transfer,
    AdvertisementDelivery, LinkTable, NodeSet, Pair, ReceiptOutcome,
};
use crate::exec::Execution;
use crate::message_manager::{on_peer_lost, Phase, SessionState};
use crate::model::{Subscription, Timestamp, UserId};
use crate::node::NodeState;
use crate::security::{
    CertificateAuthority, Connectivity, SecurityError, SignatureScheme, SignupRequest,
};

pub use config::{ConfigError, RunConfig, UserSpec};
pub use log::{EventLog, LogEvent, LogLevel, LogRecord};
pub use metrics::{DeliveryRecord, MetricsReport, Publication, RunTallies};
pub use trace::{TraceError, TraceEvent, TraceEventKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid trace: {0}")]
    Trace(#[from] TraceError),
    #[error("signup failed: {0}")]
    Signup(#[from] SecurityError),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub log: EventLog,
    /// Session, framing and signing errors. Refused handshakes and dropped
    /// forgeries are the protocol working as intended and are not counted.
    pub protocol_errors: usize,
    pub handshake_refusals: usize,
    /// Ticks actually simulated (idle stretches excluded).
    pub ticks: u64,
    pub nodes: NodeSet,
}

impl RunOutput {
    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes")
    }

    /// SHA-256 over the event log and report bytes, hex encoded.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.log.to_jsonl().as_bytes());
        hasher.update(self.report_json().as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub type AdvertisementObserver<'a> = Box<dyn FnMut(Timestamp, &AdvertisementDelivery) + 'a>;

pub struct Simulation<'a> {
    config: &'a RunConfig,
    log_level: LogLevel,
    observer: Option<AdvertisementObserver<'a>>,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &'a RunConfig) -> Self {
        Self {
            config,
            log_level: LogLevel::Normal,
            observer: None,
        }
    }

    pub fn log_level(mut self, level: LogLevel) -> Self {
        self.log_level = level;
        self
    }

    /// Sees every plaintext advertisement as it goes over the air.
    pub fn observe_advertisements(
        mut self,
        observer: impl FnMut(Timestamp, &AdvertisementDelivery) + 'a,
    ) -> Self {
        self.observer = Some(Box::new(observer));
        self
    }

    pub fn run(mut self, trace: &[TraceEvent]) -> Result<RunOutput, RunError> {
        self.config.validate()?;
        let events = trace::validate_trace(self.config, trace)?;
        let mut world = World::new(self.config, self.log_level)?;
        let tick_seconds = self.config.tick_seconds;

        let mut ticks = 0;
        let mut next = 0;
        if let Some(last) = events.last() {
            let last_tick = last.at / tick_seconds;
            let mut tick = events[0].at / tick_seconds;
            loop {
                let now = tick * tick_seconds;
                while next < events.len() && events[next].at / tick_seconds == tick {
                    world.apply(&events[next], now);
                    next += 1;
                }
                let quiescent = world.exchange(now, &mut self.observer);
                ticks += 1;
                if tick >= last_tick {
                    break;
                }
                tick = if quiescent {
                    events[next].at / tick_seconds
                } else {
                    tick + 1
                };
            }
        }
        let end = events.last().map_or(0, |e| e.at);
        Ok(world.finish(ticks, end))
    }
}

/// Runs `config` against `trace` with the default log level.
pub fn run(config: &RunConfig, trace: &[TraceEvent]) -> Result<RunOutput, RunError> {
    Simulation::new(config).run(trace)
}

/// Independent runs of one trace under each seed. Results keep seed order.
pub fn sweep(
    config: &RunConfig,
    trace: &[TraceEvent],
    seeds: &[u64],
    execution: Execution,
) -> Vec<(u64, Result<RunOutput, RunError>)> {
    execution.map(seeds, |&seed| {
        let config = RunConfig {
            seed,
            ..config.clone()
        };
        (seed, run(&config, trace))
    })
}

struct World {
    scheme: Arc<dyn SignatureScheme>,
    ca: CertificateAuthority,
    nodes: NodeSet,
    links: LinkTable,
    sessions: BTreeMap<Pair, SessionState>,
    /// Pairs whose handshake failed during the current contact.
    refused: BTreeSet<Pair>,
    next_session: u64,
    tick_seconds: u64,
    mode: metrics::RatioDenominatorMode,
    log: EventLog,
    tallies: RunTallies,
    open_subscriptions: BTreeMap<(UserId, UserId), usize>,
    protocol_errors: usize,
    handshake_refusals: usize,
}

impl World {
    fn new(config: &RunConfig, level: LogLevel) -> Result<Self, RunError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let scheme = config.signature_scheme.instantiate();
        let mut ca = CertificateAuthority::new(scheme.clone(), &mut rng)
            .with_lifetime_days(config.cert_lifetime_days);
        let mut log = EventLog::new(level);
        let mut nodes = Vec::with_capacity(config.users.len());
        for user in &config.users {
            let request = SignupRequest::new(user.user_id, user.user_id.as_str());
            let credentials = ca.signup(&request, 0, Connectivity::Online, &mut rng)?;
            nodes.push(NodeState::new(credentials, user.scheme));
            log.push(0, LogEvent::SignedUp { user: user.user_id });
        }
        let mut world = Self {
            scheme,
            ca,
            nodes: NodeSet::new(nodes),
            links: LinkTable::default(),
            sessions: BTreeMap::new(),
            refused: BTreeSet::new(),
            next_session: 1,
            tick_seconds: config.tick_seconds,
            mode: config.ratio_denominator_mode,
            log,
            tallies: RunTallies::default(),
            open_subscriptions: BTreeMap::new(),
            protocol_errors: 0,
            handshake_refusals: 0,
        };
        for &(follower, followee) in &config.follow_edges {
            world.follow(follower, followee, 0);
        }
        Ok(world)
    }

    fn node(&mut self, id: &UserId) -> &mut NodeState {
        self.nodes.get_mut(id).expect("trace validated against config")
    }

    fn follow(&mut self, follower: UserId, followee: UserId, at: Timestamp) {
        self.node(&follower).follow(followee, at);
        self.open_subscriptions
            .insert((follower, followee), self.tallies.subscriptions.len());
        self.tallies.subscriptions.push(Subscription {
            follower,
            followee,
            since: at,
            until: None,
        });
        self.log.push(at, LogEvent::Followed { follower, followee });
    }

    fn apply(&mut self, event: &TraceEvent, now: Timestamp) {
        match &event.kind {
            TraceEventKind::ContactUp { a, b, bandwidth } => {
                self.links.up(*a, *b, *bandwidth, now);
                self.log.push(
                    now,
                    LogEvent::ContactUp {
                        a: *a,
                        b: *b,
                        bandwidth: *bandwidth,
                    },
                );
            }
            TraceEventKind::ContactDown { a, b } => {
                let pair = pair_key(*a, *b);
                self.links.down(*a, *b);
                self.refused.remove(&pair);
                let untransferred = match self.sessions.remove(&pair) {
                    Some(mut session) => on_peer_lost(&mut session),
                    None => Vec::new(),
                };
                self.log.push(
                    now,
                    LogEvent::ContactDown {
                        a: *a,
                        b: *b,
                        untransferred,
                    },
                );
            }
            TraceEventKind::Publish { author, payload } => {
                let scheme = self.scheme.clone();
                match self
                    .node(author)
                    .publish(scheme.as_ref(), payload.as_bytes().to_vec(), event.at)
                {
                    Ok(id) => {
                        self.tallies.publications.push(Publication {
                            id,
                            created_at: event.at,
                        });
                        self.log.push(event.at, LogEvent::Published { message: id });
                    }
                    Err(err) => self.protocol_error(now, *author, *author, err.to_string()),
                }
            }
            TraceEventKind::Follow { follower, followee } => {
                self.follow(*follower, *followee, event.at);
            }
            TraceEventKind::Unfollow { follower, followee } => {
                self.node(follower).unfollow(*followee, event.at);
                if let Some(i) = self.open_subscriptions.remove(&(*follower, *followee)) {
                    self.tallies.subscriptions[i].until = Some(event.at);
                }
                self.log.push(
                    event.at,
                    LogEvent::Unfollowed {
                        follower: *follower,
                        followee: *followee,
                    },
                );
            }
            TraceEventKind::CloudSync { node } => {
                let crl = self.ca.fetch_crl();
                let crl_len = crl.len();
                let actions = self.node(node).cloud_sync(crl);
                self.log.push(
                    now,
                    LogEvent::CloudSynced {
                        node: *node,
                        actions,
                        crl: crl_len,
                    },
                );
            }
            TraceEventKind::Revoke { user } => {
                if let Err(err) = self.ca.revoke(*user) {
                    self.protocol_error(now, *user, *user, err.to_string());
                } else {
                    self.log.push(now, LogEvent::Revoked { user: *user });
                }
            }
        }
    }

    fn protocol_error(&mut self, now: Timestamp, a: UserId, b: UserId, error: String) {
        self.protocol_errors += 1;
        self.log.push(now, LogEvent::ProtocolError { a, b, error });
    }

    /// One tick of radio activity. Returns true when nothing moved and no
    /// session is open, i.e. the next tick would be identical.
    fn exchange(&mut self, now: Timestamp, observer: &mut Option<AdvertisementObserver<'_>>) -> bool {
        if self.links.is_empty() {
            return true;
        }
        let deliveries = match broadcast_advertisements(&self.nodes, &self.links) {
            Ok(deliveries) => deliveries,
            Err(err) => {
                let (a, b) = *self.links.pairs().next().expect("non-empty").0;
                self.protocol_error(now, a, b, err.to_string());
                return true;
            }
        };
        for delivery in &deliveries {
            if let Some(observe) = observer.as_mut() {
                observe(now, delivery);
            }
            if self.log.enabled(LogLevel::Verbose) {
                self.log.push(
                    now,
                    LogEvent::Advertised {
                        from: delivery.from,
                        to: delivery.to,
                        entries: delivery.advertisement.entries.len(),
                    },
                );
            }
        }

        for (pair, interest) in interest_decisions(&self.nodes, &deliveries) {
            if let Some(session) = self.sessions.get_mut(&pair) {
                session.plan(&pair.0, &interest.lower_wants);
                session.plan(&pair.1, &interest.higher_wants);
                continue;
            }
            if interest.is_empty() || self.refused.contains(&pair) {
                continue;
            }
            let (lower, higher) = (
                self.nodes.get(&pair.0).expect("linked node"),
                self.nodes.get(&pair.1).expect("linked node"),
            );
            let link_up = self.links.is_active(pair.0, pair.1);
            match establish(lower, higher, self.next_session, link_up, self.scheme.as_ref(), now) {
                Ok(mut session) => {
                    self.log.push(
                        now,
                        LogEvent::SessionEstablished {
                            session: session.session_id,
                            a: pair.0,
                            b: pair.1,
                        },
                    );
                    self.next_session += 1;
                    session.plan(&pair.0, &interest.lower_wants);
                    session.plan(&pair.1, &interest.higher_wants);
                    self.sessions.insert(pair, session);
                }
                Err(failure) => {
                    self.handshake_refusals += 1;
                    self.refused.insert(pair);
                    self.log.push(
                        now,
                        LogEvent::HandshakeRefused {
                            a: pair.0,
                            b: pair.1,
                            refused_by: failure.refused_by,
                            reason: failure.reason.to_string(),
                        },
                    );
                }
            }
        }

        let report = tick_transfer(
            &mut self.nodes,
            &self.links,
            &mut self.sessions,
            self.scheme.as_ref(),
            self.tick_seconds,
            now,
        );
        let moved = report.data_bytes.values().any(|b| *b > 0);
        if self.log.enabled(LogLevel::Verbose) {
            for (pair, data_bytes) in &report.data_bytes {
                self.log.push(
                    now,
                    LogEvent::LinkUsage {
                        a: pair.0,
                        b: pair.1,
                        data_bytes: *data_bytes,
                    },
                );
            }
        }
        for receipt in report.receipts {
            self.tallies.transferred_copies += 1;
            let (message, from, to) = (receipt.message, receipt.from, receipt.to);
            let event = match receipt.outcome {
                ReceiptOutcome::Accepted { hops } => {
                    self.tallies.deliveries.push(DeliveryRecord {
                        message,
                        receiver: to,
                        created_at: receipt.created_at,
                        // A publish inside a multi-second tick can land after
                        // the tick's start.
                        delivered_at: now.max(receipt.created_at),
                        hops,
                    });
                    LogEvent::Delivered { message, from, to, hops }
                }
                ReceiptOutcome::Duplicate => LogEvent::Duplicate { message, from, to },
                ReceiptOutcome::Dropped(reason) => {
                    self.tallies.dropped_copies += 1;
                    LogEvent::Dropped {
                        message,
                        from,
                        to,
                        reason: reason.to_string(),
                    }
                }
            };
            self.log.push(now, event);
        }
        for (pair, err) in report.errors {
            self.protocol_error(now, pair.0, pair.1, err.to_string());
        }

        let done: Vec<Pair> = self
            .sessions
            .iter()
            .filter(|(_, s)| s.phase == Phase::Closed || !s.has_pending())
            .map(|(pair, _)| *pair)
            .collect();
        for pair in done {
            let mut session = self.sessions.remove(&pair).expect("listed above");
            session.close();
            self.log.push(
                now,
                LogEvent::SessionClosed {
                    session: session.session_id,
                    a: pair.0,
                    b: pair.1,
                },
            );
        }
        !moved && self.sessions.is_empty()
    }

    fn finish(mut self, ticks: u64, end: Timestamp) -> RunOutput {
        self.tallies.crl = self.ca.state().revoked.iter().copied().collect();
        let report = MetricsReport::compute(self.tallies, self.mode);
        self.log.push(
            end,
            LogEvent::Finished {
                ticks,
                deliveries: report.deliveries.len(),
                protocol_errors: self.protocol_errors,
            },
        );
        RunOutput {
            report,
            log: self.log,
            protocol_errors: self.protocol_errors,
            handshake_refusals: self.handshake_refusals,
            ticks,
            nodes: self.nodes,
        }
    }
}

//! Simulated ad hoc substrate: who can hear whom, the certificate handshake
//! that opens a session, and byte-budgeted in-order frame delivery.
//!
//! A real transport backend would replace this module by raising the same
//! five callbacks: advertise, found, lost, established, frame.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::message_manager::{
    on_peer_found, pump_session, FrameKind, Phase, SessionError, SessionState, Transmission,
    WireFrame,
};
use crate::model::{Advertisement, MessageId, ModelError, Timestamp, UserId};
use crate::node::NodeState;
use crate::routing::InterestDecision;
use crate::security::{CertificateFailure, ForwardFailure, SignatureScheme};

/// Unordered pair key, lower id first.
pub type Pair = (UserId, UserId);

pub fn pair_key(a: UserId, b: UserId) -> Pair {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// An interval during which two nodes can exchange bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contact {
    pub a: UserId,
    pub b: UserId,
    pub start: Timestamp,
    pub end: Timestamp,
    /// Bytes per second.
    pub bandwidth: u64,
}

impl Contact {
    pub fn pair(&self) -> Pair {
        pair_key(self.a, self.b)
    }

    pub fn is_valid(&self) -> bool {
        self.a != self.b && self.start < self.end && self.bandwidth > 0
    }

    pub fn covers(&self, at: Timestamp) -> bool {
        at >= self.start && at < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub bandwidth: u64,
    pub since: Timestamp,
}

/// Currently active links.
#[derive(Debug, Clone, Default)]
pub struct LinkTable {
    links: BTreeMap<Pair, Link>,
}

impl LinkTable {
    pub fn up(&mut self, a: UserId, b: UserId, bandwidth: u64, at: Timestamp) -> bool {
        let key = pair_key(a, b);
        if self.links.contains_key(&key) {
            return false;
        }
        self.links.insert(
            key,
            Link {
                bandwidth,
                since: at,
            },
        );
        true
    }

    pub fn down(&mut self, a: UserId, b: UserId) -> Option<Link> {
        self.links.remove(&pair_key(a, b))
    }

    pub fn is_active(&self, a: UserId, b: UserId) -> bool {
        self.links.contains_key(&pair_key(a, b))
    }

    pub fn get(&self, pair: &Pair) -> Option<&Link> {
        self.links.get(pair)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Pair, &Link)> {
        self.links.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    /// Byte budget of one tick on this pair.
    pub fn budget(&self, pair: &Pair, tick_seconds: u64) -> u64 {
        self.links
            .get(pair)
            .map_or(0, |l| l.bandwidth.saturating_mul(tick_seconds))
    }
}

/// All nodes of a run, addressable by id.
#[derive(Debug, Clone, Default)]
pub struct NodeSet {
    nodes: Vec<NodeState>,
    index: BTreeMap<UserId, usize>,
}

impl NodeSet {
    pub fn new(mut nodes: Vec<NodeState>) -> Self {
        nodes.sort_by_key(|n| n.id());
        let index = nodes.iter().enumerate().map(|(i, n)| (n.id(), i)).collect();
        Self { nodes, index }
    }

    pub fn get(&self, id: &UserId) -> Option<&NodeState> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn get_mut(&mut self, id: &UserId) -> Option<&mut NodeState> {
        self.index.get(id).map(|&i| &mut self.nodes[i])
    }

    pub fn contains(&self, id: &UserId) -> bool {
        self.index.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &NodeState> {
        self.nodes.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut NodeState> {
        self.nodes.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = UserId> + '_ {
        self.index.keys().copied()
    }

    fn pair_mut(&mut self, a: &UserId, b: &UserId) -> (&mut NodeState, &mut NodeState) {
        let (i, j) = (self.index[a], self.index[b]);
        assert_ne!(i, j, "a node cannot pair with itself");
        if i < j {
            let (left, right) = self.nodes.split_at_mut(j);
            (&mut left[i], &mut right[0])
        } else {
            let (left, right) = self.nodes.split_at_mut(i);
            (&mut right[0], &mut left[j])
        }
    }
}

/// An advertisement as heard by one in-contact peer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdvertisementDelivery {
    pub from: UserId,
    pub to: UserId,
    pub advertisement: Advertisement,
}

/// Every node's current advertisement, delivered to every peer it is in
/// contact with. The advertisement travels in plaintext wire form.
pub fn broadcast_advertisements(
    nodes: &NodeSet,
    links: &LinkTable,
) -> Result<Vec<AdvertisementDelivery>, ModelError> {
    let mut encoded: BTreeMap<UserId, Vec<u8>> = BTreeMap::new();
    let mut deliveries = Vec::with_capacity(links.len() * 2);
    for ((low, high), _) in links.pairs() {
        for (from, to) in [(*low, *high), (*high, *low)] {
            let bytes = match encoded.get(&from) {
                Some(bytes) => bytes.clone(),
                None => {
                    let node = nodes.get(&from).expect("links only join known nodes");
                    let bytes = node.routing.advertise().encode()?;
                    encoded.insert(from, bytes.clone());
                    bytes
                }
            };
            deliveries.push(AdvertisementDelivery {
                from,
                to,
                advertisement: Advertisement::decode(&bytes)?,
            });
        }
    }
    Ok(deliveries)
}

/// Per-pair interest computed from this tick's advertisements.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairInterest {
    /// What the lower id wants from the higher id.
    pub lower_wants: InterestDecision,
    pub higher_wants: InterestDecision,
}

impl PairInterest {
    pub fn is_empty(&self) -> bool {
        self.lower_wants.is_empty() && self.higher_wants.is_empty()
    }
}

/// Runs each receiver's routing decision over the advertisements it heard.
pub fn interest_decisions(
    nodes: &NodeSet,
    deliveries: &[AdvertisementDelivery],
) -> BTreeMap<Pair, PairInterest> {
    let mut interest: BTreeMap<Pair, PairInterest> = BTreeMap::new();
    for d in deliveries {
        let receiver = nodes.get(&d.to).expect("known node");
        let entry = interest.entry(pair_key(d.from, d.to)).or_default();
        if let Some(request) = on_peer_found(&receiver.routing, d.from, &d.advertisement) {
            if d.to < d.from {
                entry.lower_wants = request.wanted;
            } else {
                entry.higher_wants = request.wanted;
            }
        }
    }
    interest
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HandshakeError {
    Certificate(CertificateFailure),
    /// Presented certificate names someone other than the peer.
    SubjectMismatch,
    Malformed,
    ContactLost,
}

impl fmt::Display for HandshakeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HandshakeError::Certificate(reason) => reason.fmt(f),
            HandshakeError::SubjectMismatch => f.write_str("subject-mismatch"),
            HandshakeError::Malformed => f.write_str("malformed"),
            HandshakeError::ContactLost => f.write_str("contact-lost"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HandshakeFailure {
    /// The side that refused; `None` when the link dropped.
    pub refused_by: Option<UserId>,
    pub reason: HandshakeError,
}

/// Swaps certificates over CertExchange frames and has each side validate
/// the other's against its own root and cached CRL.
pub fn establish(
    a: &NodeState,
    b: &NodeState,
    session_id: u64,
    link_up: bool,
    scheme: &dyn SignatureScheme,
    now: Timestamp,
) -> Result<SessionState, HandshakeFailure> {
    let lost = HandshakeFailure {
        refused_by: None,
        reason: HandshakeError::ContactLost,
    };
    if !link_up {
        return Err(lost);
    }
    for (validator, presenter) in [(a, b), (b, a)] {
        let refuse = |reason| HandshakeFailure {
            refused_by: Some(validator.id()),
            reason,
        };
        let frame = WireFrame::cert_exchange(&presenter.credentials.certificate)
            .map_err(|_| refuse(HandshakeError::Malformed))?;
        let cert = WireFrame::decode(&frame.encode())
            .and_then(|f| f.to_certificate())
            .map_err(|_| refuse(HandshakeError::Malformed))?;
        validator
            .security(scheme, now)
            .validate(&cert)
            .map_err(|e| refuse(HandshakeError::Certificate(e)))?;
        if cert.subject != presenter.id() {
            return Err(refuse(HandshakeError::SubjectMismatch));
        }
    }
    let mut session = SessionState::new(session_id, a.id(), b.id());
    session.authenticated = true;
    session.phase = Phase::Established;
    Ok(session)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReceiptOutcome {
    Accepted { hops: u32 },
    Duplicate,
    Dropped(ForwardFailure),
}

/// One message frame arriving at a receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub from: UserId,
    pub to: UserId,
    pub message: MessageId,
    pub created_at: Timestamp,
    pub outcome: ReceiptOutcome,
}

#[derive(Debug, Clone, Default)]
pub struct TickReport {
    pub receipts: Vec<Receipt>,
    /// Message-data bytes moved per pair this tick.
    pub data_bytes: BTreeMap<Pair, u64>,
    pub frames: usize,
    pub errors: Vec<(Pair, SessionError)>,
}

/// Pumps every session whose link is up, delivering frames in order. The
/// tick budget of a link is split evenly among the sessions on it; with one
/// session per pair that is the whole budget.
pub fn tick_transfer(
    nodes: &mut NodeSet,
    links: &LinkTable,
    sessions: &mut BTreeMap<Pair, SessionState>,
    scheme: &dyn SignatureScheme,
    tick_seconds: u64,
    now: Timestamp,
) -> TickReport {
    let mut report = TickReport::default();
    for (pair, session) in sessions.iter_mut() {
        if session.phase == Phase::Closed || !links.is_active(pair.0, pair.1) {
            continue;
        }
        let budget = links.budget(pair, tick_seconds);
        let (lower, higher) = nodes.pair_mut(&pair.0, &pair.1);
        let pumped = match pump_session(session, budget, &lower.routing, &higher.routing) {
            Ok(out) => out,
            Err(err) => {
                session.close();
                report.errors.push((*pair, err));
                continue;
            }
        };
        *report.data_bytes.entry(*pair).or_default() += pumped.data_bytes;
        for Transmission { from, to, frame } in pumped.transmissions {
            report.frames += 1;
            let receiver = if to == lower.id() {
                &mut *lower
            } else {
                &mut *higher
            };
            let frame = match WireFrame::decode(&frame.encode()) {
                Ok(frame) => frame,
                Err(err) => {
                    report.errors.push((*pair, err));
                    continue;
                }
            };
            match frame.kind {
                FrameKind::MessageData => {
                    let offered = match frame.to_offered() {
                        Ok(offered) => offered,
                        Err(err) => {
                            report.errors.push((*pair, err));
                            continue;
                        }
                    };
                    let id = offered.copy.id();
                    let created_at = offered.copy.message.created_at;
                    let NodeState {
                        routing,
                        credentials,
                        crl,
                        ..
                    } = receiver;
                    let ctx = crate::security::SecurityContext {
                        scheme,
                        root_public_key: &credentials.root_public_key,
                        crl,
                        now,
                    };
                    let outcome = routing.receive(vec![offered], &ctx);
                    let outcome = if let Some((_, reason)) = outcome.dropped.first() {
                        ReceiptOutcome::Dropped(*reason)
                    } else if outcome.accepted.is_empty() {
                        ReceiptOutcome::Duplicate
                    } else {
                        let hops = routing.store()[&id].hop_count;
                        ReceiptOutcome::Accepted { hops }
                    };
                    report.receipts.push(Receipt {
                        from,
                        to,
                        message: id,
                        created_at,
                        outcome,
                    });
                    let ack = WireFrame::ack(&id);
                    report.frames += 1;
                    match WireFrame::decode(&ack.encode()).and_then(|f| f.to_ack()) {
                        Ok(acked) => session.acknowledge(&to, acked),
                        Err(err) => report.errors.push((*pair, err)),
                    }
                }
                FrameKind::Request => {
                    if let Err(err) = frame.to_request() {
                        report.errors.push((*pair, err));
                    }
                }
                FrameKind::Ack | FrameKind::CertExchange | FrameKind::Close => {}
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::RoutingSchemeKind;
    use crate::security::{
        CertificateAuthority, Connectivity, Crl, Ed25519, KeyedHash, SignupRequest,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn uid(s: &str) -> UserId {
        UserId::new(s).unwrap()
    }

    fn world(names: &[&str]) -> (CertificateAuthority, NodeSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ca = CertificateAuthority::new(Arc::new(KeyedHash), &mut rng);
        let nodes = names
            .iter()
            .map(|n| {
                let creds = ca
                    .signup(&SignupRequest::new(uid(n), *n), 0, Connectivity::Online, &mut rng)
                    .unwrap();
                NodeState::new(creds, RoutingSchemeKind::Epidemic)
            })
            .collect();
        (ca, NodeSet::new(nodes))
    }

    #[test]
    fn no_links_no_advertisements() {
        let (_, nodes) = world(&["ALICE00001", "BOB0000001"]);
        assert!(broadcast_advertisements(&nodes, &LinkTable::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn triangle_yields_six_deliveries_matching_senders() {
        let names = ["ALICE00001", "BOB0000001", "CAROL00001"];
        let (_, mut nodes) = world(&names);
        nodes
            .get_mut(&uid("BOB0000001"))
            .unwrap()
            .publish(&KeyedHash, b"x".to_vec(), 0)
            .unwrap();
        let mut links = LinkTable::default();
        for (a, b) in [(0, 1), (1, 2), (0, 2)] {
            assert!(links.up(uid(names[a]), uid(names[b]), 100, 0));
        }
        let deliveries = broadcast_advertisements(&nodes, &links).unwrap();
        assert_eq!(deliveries.len(), 6);
        for d in &deliveries {
            assert_eq!(
                d.advertisement,
                nodes.get(&d.from).unwrap().routing.advertise()
            );
        }
    }

    #[test]
    fn link_table_rules() {
        let mut links = LinkTable::default();
        let (a, b) = (uid("ALICE00001"), uid("BOB0000001"));
        assert!(links.up(b, a, 10, 0));
        assert!(!links.up(a, b, 10, 0));
        assert!(links.is_active(a, b));
        assert_eq!(links.budget(&pair_key(a, b), 3), 30);
        assert!(links.down(a, b).is_some());
        assert!(links.down(a, b).is_none());
    }

    #[test]
    fn valid_nodes_establish() {
        let (_, nodes) = world(&["ALICE00001", "BOB0000001"]);
        let (a, b) = (
            nodes.get(&uid("ALICE00001")).unwrap(),
            nodes.get(&uid("BOB0000001")).unwrap(),
        );
        let s = establish(b, a, 7, true, &KeyedHash, 1).unwrap();
        assert_eq!(s.phase, Phase::Established);
        assert!(s.authenticated);
        assert_eq!(s.local, uid("ALICE00001"));
        assert_eq!(
            establish(a, b, 8, false, &KeyedHash, 1).unwrap_err().reason,
            HandshakeError::ContactLost
        );
    }

    #[test]
    fn revoked_peer_refused_after_sync() {
        let (mut ca, mut nodes) = world(&["ALICE00001", "BOB0000001"]);
        ca.revoke(uid("BOB0000001")).unwrap();
        let (a, b) = (uid("ALICE00001"), uid("BOB0000001"));
        // Stale CRL: still accepted.
        assert!(establish(
            nodes.get(&a).unwrap(),
            nodes.get(&b).unwrap(),
            1,
            true,
            &KeyedHash,
            1
        )
        .is_ok());
        nodes.get_mut(&a).unwrap().cloud_sync(ca.fetch_crl());
        let failure = establish(
            nodes.get(&a).unwrap(),
            nodes.get(&b).unwrap(),
            2,
            true,
            &KeyedHash,
            1,
        )
        .unwrap_err();
        assert_eq!(failure.refused_by, Some(a));
        assert_eq!(
            failure.reason,
            HandshakeError::Certificate(CertificateFailure::Revoked)
        );
    }

    #[test]
    fn rogue_root_refused() {
        let (_, nodes) = world(&["ALICE00001"]);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut rogue = CertificateAuthority::new(Arc::new(KeyedHash), &mut rng);
        let mallory = NodeState::new(
            rogue
                .signup(
                    &SignupRequest::new(uid("MALLORY001"), "m"),
                    0,
                    Connectivity::Online,
                    &mut rng,
                )
                .unwrap(),
            RoutingSchemeKind::Epidemic,
        );
        let failure = establish(
            nodes.get(&uid("ALICE00001")).unwrap(),
            &mallory,
            1,
            true,
            &KeyedHash,
            1,
        )
        .unwrap_err();
        assert_eq!(
            failure.reason,
            HandshakeError::Certificate(CertificateFailure::BadSignature)
        );
    }

    #[test]
    fn small_message_crosses_in_one_tick() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ca = CertificateAuthority::new(Arc::new(Ed25519), &mut rng);
        let mut make = |n: &str| {
            NodeState::new(
                ca.signup(&SignupRequest::new(uid(n), n), 0, Connectivity::Online, &mut rng)
                    .unwrap(),
                RoutingSchemeKind::Epidemic,
            )
        };
        let mut nodes = NodeSet::new(vec![make("AAAAAAAAAA"), make("BBBBBBBBBB")]);
        let (a, b) = (uid("AAAAAAAAAA"), uid("BBBBBBBBBB"));
        // Empty payload: the 30-byte signable core plus signature, hop
        // metadata, certificate, and framing.
        nodes.get_mut(&a).unwrap().publish(&Ed25519, vec![], 0).unwrap();
        let mut links = LinkTable::default();
        links.up(a, b, 1000, 0);
        let deliveries = broadcast_advertisements(&nodes, &links).unwrap();
        let interest = interest_decisions(&nodes, &deliveries);
        let wants = &interest[&pair_key(a, b)];
        assert!(wants.lower_wants.is_empty());
        assert_eq!(wants.higher_wants.len(), 1);

        let mut session = establish(
            nodes.get(&a).unwrap(),
            nodes.get(&b).unwrap(),
            1,
            true,
            &Ed25519,
            0,
        )
        .unwrap();
        session.plan(&b, &wants.higher_wants);
        let mut sessions = BTreeMap::from([(pair_key(a, b), session)]);
        let report = tick_transfer(&mut nodes, &links, &mut sessions, &Ed25519, 1, 0);
        assert!(report.errors.is_empty());
        assert_eq!(report.receipts.len(), 1);
        assert_eq!(report.receipts[0].outcome, ReceiptOutcome::Accepted { hops: 1 });
        // header 5 + hop 4 + received_at 8 + message (4 + 30 + 4 + 64)
        // + certificate (4 + 72 + 4 + 64)
        assert_eq!(report.data_bytes[&pair_key(a, b)], 263);
        assert!(report.data_bytes[&pair_key(a, b)] <= 1000);
        assert!(!sessions[&pair_key(a, b)].has_pending());
    }

    #[test]
    fn no_sessions_is_noop() {
        let (_, mut nodes) = world(&["ALICE00001", "BOB0000001"]);
        let report = tick_transfer(
            &mut nodes,
            &LinkTable::default(),
            &mut BTreeMap::new(),
            &KeyedHash,
            1,
            0,
        );
        assert!(report.receipts.is_empty() && report.frames == 0);
        let _ = Crl::default();
    }
}

//! Pluggable routing schemes.
//!
//! A scheme decides three things: which authors a node advertises, which
//! advertised messages it asks a peer for, and which authors it starts
//! forwarding for after receiving their messages. Everything else (the
//! store, high-water marks, certificate bookkeeping) lives in
//! [`RoutingState`] and is shared by all schemes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Advertisement, MessageCopy, MessageId, MessageNumber, Timestamp, UserId,
    MAX_ADVERTISEMENT_ENTRIES,
};
use crate::security::{Certificate, ForwardFailure, SecurityContext};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutingError {
    #[error("peer requested {0}, which is not held")]
    MissingMessage(MessageId),
    #[error("no certificate on file for author {0}")]
    MissingCertificate(UserId),
    #[error("{0} is not the next message number for its author")]
    OutOfSequence(MessageId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum RoutingSchemeKind {
    #[serde(rename = "epidemic")]
    Epidemic,
    #[default]
    #[serde(rename = "ib")]
    InterestBased,
}

impl RoutingSchemeKind {
    pub fn scheme(self) -> &'static dyn RoutingScheme {
        match self {
            RoutingSchemeKind::Epidemic => &Epidemic,
            RoutingSchemeKind::InterestBased => &InterestBased,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RoutingSchemeKind::Epidemic => "epidemic",
            RoutingSchemeKind::InterestBased => "ib",
        }
    }
}

impl fmt::Display for RoutingSchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoutingSchemeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "epidemic" => Ok(RoutingSchemeKind::Epidemic),
            "ib" | "interest-based" => Ok(RoutingSchemeKind::InterestBased),
            other => Err(format!("unknown routing scheme {other:?} (expected epidemic or ib)")),
        }
    }
}

/// Message ids a node wants from a peer, in `(author, number)` order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterestDecision {
    pub wanted: Vec<MessageId>,
}

impl InterestDecision {
    pub fn is_empty(&self) -> bool {
        self.wanted.is_empty()
    }

    pub fn len(&self) -> usize {
        self.wanted.len()
    }
}

/// A copy in transit together with the author certificate that lets the
/// receiver verify it without ever having met the author.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OfferedCopy {
    pub copy: MessageCopy,
    pub author_cert: Certificate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReceiveOutcome {
    pub accepted: Vec<MessageId>,
    pub duplicates: Vec<MessageId>,
    pub dropped: Vec<(MessageId, ForwardFailure)>,
}

/// Per-node routing state.
#[derive(Debug, Clone)]
pub struct RoutingState {
    owner: UserId,
    scheme: RoutingSchemeKind,
    store: BTreeMap<MessageId, MessageCopy>,
    latest: BTreeMap<UserId, MessageNumber>,
    following: BTreeSet<UserId>,
    forwarding_for: BTreeSet<UserId>,
    certificates: BTreeMap<UserId, Certificate>,
    // Ordering key for advertisement eviction: (time, sequence) of the last
    // change to `latest[u]`.
    last_update: BTreeMap<UserId, (Timestamp, u64)>,
    update_seq: u64,
}

impl RoutingState {
    pub fn new(owner: UserId, scheme: RoutingSchemeKind, own_cert: Certificate) -> Self {
        let mut certificates = BTreeMap::new();
        certificates.insert(owner, own_cert);
        Self {
            owner,
            scheme,
            store: BTreeMap::new(),
            latest: BTreeMap::new(),
            following: BTreeSet::new(),
            forwarding_for: BTreeSet::from([owner]),
            certificates,
            last_update: BTreeMap::new(),
            update_seq: 0,
        }
    }

    pub fn owner(&self) -> UserId {
        self.owner
    }

    pub fn scheme_kind(&self) -> RoutingSchemeKind {
        self.scheme
    }

    pub fn set_scheme(&mut self, scheme: RoutingSchemeKind) {
        self.scheme = scheme;
    }

    pub fn store(&self) -> &BTreeMap<MessageId, MessageCopy> {
        &self.store
    }

    pub fn holds(&self, id: &MessageId) -> bool {
        self.store.contains_key(id)
    }

    pub fn latest(&self) -> &BTreeMap<UserId, MessageNumber> {
        &self.latest
    }

    pub fn latest_for(&self, author: &UserId) -> Option<MessageNumber> {
        self.latest.get(author).copied()
    }

    pub fn following(&self) -> &BTreeSet<UserId> {
        &self.following
    }

    pub fn forwarding_for(&self) -> &BTreeSet<UserId> {
        &self.forwarding_for
    }

    pub fn certificate(&self, user: &UserId) -> Option<&Certificate> {
        self.certificates.get(user)
    }

    /// Next number this node will publish under.
    pub fn next_own_number(&self) -> MessageNumber {
        self.latest_for(&self.owner)
            .map_or(MessageNumber::FIRST, MessageNumber::next)
    }

    /// Stores one of the owner's freshly signed messages.
    pub fn publish(&mut self, copy: MessageCopy) -> Result<(), RoutingError> {
        let id = copy.id();
        if id.author != self.owner || id.number != self.next_own_number() {
            return Err(RoutingError::OutOfSequence(id));
        }
        let at = copy.message.created_at;
        self.store.insert(id, copy);
        self.advance_latest(self.owner, at);
        Ok(())
    }

    pub fn follow(&mut self, followee: UserId) -> bool {
        followee != self.owner && self.following.insert(followee)
    }

    /// Stops requesting new messages from `followee`. Copies already held
    /// stay, and so does forwarding for them.
    pub fn unfollow(&mut self, followee: &UserId) -> bool {
        self.following.remove(followee)
    }

    pub fn advertise(&self) -> Advertisement {
        self.scheme.scheme().advertised_entries(self)
    }

    pub fn decide(&self, adv: &Advertisement) -> InterestDecision {
        self.scheme.scheme().on_peer_advertisement(self, adv)
    }

    pub fn receive(
        &mut self,
        incoming: Vec<OfferedCopy>,
        ctx: &SecurityContext<'_>,
    ) -> ReceiveOutcome {
        self.scheme.scheme().on_messages_received(self, incoming, ctx)
    }

    pub fn offer(&self, wanted: &InterestDecision) -> Result<Vec<OfferedCopy>, RoutingError> {
        self.scheme.scheme().messages_to_offer(self, wanted)
    }

    fn advance_latest(&mut self, author: UserId, at: Timestamp) {
        let start = self.latest.get(&author).copied();
        let mut next = start.map_or(MessageNumber::FIRST, MessageNumber::next);
        let mut reached = start;
        while self.store.contains_key(&MessageId::new(author, next)) {
            reached = Some(next);
            next = next.next();
        }
        if reached != start {
            self.latest.insert(author, reached.expect("advanced"));
            self.update_seq += 1;
            self.last_update.insert(author, (at, self.update_seq));
        }
    }
}

/// The four entry points a routing scheme implements.
pub trait RoutingScheme: fmt::Debug + Send + Sync {
    fn kind(&self) -> RoutingSchemeKind;

    /// The plaintext dictionary this node broadcasts.
    fn advertised_entries(&self, state: &RoutingState) -> Advertisement;

    /// Which of the peer's advertised messages to request. Pure.
    fn on_peer_advertisement(&self, state: &RoutingState, adv: &Advertisement) -> InterestDecision;

    /// Verifies and stores incoming copies and updates the forwarder set.
    fn on_messages_received(
        &self,
        state: &mut RoutingState,
        incoming: Vec<OfferedCopy>,
        ctx: &SecurityContext<'_>,
    ) -> ReceiveOutcome;

    /// The copies (with author certificates) to send for a peer's request.
    fn messages_to_offer(
        &self,
        state: &RoutingState,
        wanted: &InterestDecision,
    ) -> Result<Vec<OfferedCopy>, RoutingError>;
}

/// Replicates everything to everyone.
#[derive(Debug, Clone, Copy)]
pub struct Epidemic;

/// Requests, stores, and relays only authors the node follows.
#[derive(Debug, Clone, Copy)]
pub struct InterestBased;

impl RoutingScheme for Epidemic {
    fn kind(&self) -> RoutingSchemeKind {
        RoutingSchemeKind::Epidemic
    }

    fn advertised_entries(&self, state: &RoutingState) -> Advertisement {
        forwarded_entries(state)
    }

    fn on_peer_advertisement(&self, state: &RoutingState, adv: &Advertisement) -> InterestDecision {
        wanted_from(state, adv, |_| true)
    }

    fn on_messages_received(
        &self,
        state: &mut RoutingState,
        incoming: Vec<OfferedCopy>,
        ctx: &SecurityContext<'_>,
    ) -> ReceiveOutcome {
        accept_verified(state, incoming, ctx, |_, _| true)
    }

    fn messages_to_offer(
        &self,
        state: &RoutingState,
        wanted: &InterestDecision,
    ) -> Result<Vec<OfferedCopy>, RoutingError> {
        offer_held(state, wanted)
    }
}

impl RoutingScheme for InterestBased {
    fn kind(&self) -> RoutingSchemeKind {
        RoutingSchemeKind::InterestBased
    }

    fn advertised_entries(&self, state: &RoutingState) -> Advertisement {
        forwarded_entries(state)
    }

    fn on_peer_advertisement(&self, state: &RoutingState, adv: &Advertisement) -> InterestDecision {
        wanted_from(state, adv, |author| state.following.contains(author))
    }

    fn on_messages_received(
        &self,
        state: &mut RoutingState,
        incoming: Vec<OfferedCopy>,
        ctx: &SecurityContext<'_>,
    ) -> ReceiveOutcome {
        accept_verified(state, incoming, ctx, |state, author| {
            state.following.contains(author)
        })
    }

    fn messages_to_offer(
        &self,
        state: &RoutingState,
        wanted: &InterestDecision,
    ) -> Result<Vec<OfferedCopy>, RoutingError> {
        offer_held(state, wanted)
    }
}

/// One entry per forwarded author with a contiguous prefix, keeping the most
/// recently updated authors when over capacity. The owner is never evicted.
pub fn forwarded_entries(state: &RoutingState) -> Advertisement {
    let mut candidates: Vec<(UserId, MessageNumber)> = state
        .forwarding_for
        .iter()
        .filter_map(|u| state.latest.get(u).map(|n| (*u, *n)))
        .collect();
    if candidates.len() > MAX_ADVERTISEMENT_ENTRIES {
        candidates.sort_by(|(a, _), (b, _)| {
            let pinned = |u: &UserId| *u == state.owner;
            pinned(b)
                .cmp(&pinned(a))
                .then_with(|| state.last_update.get(b).cmp(&state.last_update.get(a)))
                .then_with(|| a.cmp(b))
        });
        candidates.truncate(MAX_ADVERTISEMENT_ENTRIES);
    }
    Advertisement {
        advertiser: state.owner,
        entries: candidates.into_iter().collect(),
    }
}

/// Every `(u, k)` with `latest[u] < k <= adv[u]` for authors passing `interested`.
pub fn wanted_from(
    state: &RoutingState,
    adv: &Advertisement,
    interested: impl Fn(&UserId) -> bool,
) -> InterestDecision {
    let mut wanted = Vec::new();
    for (author, advertised) in &adv.entries {
        if *author == state.owner || !interested(author) {
            continue;
        }
        let have = state.latest.get(author).map_or(0, |n| n.get());
        for k in have + 1..=advertised.get() {
            wanted.push(MessageId::new(*author, MessageNumber::new(k).expect("k >= 1")));
        }
    }
    InterestDecision { wanted }
}

/// Verifies each copy independently; failures are recorded, never fatal.
/// `forwards` decides whether an accepted author joins the forwarder set.
pub fn accept_verified(
    state: &mut RoutingState,
    incoming: Vec<OfferedCopy>,
    ctx: &SecurityContext<'_>,
    forwards: impl Fn(&RoutingState, &UserId) -> bool,
) -> ReceiveOutcome {
    let mut outcome = ReceiveOutcome::default();
    let mut touched = BTreeSet::new();
    for OfferedCopy { copy, author_cert } in incoming {
        let id = copy.id();
        if id.author == state.owner || state.store.contains_key(&id) {
            outcome.duplicates.push(id);
            continue;
        }
        if let Err(reason) = ctx.verify_forwarded(&copy.message, &author_cert) {
            outcome.dropped.push((id, reason));
            continue;
        }
        let stored = MessageCopy {
            hop_count: copy.hop_count + 1,
            received_at: ctx.now,
            message: copy.message,
        };
        state.store.insert(id, stored);
        state.certificates.insert(id.author, author_cert);
        touched.insert(id.author);
        outcome.accepted.push(id);
    }
    for author in touched {
        state.advance_latest(author, ctx.now);
        if forwards(state, &author) {
            state.forwarding_for.insert(author);
        }
    }
    outcome
}

pub fn offer_held(
    state: &RoutingState,
    wanted: &InterestDecision,
) -> Result<Vec<OfferedCopy>, RoutingError> {
    let mut ids = wanted.wanted.clone();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let copy = state
                .store
                .get(&id)
                .ok_or(RoutingError::MissingMessage(id))?;
            let author_cert = state
                .certificates
                .get(&id.author)
                .ok_or(RoutingError::MissingCertificate(id.author))?;
            Ok(OfferedCopy {
                copy: copy.clone(),
                author_cert: author_cert.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Message;
    use crate::security::{
        sign_message, CertificateAuthority, Connectivity, Credentials, Crl, KeyedHash,
        SignupRequest,
    };
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn uid(s: &str) -> UserId {
        UserId::new(s).unwrap()
    }

    fn num(n: u64) -> MessageNumber {
        MessageNumber::new(n).unwrap()
    }

    fn mid(author: &str, n: u64) -> MessageId {
        MessageId::new(uid(author), num(n))
    }

    struct World {
        ca: CertificateAuthority,
        rng: ChaCha8Rng,
        crl: Crl,
    }

    impl World {
        fn new() -> Self {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let ca = CertificateAuthority::new(Arc::new(KeyedHash), &mut rng);
            Self {
                ca,
                rng,
                crl: Crl::default(),
            }
        }

        fn enroll(&mut self, name: &str) -> Credentials {
            self.ca
                .signup(
                    &SignupRequest::new(uid(name), name),
                    0,
                    Connectivity::Online,
                    &mut self.rng,
                )
                .unwrap()
        }

        fn node(&mut self, name: &str, scheme: RoutingSchemeKind) -> (RoutingState, Credentials) {
            let creds = self.enroll(name);
            (
                RoutingState::new(uid(name), scheme, creds.certificate.clone()),
                creds,
            )
        }

        fn ctx(&self, now: Timestamp) -> SecurityContext<'_> {
            SecurityContext {
                scheme: &KeyedHash,
                root_public_key: self.ca.root_public_key(),
                crl: &self.crl,
                now,
            }
        }
    }

    fn publish(state: &mut RoutingState, creds: &Credentials, at: Timestamp, body: &str) {
        let id = MessageId::new(state.owner(), state.next_own_number());
        let msg = Message::unsigned(id, at, body.as_bytes().to_vec());
        let signed = sign_message(&KeyedHash, msg, &creds.keypair).unwrap();
        state.publish(MessageCopy::original(signed)).unwrap();
    }

    fn adv(advertiser: &str, entries: &[(&str, u64)]) -> Advertisement {
        Advertisement {
            advertiser: uid(advertiser),
            entries: entries.iter().map(|(u, n)| (uid(u), num(*n))).collect(),
        }
    }

    /// A state whose latest map is exactly `latest`, built by storing copies.
    fn seeded_state(scheme: RoutingSchemeKind, latest: &[(&str, u64)]) -> RoutingState {
        let mut w = World::new();
        let (mut state, _) = w.node("OWNER00001", scheme);
        for (author, n) in latest {
            for k in 1..=*n {
                state.store.insert(
                    mid(author, k),
                    MessageCopy::original(Message::unsigned(mid(author, k), 0, vec![])),
                );
            }
            state.advance_latest(uid(author), 0);
        }
        state
    }

    #[test]
    fn fresh_node_advertises_nothing() {
        let mut w = World::new();
        let (state, _) = w.node("ALICE00001", RoutingSchemeKind::Epidemic);
        assert!(state.advertise().entries.is_empty());
        assert!(state.forwarding_for().contains(&uid("ALICE00001")));
    }

    #[test]
    fn own_posts_are_advertised() {
        let mut w = World::new();
        let (mut state, creds) = w.node("ALICE00001", RoutingSchemeKind::InterestBased);
        for t in 0..3 {
            publish(&mut state, &creds, t, "post");
        }
        assert_eq!(state.advertise(), adv("ALICE00001", &[("ALICE00001", 3)]));
    }

    #[test]
    fn publish_out_of_sequence_rejected() {
        let mut w = World::new();
        let (mut state, _) = w.node("ALICE00001", RoutingSchemeKind::Epidemic);
        let copy = MessageCopy::original(Message::unsigned(mid("ALICE00001", 2), 0, vec![]));
        assert_eq!(
            state.publish(copy),
            Err(RoutingError::OutOfSequence(mid("ALICE00001", 2)))
        );
    }

    #[test]
    fn epidemic_wants_everything_missing() {
        let state = seeded_state(RoutingSchemeKind::Epidemic, &[("AAAAAAAAAA", 2)]);
        let decision = state.decide(&adv("PEER000001", &[("AAAAAAAAAA", 5), ("BBBBBBBBBB", 1)]));
        assert_eq!(
            decision.wanted,
            vec![
                mid("AAAAAAAAAA", 3),
                mid("AAAAAAAAAA", 4),
                mid("AAAAAAAAAA", 5),
                mid("BBBBBBBBBB", 1)
            ]
        );
    }

    #[test]
    fn interest_based_wants_only_followed() {
        let mut state = seeded_state(RoutingSchemeKind::InterestBased, &[("AAAAAAAAAA", 2)]);
        state.follow(uid("AAAAAAAAAA"));
        let advert = adv("PEER000001", &[("AAAAAAAAAA", 5), ("BBBBBBBBBB", 1)]);
        let decision = state.decide(&advert);
        assert_eq!(
            decision.wanted,
            vec![mid("AAAAAAAAAA", 3), mid("AAAAAAAAAA", 4), mid("AAAAAAAAAA", 5)]
        );
        // Pure: asking twice gives the same answer.
        assert_eq!(state.decide(&advert), decision);
    }

    #[test]
    fn dominated_advertisement_wants_nothing() {
        let state = seeded_state(
            RoutingSchemeKind::Epidemic,
            &[("AAAAAAAAAA", 4), ("BBBBBBBBBB", 2)],
        );
        assert!(state
            .decide(&adv("PEER000001", &[("AAAAAAAAAA", 4), ("BBBBBBBBBB", 1)]))
            .is_empty());
    }

    #[test]
    fn follower_becomes_forwarder() {
        let mut w = World::new();
        let (mut alice, alice_creds) = w.node("ALICE00001", RoutingSchemeKind::InterestBased);
        let (mut bob, _) = w.node("BOB0000001", RoutingSchemeKind::InterestBased);
        bob.follow(uid("ALICE00001"));
        publish(&mut alice, &alice_creds, 0, "hi");

        let decision = bob.decide(&alice.advertise());
        assert_eq!(decision.wanted, vec![mid("ALICE00001", 1)]);
        let offered = alice.offer(&decision).unwrap();
        assert_eq!(offered[0].author_cert.subject, uid("ALICE00001"));
        let outcome = bob.receive(offered, &w.ctx(5));
        assert_eq!(outcome.accepted, vec![mid("ALICE00001", 1)]);
        assert_eq!(bob.store()[&mid("ALICE00001", 1)].hop_count, 1);
        assert_eq!(bob.store()[&mid("ALICE00001", 1)].received_at, 5);
        assert_eq!(
            bob.advertise().entries.get(&uid("ALICE00001")),
            Some(&num(1))
        );
    }

    #[test]
    fn interest_based_non_follower_does_not_forward() {
        let mut w = World::new();
        let (mut alice, alice_creds) = w.node("ALICE00001", RoutingSchemeKind::InterestBased);
        let (mut carol, _) = w.node("CAROL00001", RoutingSchemeKind::InterestBased);
        publish(&mut alice, &alice_creds, 0, "hi");
        // Unsolicited push: stored, but Carol does not start relaying Alice.
        let offered = alice
            .offer(&InterestDecision {
                wanted: vec![mid("ALICE00001", 1)],
            })
            .unwrap();
        carol.receive(offered, &w.ctx(1));
        assert!(carol.holds(&mid("ALICE00001", 1)));
        assert!(!carol.forwarding_for().contains(&uid("ALICE00001")));
        assert!(carol.advertise().entries.is_empty());
    }

    #[test]
    fn tampered_copy_is_dropped_rest_accepted() {
        let mut w = World::new();
        let (mut alice, alice_creds) = w.node("ALICE00001", RoutingSchemeKind::Epidemic);
        let (mut bob, _) = w.node("BOB0000001", RoutingSchemeKind::Epidemic);
        for t in 0..3 {
            publish(&mut alice, &alice_creds, t, "post");
        }
        let mut offered = alice.offer(&bob.decide(&alice.advertise())).unwrap();
        assert_eq!(offered.len(), 3);
        offered[2].copy.message.payload[0] ^= 1;
        let outcome = bob.receive(offered, &w.ctx(4));
        assert_eq!(outcome.accepted.len(), 2);
        assert_eq!(
            outcome.dropped,
            vec![(mid("ALICE00001", 3), ForwardFailure::BadMessageSignature)]
        );
        assert_eq!(bob.latest_for(&uid("ALICE00001")), Some(num(2)));
    }

    #[test]
    fn duplicates_are_ignored() {
        let mut w = World::new();
        let (mut alice, alice_creds) = w.node("ALICE00001", RoutingSchemeKind::Epidemic);
        let (mut bob, _) = w.node("BOB0000001", RoutingSchemeKind::Epidemic);
        publish(&mut alice, &alice_creds, 0, "post");
        let offered = alice.offer(&bob.decide(&alice.advertise())).unwrap();
        bob.receive(offered.clone(), &w.ctx(1));
        let before = bob.store().clone();
        let outcome = bob.receive(offered, &w.ctx(2));
        assert_eq!(outcome.duplicates, vec![mid("ALICE00001", 1)]);
        assert_eq!(bob.store(), &before);
    }

    #[test]
    fn offering_unheld_message_is_an_error() {
        let mut w = World::new();
        let (mut alice, alice_creds) = w.node("ALICE00001", RoutingSchemeKind::Epidemic);
        publish(&mut alice, &alice_creds, 0, "post");
        assert!(alice.offer(&InterestDecision::default()).unwrap().is_empty());
        let beyond = InterestDecision {
            wanted: vec![mid("ALICE00001", 2)],
        };
        assert_eq!(
            alice.offer(&beyond),
            Err(RoutingError::MissingMessage(mid("ALICE00001", 2)))
        );
    }

    #[test]
    fn offers_come_sorted_with_certs() {
        let mut w = World::new();
        let (mut alice, alice_creds) = w.node("ALICE00001", RoutingSchemeKind::Epidemic);
        for t in 0..5 {
            publish(&mut alice, &alice_creds, t, "post");
        }
        let wanted = InterestDecision {
            wanted: vec![mid("ALICE00001", 5), mid("ALICE00001", 3), mid("ALICE00001", 4)],
        };
        let offered = alice.offer(&wanted).unwrap();
        let ids: Vec<_> = offered.iter().map(|o| o.copy.id()).collect();
        assert_eq!(
            ids,
            vec![mid("ALICE00001", 3), mid("ALICE00001", 4), mid("ALICE00001", 5)]
        );
        assert!(offered.iter().all(|o| o.author_cert == alice_creds.certificate));
    }

    #[test]
    fn gap_does_not_advance_latest() {
        let mut state = seeded_state(RoutingSchemeKind::Epidemic, &[("AAAAAAAAAA", 1)]);
        state.store.insert(
            mid("AAAAAAAAAA", 3),
            MessageCopy::original(Message::unsigned(mid("AAAAAAAAAA", 3), 0, vec![])),
        );
        state.advance_latest(uid("AAAAAAAAAA"), 1);
        assert_eq!(state.latest_for(&uid("AAAAAAAAAA")), Some(num(1)));
        state.store.insert(
            mid("AAAAAAAAAA", 2),
            MessageCopy::original(Message::unsigned(mid("AAAAAAAAAA", 2), 0, vec![])),
        );
        state.advance_latest(uid("AAAAAAAAAA"), 2);
        assert_eq!(state.latest_for(&uid("AAAAAAAAAA")), Some(num(3)));
    }

    #[test]
    fn advertisement_eviction_keeps_owner_and_most_recent() {
        let mut state = seeded_state(RoutingSchemeKind::Epidemic, &[]);
        state.store.insert(
            mid("OWNER00001", 1),
            MessageCopy::original(Message::unsigned(mid("OWNER00001", 1), 0, vec![])),
        );
        state.advance_latest(uid("OWNER00001"), 0);
        for i in 0..80u64 {
            let author = format!("A{i:09}");
            state.store.insert(
                mid(&author, 1),
                MessageCopy::original(Message::unsigned(mid(&author, 1), 0, vec![])),
            );
            state.advance_latest(uid(&author), 1 + i);
            state.forwarding_for.insert(uid(&author));
        }
        let advert = state.advertise();
        assert_eq!(advert.entries.len(), MAX_ADVERTISEMENT_ENTRIES);
        assert!(advert.entries.contains_key(&uid("OWNER00001")));
        // Authors 17..80 are the 63 most recently updated.
        assert!(advert.entries.contains_key(&uid("A000000079")));
        assert!(advert.entries.contains_key(&uid("A000000017")));
        assert!(!advert.entries.contains_key(&uid("A000000016")));
    }

    #[test]
    fn unfollow_keeps_copies_and_forwarding() {
        let mut w = World::new();
        let (mut alice, alice_creds) = w.node("ALICE00001", RoutingSchemeKind::InterestBased);
        let (mut bob, _) = w.node("BOB0000001", RoutingSchemeKind::InterestBased);
        bob.follow(uid("ALICE00001"));
        publish(&mut alice, &alice_creds, 0, "one");
        let offered = alice.offer(&bob.decide(&alice.advertise())).unwrap();
        bob.receive(offered, &w.ctx(1));
        assert!(bob.unfollow(&uid("ALICE00001")));
        publish(&mut alice, &alice_creds, 2, "two");
        assert!(bob.decide(&alice.advertise()).is_empty());
        assert!(bob.holds(&mid("ALICE00001", 1)));
        assert!(bob.forwarding_for().contains(&uid("ALICE00001")));
    }

    #[test]
    fn scheme_kind_parses() {
        assert_eq!("ib".parse(), Ok(RoutingSchemeKind::InterestBased));
        assert_eq!("epidemic".parse(), Ok(RoutingSchemeKind::Epidemic));
        assert!("prophet".parse::<RoutingSchemeKind>().is_err());
        assert_eq!(
            serde_json::to_string(&RoutingSchemeKind::InterestBased).unwrap(),
            "\"ib\""
        );
        for kind in [RoutingSchemeKind::Epidemic, RoutingSchemeKind::InterestBased] {
            assert_eq!(kind.scheme().kind(), kind);
        }
    }

    fn arb_latest() -> impl Strategy<Value = Vec<(u8, u64)>> {
        proptest::collection::vec((0u8..6, 1u64..8), 0..6)
    }

    fn author(i: u8) -> String {
        format!("AUTHOR{i:04}")
    }

    proptest! {
        #[test]
        fn interest_based_decision_is_subset_of_epidemic(
            local in arb_latest(), remote in arb_latest(), follows in proptest::collection::vec(0u8..6, 0..6)
        ) {
            let local: BTreeMap<String, u64> = local.into_iter().map(|(a, n)| (author(a), n)).collect();
            let refs: Vec<(&str, u64)> = local.iter().map(|(a, n)| (a.as_str(), *n)).collect();
            let epi = seeded_state(RoutingSchemeKind::Epidemic, &refs);
            let mut ib = seeded_state(RoutingSchemeKind::InterestBased, &refs);
            for f in &follows {
                ib.follow(uid(&author(*f)));
            }
            let remote: BTreeMap<String, u64> = remote.into_iter().map(|(a, n)| (author(a), n)).collect();
            let entries: Vec<(&str, u64)> = remote.iter().map(|(a, n)| (a.as_str(), *n)).collect();
            let advert = adv("PEER000001", &entries);
            let e = epi.decide(&advert);
            let i = ib.decide(&advert);
            prop_assert!(i.wanted.iter().all(|id| e.wanted.contains(id)));
            for id in &e.wanted {
                let have = local.get(id.author.as_str()).copied().unwrap_or(0);
                prop_assert!(have < id.number.get());
                prop_assert!(id.number.get() <= remote[id.author.as_str()]);
            }
            let mut sorted = e.wanted.clone();
            sorted.sort();
            prop_assert_eq!(sorted, e.wanted);
        }
    }
}

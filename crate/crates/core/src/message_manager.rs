//! Session bookkeeping between the routing layer and the link layer.
//!
//! A session covers one unordered pair of nodes and carries two directional
//! flows. Each tick the flows are re-planned from fresh advertisements, so
//! resuming after a disconnect needs no per-peer cursor: whatever was not
//! transferred is simply still wanted at the next encounter.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    put_bytes, Advertisement, MessageCopy, MessageId, MessageNumber, ModelError, Reader, UserId,
};
use crate::routing::{InterestDecision, OfferedCopy, RoutingError, RoutingState};
use crate::security::Certificate;

/// Largest encoded frame, header included.
pub const MAX_FRAME: usize = 64 * 1024;
/// Tag plus big-endian body length.
pub const FRAME_HEADER_LEN: usize = 5;
const ID_LEN: usize = 10 + 8;
/// Most message ids one `Request` frame can carry.
pub const MAX_REQUEST_IDS: usize = (MAX_FRAME - FRAME_HEADER_LEN - 4) / ID_LEN;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("frame of {0} bytes exceeds the {MAX_FRAME}-byte limit")]
    FrameOversize(usize),
    #[error("unknown frame kind tag {0:#04x}")]
    UnknownKind(u8),
    #[error("expected a {expected:?} frame, got {got:?}")]
    UnexpectedFrame { expected: FrameKind, got: FrameKind },
    #[error("session is {0:?}; transfers need an established session")]
    WrongPhase(Phase),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum FrameKind {
    CertExchange = 1,
    Request = 2,
    MessageData = 3,
    Ack = 4,
    Close = 5,
}

impl FrameKind {
    fn from_tag(tag: u8) -> Result<Self, SessionError> {
        Ok(match tag {
            1 => FrameKind::CertExchange,
            2 => FrameKind::Request,
            3 => FrameKind::MessageData,
            4 => FrameKind::Ack,
            5 => FrameKind::Close,
            other => return Err(SessionError::UnknownKind(other)),
        })
    }

    /// Only message data is charged against the link's byte budget; the
    /// remaining kinds are small control frames.
    pub fn is_data(self) -> bool {
        self == FrameKind::MessageData
    }
}

/// `kind(1) ‖ body_len(4, big-endian) ‖ body`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireFrame {
    pub kind: FrameKind,
    pub body: Vec<u8>,
}

impl WireFrame {
    pub fn new(kind: FrameKind, body: Vec<u8>) -> Result<Self, SessionError> {
        let len = FRAME_HEADER_LEN + body.len();
        if len > MAX_FRAME {
            return Err(SessionError::FrameOversize(len));
        }
        Ok(Self { kind, body })
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_HEADER_LEN + self.body.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.kind as u8);
        put_bytes(&mut out, &self.body);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, SessionError> {
        if bytes.len() > MAX_FRAME {
            return Err(SessionError::FrameOversize(bytes.len()));
        }
        let mut reader = Reader::new(bytes);
        let kind = FrameKind::from_tag(reader.u8()?)?;
        let body = reader.bytes()?;
        reader.finish()?;
        Ok(Self { kind, body })
    }

    fn expect(&self, kind: FrameKind) -> Result<Reader<'_>, SessionError> {
        if self.kind != kind {
            return Err(SessionError::UnexpectedFrame {
                expected: kind,
                got: self.kind,
            });
        }
        Ok(Reader::new(&self.body))
    }

    pub fn cert_exchange(cert: &Certificate) -> Result<Self, SessionError> {
        Self::new(FrameKind::CertExchange, cert.encode())
    }

    pub fn to_certificate(&self) -> Result<Certificate, SessionError> {
        let mut reader = self.expect(FrameKind::CertExchange)?;
        let cert = Certificate::read(&mut reader)?;
        reader.finish()?;
        Ok(cert)
    }

    /// Splits a request into as many frames as needed.
    pub fn requests(ids: &[MessageId]) -> Vec<Self> {
        ids.chunks(MAX_REQUEST_IDS)
            .map(|chunk| {
                let mut body = Vec::with_capacity(4 + chunk.len() * ID_LEN);
                body.extend_from_slice(&(chunk.len() as u32).to_be_bytes());
                for id in chunk {
                    put_id(&mut body, id);
                }
                Self::new(FrameKind::Request, body).expect("chunk sized to fit")
            })
            .collect()
    }

    pub fn to_request(&self) -> Result<Vec<MessageId>, SessionError> {
        let mut reader = self.expect(FrameKind::Request)?;
        let count = reader.u32()? as usize;
        let ids = (0..count)
            .map(|_| read_id(&mut reader))
            .collect::<Result<Vec<_>, _>>()?;
        reader.finish()?;
        Ok(ids)
    }

    /// `hop_count(4) ‖ received_at(8) ‖ message ‖ certificate`, the last two
    /// length-prefixed.
    pub fn message_data(offered: &OfferedCopy) -> Result<Self, SessionError> {
        let message = offered.copy.message.encode()?;
        let cert = offered.author_cert.encode();
        let mut body = Vec::with_capacity(12 + 8 + message.len() + cert.len());
        body.extend_from_slice(&offered.copy.hop_count.to_be_bytes());
        body.extend_from_slice(&offered.copy.received_at.to_be_bytes());
        put_bytes(&mut body, &message);
        put_bytes(&mut body, &cert);
        Self::new(FrameKind::MessageData, body)
    }

    pub fn to_offered(&self) -> Result<OfferedCopy, SessionError> {
        let mut reader = self.expect(FrameKind::MessageData)?;
        let hop_count = reader.u32()?;
        let received_at = reader.u64()?;
        let message = crate::model::Message::decode(&reader.bytes()?)?;
        let author_cert = Certificate::decode(&reader.bytes()?)?;
        reader.finish()?;
        Ok(OfferedCopy {
            copy: MessageCopy {
                message,
                hop_count,
                received_at,
            },
            author_cert,
        })
    }

    pub fn ack(id: &MessageId) -> Self {
        let mut body = Vec::with_capacity(ID_LEN);
        put_id(&mut body, id);
        Self::new(FrameKind::Ack, body).expect("fixed size")
    }

    pub fn to_ack(&self) -> Result<MessageId, SessionError> {
        let mut reader = self.expect(FrameKind::Ack)?;
        let id = read_id(&mut reader)?;
        reader.finish()?;
        Ok(id)
    }

    pub fn close() -> Self {
        Self::new(FrameKind::Close, Vec::new()).expect("empty body")
    }
}

fn put_id(out: &mut Vec<u8>, id: &MessageId) {
    out.extend_from_slice(id.author.as_bytes());
    out.extend_from_slice(&id.number.get().to_be_bytes());
}

fn read_id(reader: &mut Reader<'_>) -> Result<MessageId, ModelError> {
    let author = reader.user_id()?;
    let number = MessageNumber::new(reader.u64()?)?;
    Ok(MessageId::new(author, number))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Handshaking,
    Established,
    Transferring,
    Closed,
}

/// A node's request to connect after seeing a peer's advertisement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionRequest {
    pub requester: UserId,
    pub target: UserId,
    pub wanted: InterestDecision,
}

/// Consults the node's routing scheme; asks for a connection only when the
/// peer advertises something the node wants.
pub fn on_peer_found(
    node: &RoutingState,
    peer: UserId,
    adv: &Advertisement,
) -> Option<ConnectionRequest> {
    let wanted = node.decide(adv);
    (!wanted.is_empty()).then(|| ConnectionRequest {
        requester: node.owner(),
        target: peer,
        wanted,
    })
}

/// One direction of a session: `sender` serves `receiver`'s plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flow {
    pub sender: UserId,
    pub receiver: UserId,
    pub plan: VecDeque<MessageId>,
    pub transferred: BTreeSet<MessageId>,
}

impl Flow {
    fn new(sender: UserId, receiver: UserId) -> Self {
        Self {
            sender,
            receiver,
            plan: VecDeque::new(),
            transferred: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct PartialFrame {
    flow: usize,
    id: MessageId,
    frame: WireFrame,
    sent: usize,
}

/// A frame crossing the link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmission {
    pub from: UserId,
    pub to: UserId,
    pub frame: WireFrame,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PumpOutput {
    pub transmissions: Vec<Transmission>,
    pub data_bytes: u64,
}

/// Session over one unordered pair. The lower user id is the requester; its
/// flow (lower receives) is served first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    pub session_id: u64,
    pub local: UserId,
    pub remote: UserId,
    pub phase: Phase,
    pub interrupted: bool,
    /// Set once both certificates validated.
    pub authenticated: bool,
    pub flows: [Flow; 2],
    pub untransferred: Vec<MessageId>,
    in_flight: Option<PartialFrame>,
}

impl SessionState {
    pub fn new(session_id: u64, a: UserId, b: UserId) -> Self {
        let (local, remote) = if a <= b { (a, b) } else { (b, a) };
        Self {
            session_id,
            local,
            remote,
            phase: Phase::Handshaking,
            interrupted: false,
            authenticated: false,
            flows: [Flow::new(remote, local), Flow::new(local, remote)],
            untransferred: Vec::new(),
            in_flight: None,
        }
    }

    pub fn flow_index(&self, receiver: &UserId) -> usize {
        usize::from(*receiver != self.local)
    }

    /// Replaces a flow's plan with `wanted`, minus anything already moved
    /// in this session. Ignored while that message is mid-frame.
    pub fn plan(&mut self, receiver: &UserId, wanted: &InterestDecision) {
        let index = self.flow_index(receiver);
        let in_flight = self
            .in_flight
            .as_ref()
            .filter(|p| p.flow == index)
            .map(|p| p.id);
        let flow = &mut self.flows[index];
        let mut ids: Vec<MessageId> = wanted
            .wanted
            .iter()
            .filter(|id| !flow.transferred.contains(id) && Some(**id) != in_flight)
            .copied()
            .collect();
        ids.sort_unstable();
        ids.dedup();
        flow.plan = ids.into();
    }

    pub fn has_pending(&self) -> bool {
        self.in_flight.is_some() || self.flows.iter().any(|f| !f.plan.is_empty())
    }

    /// Marks a message as delivered after the receiver's Ack.
    pub fn acknowledge(&mut self, receiver: &UserId, id: MessageId) {
        let flow = &mut self.flows[self.flow_index(receiver)];
        flow.plan.retain(|p| *p != id);
        flow.transferred.insert(id);
    }

    pub fn close(&mut self) {
        self.phase = Phase::Closed;
    }
}

/// Handles a lost contact: closes the session and records what was still
/// pending. Partially sent frames are discarded by the caller.
pub fn on_peer_lost(session: &mut SessionState) -> Vec<MessageId> {
    let mut pending: Vec<MessageId> = Vec::new();
    if let Some(partial) = session.in_flight.take() {
        pending.push(partial.id);
    }
    for flow in &mut session.flows {
        pending.extend(flow.plan.drain(..));
    }
    pending.sort_unstable();
    session.interrupted = session.phase != Phase::Closed;
    session.phase = Phase::Closed;
    session.untransferred = pending.clone();
    pending
}

/// Emits the session's next frames in plan order. Message frames are sent
/// whole when they fit the remaining budget; a frame larger than an entire
/// tick's budget is streamed across ticks. Request frames for non-empty
/// plans precede the data of each flow.
pub fn pump_session(
    session: &mut SessionState,
    budget: u64,
    lower: &RoutingState,
    higher: &RoutingState,
) -> Result<PumpOutput, SessionError> {
    match session.phase {
        Phase::Established | Phase::Transferring => {}
        other => return Err(SessionError::WrongPhase(other)),
    }
    debug_assert_eq!(lower.owner(), session.local);
    debug_assert_eq!(higher.owner(), session.remote);

    let mut out = PumpOutput::default();
    let mut remaining = budget;

    if let Some(mut partial) = session.in_flight.take() {
        let left = (partial.frame.encoded_len() - partial.sent) as u64;
        let chunk = left.min(remaining);
        partial.sent += chunk as usize;
        remaining -= chunk;
        out.data_bytes += chunk;
        if partial.sent == partial.frame.encoded_len() {
            let flow = &session.flows[partial.flow];
            out.transmissions.push(Transmission {
                from: flow.sender,
                to: flow.receiver,
                frame: partial.frame,
            });
        } else {
            session.in_flight = Some(partial);
            return Ok(out);
        }
    }

    for index in 0..2 {
        let (sender_state, flow) = match index {
            0 => (higher, &mut session.flows[0]),
            _ => (lower, &mut session.flows[1]),
        };
        if flow.plan.is_empty() {
            continue;
        }
        let requested: Vec<MessageId> = flow.plan.iter().copied().collect();
        for frame in WireFrame::requests(&requested) {
            out.transmissions.push(Transmission {
                from: flow.receiver,
                to: flow.sender,
                frame,
            });
        }
        while let Some(id) = flow.plan.front().copied() {
            let offered = sender_state.offer(&InterestDecision { wanted: vec![id] })?;
            let frame = WireFrame::message_data(&offered[0])?;
            let size = frame.encoded_len() as u64;
            if size <= remaining {
                flow.plan.pop_front();
                remaining -= size;
                out.data_bytes += size;
                out.transmissions.push(Transmission {
                    from: flow.sender,
                    to: flow.receiver,
                    frame,
                });
            } else if size > budget && remaining > 0 {
                flow.plan.pop_front();
                out.data_bytes += remaining;
                session.in_flight = Some(PartialFrame {
                    flow: index,
                    id,
                    frame,
                    sent: remaining as usize,
                });
                remaining = 0;
                break;
            } else {
                break;
            }
        }
        if remaining == 0 || session.in_flight.is_some() {
            break;
        }
    }
    if out.data_bytes > 0 {
        session.phase = Phase::Transferring;
    }
    Ok(out)
}

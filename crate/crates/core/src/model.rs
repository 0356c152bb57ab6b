//! Domain vocabulary shared by every layer: identifiers, messages,
//! advertisements, actions, and their canonical byte encodings.
//!
//! All integers on the wire are big-endian and strings are raw bytes
//! without terminators.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulation time in whole seconds.
pub type Timestamp = u64;

/// Encoded length of a [`UserId`].
pub const USER_ID_LEN: usize = 10;
/// Largest payload a [`Message`] may carry.
pub const MAX_PAYLOAD: usize = 4096;
/// Largest number of entries an [`Advertisement`] may carry.
pub const MAX_ADVERTISEMENT_ENTRIES: usize = 64;

const SIGNABLE_HEADER_LEN: usize = USER_ID_LEN + 8 + 8 + 4;
const ADVERTISEMENT_HEADER_LEN: usize = USER_ID_LEN + 2;
const ADVERTISEMENT_ENTRY_LEN: usize = USER_ID_LEN + 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("user id must be exactly {USER_ID_LEN} printable ASCII characters, got {0:?}")]
    InvalidUserId(String),
    #[error("message number must be at least 1")]
    ZeroMessageNumber,
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte limit")]
    Oversize(usize),
    #[error("advertisement carries {0} entries, limit is {MAX_ADVERTISEMENT_ENTRIES}")]
    Capacity(usize),
    #[error("truncated input: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after a complete record")]
    TrailingBytes(usize),
    #[error("advertisement entries are not in ascending user id order")]
    NonCanonical,
}

/// Fixed-width user identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UserId([u8; USER_ID_LEN]);

impl UserId {
    pub fn new(value: &str) -> Result<Self, ModelError> {
        Self::from_bytes(value.as_bytes()).ok_or_else(|| ModelError::InvalidUserId(value.into()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != USER_ID_LEN || !bytes.iter().all(|b| b.is_ascii_graphic()) {
            return None;
        }
        let mut raw = [0u8; USER_ID_LEN];
        raw.copy_from_slice(bytes);
        Some(Self(raw))
    }

    pub fn as_bytes(&self) -> &[u8; USER_ID_LEN] {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        // Constructors only admit ASCII.
        std::str::from_utf8(&self.0).expect("user id is ascii")
    }
}

impl fmt::Debug for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UserId({})", self.as_str())
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UserId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl TryFrom<String> for UserId {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(&value)
    }
}

impl From<UserId> for String {
    fn from(id: UserId) -> Self {
        id.as_str().to_owned()
    }
}

/// Per-author sequence number, starting at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct MessageNumber(u64);

impl MessageNumber {
    pub const FIRST: MessageNumber = MessageNumber(1);

    pub fn new(value: u64) -> Result<Self, ModelError> {
        if value == 0 {
            Err(ModelError::ZeroMessageNumber)
        } else {
            Ok(Self(value))
        }
    }

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn next(self) -> Self {
        Self(self.0 + 1)
    }
}

impl TryFrom<u64> for MessageNumber {
    type Error = ModelError;

    fn try_from(value: u64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<MessageNumber> for u64 {
    fn from(n: MessageNumber) -> Self {
        n.0
    }
}

impl fmt::Display for MessageNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MessageId {
    pub author: UserId,
    pub number: MessageNumber,
}

impl MessageId {
    pub fn new(author: UserId, number: MessageNumber) -> Self {
        Self { author, number }
    }
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.author, self.number)
    }
}

/// An author-signed post.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: MessageId,
    pub created_at: Timestamp,
    pub payload: Vec<u8>,
    pub author_signature: Vec<u8>,
}

impl Message {
    /// An unsigned message; see [`crate::security::sign_message`].
    pub fn unsigned(id: MessageId, created_at: Timestamp, payload: Vec<u8>) -> Self {
        Self {
            id,
            created_at,
            payload,
            author_signature: Vec::new(),
        }
    }

    /// Bytes covered by the author signature.
    pub fn signable_bytes(&self) -> Result<Vec<u8>, ModelError> {
        signable_bytes(self)
    }

    /// Full wire encoding: signable bytes followed by a length-prefixed signature.
    pub fn encode(&self) -> Result<Vec<u8>, ModelError> {
        let mut out = signable_bytes(self)?;
        put_bytes(&mut out, &self.author_signature);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut reader = Reader::new(bytes);
        let message = reader.message()?;
        reader.finish()?;
        Ok(message)
    }

    pub fn encoded_len(&self) -> usize {
        SIGNABLE_HEADER_LEN + self.payload.len() + 4 + self.author_signature.len()
    }
}

/// Canonical encoding of everything a signature covers:
/// `author ‖ number ‖ created_at ‖ payload_len ‖ payload`.
pub fn signable_bytes(message: &Message) -> Result<Vec<u8>, ModelError> {
    if message.payload.len() > MAX_PAYLOAD {
        return Err(ModelError::Oversize(message.payload.len()));
    }
    let mut out = Vec::with_capacity(SIGNABLE_HEADER_LEN + message.payload.len());
    out.extend_from_slice(message.id.author.as_bytes());
    out.extend_from_slice(&message.id.number.get().to_be_bytes());
    out.extend_from_slice(&message.created_at.to_be_bytes());
    put_bytes(&mut out, &message.payload);
    Ok(out)
}

/// A message as held by one node. Hop metadata is local to the copy and
/// never signed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageCopy {
    pub message: Message,
    pub hop_count: u32,
    pub received_at: Timestamp,
}

impl MessageCopy {
    pub fn original(message: Message) -> Self {
        let received_at = message.created_at;
        Self {
            message,
            hop_count: 0,
            received_at,
        }
    }

    pub fn id(&self) -> MessageId {
        self.message.id
    }
}

/// Plaintext `UserId -> latest MessageNumber` dictionary a node broadcasts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Advertisement {
    pub advertiser: UserId,
    pub entries: BTreeMap<UserId, MessageNumber>,
}

impl Advertisement {
    pub fn empty(advertiser: UserId) -> Self {
        Self {
            advertiser,
            entries: BTreeMap::new(),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, ModelError> {
        canonical_advertisement_bytes(self)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut reader = Reader::new(bytes);
        let advertiser = reader.user_id()?;
        let count = reader.u16()? as usize;
        if count > MAX_ADVERTISEMENT_ENTRIES {
            return Err(ModelError::Capacity(count));
        }
        let mut entries = BTreeMap::new();
        let mut previous: Option<UserId> = None;
        for _ in 0..count {
            let user = reader.user_id()?;
            let number = MessageNumber::new(reader.u64()?)?;
            if previous.is_some_and(|p| p >= user) {
                return Err(ModelError::NonCanonical);
            }
            previous = Some(user);
            entries.insert(user, number);
        }
        reader.finish()?;
        Ok(Self {
            advertiser,
            entries,
        })
    }
}

/// `advertiser ‖ count(u16) ‖ (user ‖ number)*` with entries in ascending
/// user id order.
pub fn canonical_advertisement_bytes(adv: &Advertisement) -> Result<Vec<u8>, ModelError> {
    if adv.entries.len() > MAX_ADVERTISEMENT_ENTRIES {
        return Err(ModelError::Capacity(adv.entries.len()));
    }
    let mut out =
        Vec::with_capacity(ADVERTISEMENT_HEADER_LEN + adv.entries.len() * ADVERTISEMENT_ENTRY_LEN);
    out.extend_from_slice(adv.advertiser.as_bytes());
    out.extend_from_slice(&(adv.entries.len() as u16).to_be_bytes());
    for (user, number) in &adv.entries {
        out.extend_from_slice(user.as_bytes());
        out.extend_from_slice(&number.get().to_be_bytes());
    }
    Ok(out)
}

/// Pointwise maximum of a local high-water map and a remote advertisement.
pub fn merge_latest(
    local: &BTreeMap<UserId, MessageNumber>,
    remote: &Advertisement,
) -> BTreeMap<UserId, MessageNumber> {
    let mut merged = local.clone();
    for (user, number) in &remote.entries {
        merged
            .entry(*user)
            .and_modify(|n| *n = (*n).max(*number))
            .or_insert(*number);
    }
    merged
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionKind {
    Publish { message: MessageId },
    Follow { followee: UserId },
    Unfollow { followee: UserId },
}

/// Something a user did locally; it stays unsynced until the next cloud sync.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub at: Timestamp,
    pub actor: UserId,
    pub synced: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subscription {
    pub follower: UserId,
    pub followee: UserId,
    pub since: Timestamp,
    /// Set when the follower unfollows.
    pub until: Option<Timestamp>,
}

impl Subscription {
    pub fn covers(&self, at: Timestamp) -> bool {
        at >= self.since && self.until.is_none_or(|end| at < end)
    }
}

pub(crate) fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

/// Cursor over big-endian encoded input.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(ModelError::Truncated {
                needed: n,
                available,
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn user_id(&mut self) -> Result<UserId, ModelError> {
        let raw = self.take(USER_ID_LEN)?;
        UserId::from_bytes(raw)
            .ok_or_else(|| ModelError::InvalidUserId(String::from_utf8_lossy(raw).into_owned()))
    }

    pub(crate) fn bytes(&mut self) -> Result<Vec<u8>, ModelError> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    pub(crate) fn message(&mut self) -> Result<Message, ModelError> {
        let author = self.user_id()?;
        let number = MessageNumber::new(self.u64()?)?;
        let created_at = self.u64()?;
        let payload = self.bytes()?;
        if payload.len() > MAX_PAYLOAD {
            return Err(ModelError::Oversize(payload.len()));
        }
        let author_signature = self.bytes()?;
        Ok(Message {
            id: MessageId::new(author, number),
            created_at,
            payload,
            author_signature,
        })
    }

    pub(crate) fn finish(&self) -> Result<(), ModelError> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            n => Err(ModelError::TrailingBytes(n)),
        }
    }
}

#[cfg(test)]
pub(crate) mod strategies {
    use super::*;
    use proptest::collection::{btree_map, vec};
    use proptest::prelude::*;

    pub fn user_id() -> impl Strategy<Value = UserId> {
        proptest::array::uniform10(0x21u8..0x7f).prop_map(|raw| UserId::from_bytes(&raw).unwrap())
    }

    pub fn message_number() -> impl Strategy<Value = MessageNumber> {
        (1u64..=u64::MAX).prop_map(|n| MessageNumber::new(n).unwrap())
    }

    pub fn message() -> impl Strategy<Value = Message> {
        (
            user_id(),
            message_number(),
            any::<u64>(),
            vec(any::<u8>(), 0..=MAX_PAYLOAD),
            vec(any::<u8>(), 0..96),
        )
            .prop_map(|(author, number, created_at, payload, sig)| Message {
                id: MessageId::new(author, number),
                created_at,
                payload,
                author_signature: sig,
            })
    }

    pub fn latest_map() -> impl Strategy<Value = BTreeMap<UserId, MessageNumber>> {
        btree_map(user_id(), message_number(), 0..=MAX_ADVERTISEMENT_ENTRIES)
    }

    pub fn advertisement() -> impl Strategy<Value = Advertisement> {
        (user_id(), latest_map()).prop_map(|(advertiser, entries)| Advertisement {
            advertiser,
            entries,
        })
    }
}

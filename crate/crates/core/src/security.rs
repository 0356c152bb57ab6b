//! Lightweight PKI for infrastructure-free operation.
//!
//! A device contacts the certificate authority exactly once, at signup, to
//! obtain a key pair, its own certificate, and the CA root key. Afterwards
//! every check (peer certificates during the handshake, author signatures on
//! forwarded messages) runs offline. Revocation needs connectivity: nodes
//! only learn about revoked users when they sync with the cloud.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use hmac::{Hmac, Mac};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::model::{put_bytes, Message, ModelError, Reader, Timestamp, UserId};

/// Issuer name stamped on every certificate.
pub const CA_ISSUER: &str = "SOS-CA";
pub const SECONDS_PER_DAY: u64 = 86_400;
pub const DEFAULT_CERT_LIFETIME_DAYS: u64 = 365;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SecurityError {
    #[error("user {user} is already bound to a different account")]
    IdentifierMismatch { user: UserId },
    #[error("user {0} already holds a certificate")]
    AlreadyIssued(UserId),
    #[error("certificate authority unreachable: signup requires connectivity")]
    Offline,
    #[error("no certificate was issued to {0}")]
    UnknownSubject(UserId),
    #[error("malformed {0} key")]
    MalformedKey(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    pub public_key: Vec<u8>,
    pub private_key: Vec<u8>,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public_key", &self.public_key)
            .finish_non_exhaustive()
    }
}

/// Key generation, signing, and verification.
pub trait SignatureScheme: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;
    fn generate(&self, rng: &mut dyn RngCore) -> KeyPair;
    fn sign(&self, private_key: &[u8], bytes: &[u8]) -> Result<Vec<u8>, SecurityError>;
    fn verify(&self, public_key: &[u8], bytes: &[u8], signature: &[u8]) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Ed25519;

impl SignatureScheme for Ed25519 {
    fn name(&self) -> &'static str {
        "ed25519"
    }

    fn generate(&self, rng: &mut dyn RngCore) -> KeyPair {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let signing = SigningKey::from_bytes(&seed);
        KeyPair {
            public_key: signing.verifying_key().to_bytes().to_vec(),
            private_key: seed.to_vec(),
        }
    }

    fn sign(&self, private_key: &[u8], bytes: &[u8]) -> Result<Vec<u8>, SecurityError> {
        let seed: [u8; 32] = private_key
            .try_into()
            .map_err(|_| SecurityError::MalformedKey("private"))?;
        Ok(SigningKey::from_bytes(&seed).sign(bytes).to_bytes().to_vec())
    }

    fn verify(&self, public_key: &[u8], bytes: &[u8], signature: &[u8]) -> bool {
        let Ok(public) = <[u8; 32]>::try_from(public_key) else {
            return false;
        };
        let Ok(key) = VerifyingKey::from_bytes(&public) else {
            return false;
        };
        let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else {
            return false;
        };
        key.verify(bytes, &sig).is_ok()
    }
}

/// Test double: HMAC-SHA256 under a symmetric key that doubles as the
/// "public" key. Deterministic and fast; offers no security against anyone
/// holding the public key.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeyedHash;

impl KeyedHash {
    fn mac(key: &[u8], bytes: &[u8]) -> Vec<u8> {
        let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("hmac takes any key length");
        mac.update(bytes);
        mac.finalize().into_bytes().to_vec()
    }
}

impl SignatureScheme for KeyedHash {
    fn name(&self) -> &'static str {
        "keyed-hash"
    }

    fn generate(&self, rng: &mut dyn RngCore) -> KeyPair {
        let mut key = vec![0u8; 32];
        rng.fill_bytes(&mut key);
        KeyPair {
            public_key: key.clone(),
            private_key: key,
        }
    }

    fn sign(&self, private_key: &[u8], bytes: &[u8]) -> Result<Vec<u8>, SecurityError> {
        if private_key.is_empty() {
            return Err(SecurityError::MalformedKey("private"));
        }
        Ok(Self::mac(private_key, bytes))
    }

    fn verify(&self, public_key: &[u8], bytes: &[u8], signature: &[u8]) -> bool {
        let mut mac = match <Hmac<Sha256> as Mac>::new_from_slice(public_key) {
            Ok(mac) => mac,
            Err(_) => return false,
        };
        mac.update(bytes);
        mac.verify_slice(signature).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    #[default]
    Ed25519,
    KeyedHash,
}

impl SchemeKind {
    pub fn instantiate(self) -> Arc<dyn SignatureScheme> {
        match self {
            SchemeKind::Ed25519 => Arc::new(Ed25519),
            SchemeKind::KeyedHash => Arc::new(KeyedHash),
        }
    }
}

/// Flat certificate record. Canonical bytes are the fields in declaration
/// order; byte strings carry a 4-byte length prefix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub subject: UserId,
    pub subject_public_key: Vec<u8>,
    pub issuer: String,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
    pub ca_signature: Vec<u8>,
}

impl Certificate {
    /// Bytes covered by `ca_signature`.
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.subject_public_key.len());
        out.extend_from_slice(self.subject.as_bytes());
        put_bytes(&mut out, &self.subject_public_key);
        put_bytes(&mut out, self.issuer.as_bytes());
        out.extend_from_slice(&self.not_before.to_be_bytes());
        out.extend_from_slice(&self.not_after.to_be_bytes());
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.signed_bytes();
        put_bytes(&mut out, &self.ca_signature);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut reader = Reader::new(bytes);
        let cert = Self::read(&mut reader)?;
        reader.finish()?;
        Ok(cert)
    }

    pub(crate) fn read(reader: &mut Reader<'_>) -> Result<Self, ModelError> {
        Ok(Self {
            subject: reader.user_id()?,
            subject_public_key: reader.bytes()?,
            issuer: String::from_utf8_lossy(&reader.bytes()?).into_owned(),
            not_before: reader.u64()?,
            not_after: reader.u64()?,
            ca_signature: reader.bytes()?,
        })
    }
}

/// Revoked users as last seen by a node.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crl(BTreeSet<UserId>);

impl Crl {
    pub fn contains(&self, user: &UserId) -> bool {
        self.0.contains(user)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Ascending user id order.
    pub fn iter(&self) -> impl Iterator<Item = &UserId> {
        self.0.iter()
    }
}

impl FromIterator<UserId> for Crl {
    fn from_iter<I: IntoIterator<Item = UserId>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateFailure {
    BadSignature,
    Expired,
    NotYetValid,
    Revoked,
}

impl fmt::Display for CertificateFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CertificateFailure::BadSignature => "bad-signature",
            CertificateFailure::Expired => "expired",
            CertificateFailure::NotYetValid => "not-yet-valid",
            CertificateFailure::Revoked => "revoked",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForwardFailure {
    CertInvalid(CertificateFailure),
    SubjectMismatch,
    BadMessageSignature,
}

impl fmt::Display for ForwardFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForwardFailure::CertInvalid(reason) => write!(f, "cert-invalid:{reason}"),
            ForwardFailure::SubjectMismatch => f.write_str("subject-mismatch"),
            ForwardFailure::BadMessageSignature => f.write_str("bad-message-signature"),
        }
    }
}

/// Checks the CA signature, the validity window (inclusive at both ends),
/// and the CRL, in that order.
pub fn validate_certificate(
    scheme: &dyn SignatureScheme,
    cert: &Certificate,
    root_public_key: &[u8],
    now: Timestamp,
    crl: &Crl,
) -> Result<(), CertificateFailure> {
    if cert.issuer != CA_ISSUER
        || !scheme.verify(root_public_key, &cert.signed_bytes(), &cert.ca_signature)
    {
        return Err(CertificateFailure::BadSignature);
    }
    if now < cert.not_before {
        return Err(CertificateFailure::NotYetValid);
    }
    if now > cert.not_after {
        return Err(CertificateFailure::Expired);
    }
    if crl.contains(&cert.subject) {
        return Err(CertificateFailure::Revoked);
    }
    Ok(())
}

/// Fills in the author signature over the message's signable bytes.
pub fn sign_message(
    scheme: &dyn SignatureScheme,
    mut message: Message,
    author_keys: &KeyPair,
) -> Result<Message, SecurityError> {
    let bytes = message.signable_bytes()?;
    message.author_signature = scheme.sign(&author_keys.private_key, &bytes)?;
    Ok(message)
}

/// Receiver-side check for a message that may have arrived through any
/// number of forwarders: the attached certificate must be valid, must belong
/// to the author, and must verify the author signature.
pub fn verify_forwarded(
    scheme: &dyn SignatureScheme,
    message: &Message,
    author_cert: &Certificate,
    root_public_key: &[u8],
    now: Timestamp,
    crl: &Crl,
) -> Result<(), ForwardFailure> {
    validate_certificate(scheme, author_cert, root_public_key, now, crl)
        .map_err(ForwardFailure::CertInvalid)?;
    if author_cert.subject != message.id.author {
        return Err(ForwardFailure::SubjectMismatch);
    }
    let Ok(bytes) = message.signable_bytes() else {
        return Err(ForwardFailure::BadMessageSignature);
    };
    if !scheme.verify(
        &author_cert.subject_public_key,
        &bytes,
        &message.author_signature,
    ) {
        return Err(ForwardFailure::BadMessageSignature);
    }
    Ok(())
}

/// Everything a device walks away with after signup.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credentials {
    pub keypair: KeyPair,
    pub certificate: Certificate,
    pub root_public_key: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Online,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignupRequest {
    pub user: UserId,
    /// Identity the user is logged in with at the CA.
    pub account: String,
    pub reissue: bool,
}

impl SignupRequest {
    pub fn new(user: UserId, account: impl Into<String>) -> Self {
        Self {
            user,
            account: account.into(),
            reissue: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CaState {
    pub root_keypair: KeyPair,
    pub issued: BTreeMap<UserId, Certificate>,
    pub revoked: BTreeSet<UserId>,
    accounts: BTreeMap<UserId, String>,
}

/// Toy certificate authority.
#[derive(Debug, Clone)]
pub struct CertificateAuthority {
    scheme: Arc<dyn SignatureScheme>,
    state: CaState,
    cert_lifetime: u64,
}

impl CertificateAuthority {
    pub fn new(scheme: Arc<dyn SignatureScheme>, rng: &mut dyn RngCore) -> Self {
        let root_keypair = scheme.generate(rng);
        Self {
            scheme,
            state: CaState {
                root_keypair,
                issued: BTreeMap::new(),
                revoked: BTreeSet::new(),
                accounts: BTreeMap::new(),
            },
            cert_lifetime: DEFAULT_CERT_LIFETIME_DAYS * SECONDS_PER_DAY,
        }
    }

    pub fn with_lifetime_days(mut self, days: u64) -> Self {
        self.cert_lifetime = days * SECONDS_PER_DAY;
        self
    }

    pub fn scheme(&self) -> &Arc<dyn SignatureScheme> {
        &self.scheme
    }

    pub fn state(&self) -> &CaState {
        &self.state
    }

    pub fn root_public_key(&self) -> &[u8] {
        &self.state.root_keypair.public_key
    }

    /// One-time enrolment. The key pair is generated with the device's own
    /// randomness; the CA binds the user id to the logged-in account on first
    /// use and refuses later claims on that id from any other account.
    pub fn signup(
        &mut self,
        request: &SignupRequest,
        now: Timestamp,
        connectivity: Connectivity,
        device_rng: &mut dyn RngCore,
    ) -> Result<Credentials, SecurityError> {
        if connectivity == Connectivity::Offline {
            return Err(SecurityError::Offline);
        }
        match self.state.accounts.get(&request.user) {
            Some(bound) if *bound != request.account => {
                return Err(SecurityError::IdentifierMismatch { user: request.user })
            }
            Some(_) if !request.reissue => return Err(SecurityError::AlreadyIssued(request.user)),
            _ => {}
        }

        let keypair = self.scheme.generate(device_rng);
        let mut certificate = Certificate {
            subject: request.user,
            subject_public_key: keypair.public_key.clone(),
            issuer: CA_ISSUER.to_owned(),
            not_before: now,
            not_after: now + self.cert_lifetime,
            ca_signature: Vec::new(),
        };
        certificate.ca_signature = self
            .scheme
            .sign(&self.state.root_keypair.private_key, &certificate.signed_bytes())?;

        self.state
            .accounts
            .insert(request.user, request.account.clone());
        self.state.issued.insert(request.user, certificate.clone());
        Ok(Credentials {
            keypair,
            certificate,
            root_public_key: self.root_public_key().to_vec(),
        })
    }

    pub fn revoke(&mut self, user: UserId) -> Result<(), SecurityError> {
        if !self.state.issued.contains_key(&user) {
            return Err(SecurityError::UnknownSubject(user));
        }
        self.state.revoked.insert(user);
        Ok(())
    }

    /// Snapshot of the revocation list, handed out at cloud sync.
    pub fn fetch_crl(&self) -> Crl {
        self.state.revoked.iter().copied().collect()
    }
}

/// Verification inputs a node holds offline.
#[derive(Clone, Copy)]
pub struct SecurityContext<'a> {
    pub scheme: &'a dyn SignatureScheme,
    pub root_public_key: &'a [u8],
    pub crl: &'a Crl,
    pub now: Timestamp,
}

impl<'a> SecurityContext<'a> {
    pub fn validate(&self, cert: &Certificate) -> Result<(), CertificateFailure> {
        validate_certificate(self.scheme, cert, self.root_public_key, self.now, self.crl)
    }

    pub fn verify_forwarded(
        &self,
        message: &Message,
        author_cert: &Certificate,
    ) -> Result<(), ForwardFailure> {
        verify_forwarded(
            self.scheme,
            message,
            author_cert,
            self.root_public_key,
            self.now,
            self.crl,
        )
    }
}

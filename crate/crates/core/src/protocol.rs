//! Enrollment and three-message mutual authentication.
//!
//! Enrollment (over a trusted channel):
//!
//! ```text
//! client: (K_T, HD) = Gen(B_T, PW_T); BB_T = B_T ^ mask(K_T)
//!         -> BB_T, h(K_T || PW_T)
//! server: s, X_S, SPUB = T_XS(s); ID random; store (ID, BB_T, X_S, s)
//!         O1 = h(BB_T || ID), O2 = h(K_T || PW_T) ^ h(X_S)
//!         <- O1, O2, s, SPUB, p
//! ```
//!
//! Authentication:
//!
//! ```text
//! client: (K, w) = Rep(B, PW, HD); BB = w ^ mask(K)
//!         M1 = T_RC(s), M2 = T_RC(SPUB), a = h(K || PW) ^ h(M1 || M2 || t1)
//!         -> O1, O2, BB, M1, a, t1
//! server: check t1, h(BB || ID) == O1, M2' = T_XS(M1),
//!         a == (O2 ^ h(X_S)) ^ h(M1 || M2' || t1)
//!         M3 = T_RS(s), b = h(M2' || M3 || t2)
//!         <- M3, b, t2
//! client: check t2, b; M4 = T_RC(M3), g = h(M2 || M4 || t3)
//!         -> g, t3
//! server: check t3; M4' = T_RS(M1); g == h(M2' || M4' || t3)
//! ```
//!
//! Both sides finish with `H("SK" || M4)`. Field elements hash as 32-byte
//! big-endian strings and timestamps as 8-byte big-endian milliseconds.

use alloc::collections::BTreeMap;
use alloc::string::String;
use core::fmt;

use num_bigint::BigUint;
use rand_core::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::chebmath::{
    cheb_eval, element_to_bytes, server_keygen, ChebParams, Modulus, ParamError, SecretDegree,
    ELEMENT_BYTES,
};
use crate::fuzzy::{fe_gen, fe_rep, mask_expand, BioKey, BitVector, CodeParams, FuzzyError, HelperData};

pub const DIGEST_BYTES: usize = 32;
pub const ID_BYTES: usize = 16;
pub const DEFAULT_WINDOW_MS: u64 = 30_000;

pub type Digest32 = [u8; DIGEST_BYTES];
/// A serialized field element (32 bytes, big-endian). Not necessarily
/// reduced: values arriving off the wire are checked where they are used.
pub type Element = [u8; ELEMENT_BYTES];
/// Milliseconds since the Unix epoch.
pub type Timestamp = u64;

fn h(parts: &[&[u8]]) -> Digest32 {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p);
    }
    hasher.finalize().into()
}

fn xor32(a: &Digest32, b: &Digest32) -> Digest32 {
    let mut out = [0u8; DIGEST_BYTES];
    for i in 0..DIGEST_BYTES {
        out[i] = a[i] ^ b[i];
    }
    out
}

fn element(x: &BigUint) -> Element {
    element_to_bytes(x).expect("reduced element fits 32 bytes")
}

/// `h(K || PW)`.
pub fn key_password_tag(key: &BioKey, pw: &[u8]) -> Digest32 {
    h(&[key.as_bytes(), pw])
}

/// `h(BB || ID)`.
pub fn lookup_digest(bb: &BitVector, id: &[u8; ID_BYTES]) -> Digest32 {
    h(&[bb.as_bytes(), id])
}

/// `h(A || B || t)` over serialized elements and timestamp.
fn transcript_digest(a: &Element, b: &Element, t: Timestamp) -> Digest32 {
    h(&[a, b, &t.to_be_bytes()])
}

fn secret_digest(x_s: &SecretDegree) -> Digest32 {
    h(&[&x_s.to_bytes()])
}

fn is_fresh(now: Timestamp, t: Timestamp, window_ms: u64) -> bool {
    now.abs_diff(t) <= window_ms
}

/// Why a party refused to continue. Servers log these; the wire only ever
/// carries a uniform failure message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RejectReason {
    StaleTimestamp,
    UnknownCredential,
    TemplateMismatch,
    ProofMismatch,
    DuplicateM1,
    UnknownSession,
    ServerInauthentic,
    Malformed,
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::StaleTimestamp => "stale-timestamp",
            RejectReason::UnknownCredential => "unknown-credential",
            RejectReason::TemplateMismatch => "template-mismatch",
            RejectReason::ProofMismatch => "proof-mismatch",
            RejectReason::DuplicateM1 => "duplicate-m1",
            RejectReason::UnknownSession => "unknown-session",
            RejectReason::ServerInauthentic => "server-inauthentic",
            RejectReason::Malformed => "malformed",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Errors from server operations that touch the enrollment store.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServerError<E> {
    #[error("rejected: {0}")]
    Rejected(RejectReason),
    #[error("store failure: {0:?}")]
    Store(E),
}

impl<E> From<RejectReason> for ServerError<E> {
    fn from(r: RejectReason) -> Self {
        ServerError::Rejected(r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("enrollment response uses modulus other than the configured one")]
    UnexpectedModulus,
}

// ---- messages ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrollRequest {
    pub bb_t: BitVector,
    pub tag: Digest32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrollResponse {
    pub o1: Digest32,
    pub o2: Digest32,
    pub s: Element,
    pub spub: Element,
    pub p: Element,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthRequest {
    pub o1: Digest32,
    pub o2: Digest32,
    pub bb: BitVector,
    pub m1: Element,
    pub alpha: Digest32,
    pub t1: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthChallenge {
    pub m3: Element,
    pub beta: Digest32,
    pub t2: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthConfirm {
    pub gamma: Digest32,
    pub t3: Timestamp,
}

/// The agreed 32-byte session key, `H("SK" || M4)`.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey(pub [u8; 32]);

impl SessionKey {
    fn derive(m4: &Element) -> Self {
        SessionKey(h(&[b"SK", m4]))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// First 8 hex characters of `H(key)`, for comparing keys by eye.
    pub fn fingerprint(&self) -> String {
        use core::fmt::Write;
        let digest = h(&[&self.0]);
        let mut out = String::with_capacity(8);
        for b in &digest[..4] {
            write!(out, "{b:02x}").expect("writing to a String");
        }
        out
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionKey({})", self.fingerprint())
    }
}

// ---- client ----

/// Everything the device keeps after enrollment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientCredential {
    pub o1: Digest32,
    pub o2: Digest32,
    pub params: ChebParams,
    pub hd: HelperData,
}

impl ClientCredential {
    pub fn code(&self) -> CodeParams {
        self.hd.code
    }
}

/// Client state between sending an [`EnrollRequest`] and receiving the
/// response.
#[derive(Debug, Clone)]
pub struct PendingEnrollment {
    key: BioKey,
    hd: HelperData,
}

impl PendingEnrollment {
    pub fn key(&self) -> &BioKey {
        &self.key
    }

    pub fn helper_data(&self) -> &HelperData {
        &self.hd
    }

    /// Validates the server's response and builds the stored credential.
    /// With `expected` set, the response must carry that modulus.
    pub fn complete(
        self,
        resp: &EnrollResponse,
        expected: Option<&Modulus>,
    ) -> Result<ClientCredential, ClientError> {
        let p = Modulus::from_be_bytes(&resp.p)?;
        if let Some(want) = expected {
            if want != &p {
                return Err(ClientError::UnexpectedModulus);
            }
        }
        let params = ChebParams::new(
            p,
            BigUint::from_bytes_be(&resp.s),
            BigUint::from_bytes_be(&resp.spub),
        )?;
        Ok(ClientCredential { o1: resp.o1, o2: resp.o2, params, hd: self.hd })
    }
}

/// First enrollment step on the device.
pub fn enroll_client<R: RngCore + CryptoRng + ?Sized>(
    b_t: &BitVector,
    pw: &[u8],
    code: &CodeParams,
    rng: &mut R,
) -> Result<(EnrollRequest, PendingEnrollment), FuzzyError> {
    let (key, hd) = fe_gen(b_t, pw, code, rng)?;
    let bb_t = b_t.xor(&mask_expand(&key, code.n()))?;
    let tag = key_password_tag(&key, pw);
    Ok((EnrollRequest { bb_t, tag }, PendingEnrollment { key, hd }))
}

/// Client state between the request and the server's challenge.
#[derive(Debug, Clone)]
pub struct ClientSession {
    r_c: SecretDegree,
    m2: Element,
    p: Modulus,
    window_ms: u64,
}

impl ClientSession {
    pub fn secret_degree(&self) -> &SecretDegree {
        &self.r_c
    }

    /// Verifies the server's proof and produces the confirmation.
    pub fn finish(
        self,
        challenge: &AuthChallenge,
        now: Timestamp,
    ) -> Result<(AuthConfirm, SessionKey), RejectReason> {
        if !is_fresh(now, challenge.t2, self.window_ms) {
            return Err(RejectReason::StaleTimestamp);
        }
        if transcript_digest(&self.m2, &challenge.m3, challenge.t2) != challenge.beta {
            return Err(RejectReason::ServerInauthentic);
        }
        let m3 = BigUint::from_bytes_be(&challenge.m3);
        let m4 = cheb_eval(self.r_c.value(), &m3, &self.p).map_err(|_| RejectReason::Malformed)?;
        let m4 = element(&m4);
        let t3 = now;
        let gamma = transcript_digest(&self.m2, &m4, t3);
        Ok((AuthConfirm { gamma, t3 }, SessionKey::derive(&m4)))
    }
}

/// First authentication step on the device.
pub fn auth_client_start<R: RngCore + CryptoRng + ?Sized>(
    cred: &ClientCredential,
    b: &BitVector,
    pw: &[u8],
    now: Timestamp,
    window_ms: u64,
    rng: &mut R,
) -> Result<(AuthRequest, ClientSession), FuzzyError> {
    let code = cred.code();
    let (key, w) = fe_rep(b, pw, &cred.hd)?;
    // BB from the reconstructed template, not the raw reading.
    let bb = w.xor(&mask_expand(&key, code.n()))?;

    let p = &cred.params.p;
    let r_c = SecretDegree::random(rng);
    let m1 = element(&cheb_eval(r_c.value(), &cred.params.s, p).expect("credential s < p"));
    let m2 = element(&cheb_eval(r_c.value(), &cred.params.spub, p).expect("credential spub < p"));
    let t1 = now;
    let alpha = xor32(&key_password_tag(&key, pw), &transcript_digest(&m1, &m2, t1));

    let req = AuthRequest { o1: cred.o1, o2: cred.o2, bb, m1, alpha, t1 };
    Ok((req, ClientSession { r_c, m2, p: p.clone(), window_ms }))
}

// ---- server ----

/// One enrolled user as the server stores it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrollmentRecord {
    pub id: [u8; ID_BYTES],
    pub bb_t: BitVector,
    pub x_s: SecretDegree,
    pub s: BigUint,
    pub o1: Digest32,
}

impl EnrollmentRecord {
    /// `o1 == h(bb_t || id)`.
    pub fn is_consistent(&self) -> bool {
        lookup_digest(&self.bb_t, &self.id) == self.o1
    }
}

/// Server-side enrollment database keyed by `O1`.
pub trait EnrollmentStore {
    type Error: fmt::Debug;

    /// Persists a new record; must fail if `o1` is already present.
    fn put(&mut self, record: EnrollmentRecord) -> Result<(), Self::Error>;

    fn get(&self, o1: &Digest32) -> Result<Option<EnrollmentRecord>, Self::Error>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("record with this lookup digest already exists")]
pub struct DuplicateRecord;

/// Volatile store for tests and simulations.
#[derive(Debug, Default, Clone)]
pub struct MemoryStore {
    records: BTreeMap<Digest32, EnrollmentRecord>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &EnrollmentRecord> {
        self.records.values()
    }
}

impl EnrollmentStore for MemoryStore {
    type Error = DuplicateRecord;

    fn put(&mut self, record: EnrollmentRecord) -> Result<(), DuplicateRecord> {
        if self.records.contains_key(&record.o1) {
            return Err(DuplicateRecord);
        }
        self.records.insert(record.o1, record);
        Ok(())
    }

    fn get(&self, o1: &Digest32) -> Result<Option<EnrollmentRecord>, DuplicateRecord> {
        Ok(self.records.get(o1).cloned())
    }
}

/// Server configuration knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerPolicy {
    /// Maximum tolerated `|now - t|`.
    pub window_ms: u64,
    /// Remember every accepted `M1` until it can no longer pass the
    /// freshness check and refuse to see it twice. Off reproduces the
    /// timestamp-only check.
    pub reject_replayed_m1: bool,
}

impl Default for ServerPolicy {
    fn default() -> Self {
        ServerPolicy { window_ms: DEFAULT_WINDOW_MS, reject_replayed_m1: true }
    }
}

/// Server state kept between the challenge and the confirmation.
#[derive(Debug, Clone)]
pub struct PendingSession {
    m2_prime: Element,
    r_s: SecretDegree,
    m3: Element,
    created_at: Timestamp,
}

impl PendingSession {
    pub fn secret_degree(&self) -> &SecretDegree {
        &self.r_s
    }

    pub fn m3(&self) -> &Element {
        &self.m3
    }

    pub fn created_at(&self) -> Timestamp {
        self.created_at
    }
}

/// Authentication server state machine: the pending-session table and the
/// replay cache. The enrollment store is passed into each call.
#[derive(Debug)]
pub struct AuthServer {
    p: Modulus,
    code: CodeParams,
    policy: ServerPolicy,
    pending: BTreeMap<Element, PendingSession>,
    // M1 -> time after which it can no longer pass the freshness check.
    seen: BTreeMap<Element, Timestamp>,
}

impl AuthServer {
    pub fn new(p: Modulus, code: CodeParams, policy: ServerPolicy) -> Self {
        AuthServer { p, code, policy, pending: BTreeMap::new(), seen: BTreeMap::new() }
    }

    pub fn modulus(&self) -> &Modulus {
        &self.p
    }

    pub fn code(&self) -> CodeParams {
        self.code
    }

    pub fn policy(&self) -> ServerPolicy {
        self.policy
    }

    pub fn pending(&self, m1: &Element) -> Option<&PendingSession> {
        self.pending.get(m1)
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Drops pending sessions and replay-cache entries older than the window.
    pub fn expire(&mut self, now: Timestamp) {
        let window = self.policy.window_ms;
        self.pending.retain(|_, s| now.saturating_sub(s.created_at) <= window);
        self.seen.retain(|_, until| *until >= now);
    }

    /// Handles an enrollment request: fresh `(s, X_S, SPUB)` and `ID`, the
    /// record is persisted before the response is built.
    pub fn enroll<S, R>(
        &self,
        req: &EnrollRequest,
        store: &mut S,
        rng: &mut R,
    ) -> Result<EnrollResponse, ServerError<S::Error>>
    where
        S: EnrollmentStore + ?Sized,
        R: RngCore + CryptoRng + ?Sized,
    {
        if req.bb_t.len() != self.code.n() {
            return Err(RejectReason::Malformed.into());
        }
        let keys = server_keygen(&self.p, rng);
        let mut id = [0u8; ID_BYTES];
        rng.fill_bytes(&mut id);
        let o1 = lookup_digest(&req.bb_t, &id);
        let o2 = xor32(&req.tag, &secret_digest(&keys.x_s));
        let record = EnrollmentRecord {
            id,
            bb_t: req.bb_t.clone(),
            x_s: keys.x_s,
            s: keys.s.clone(),
            o1,
        };
        store.put(record).map_err(ServerError::Store)?;
        Ok(EnrollResponse {
            o1,
            o2,
            s: element(&keys.s),
            spub: element(&keys.spub),
            p: self.p.to_bytes(),
        })
    }

    /// Verifies the client's request and issues the server's challenge.
    pub fn verify_request<S, R>(
        &mut self,
        req: &AuthRequest,
        now: Timestamp,
        store: &S,
        rng: &mut R,
    ) -> Result<AuthChallenge, ServerError<S::Error>>
    where
        S: EnrollmentStore + ?Sized,
        R: RngCore + CryptoRng + ?Sized,
    {
        self.expire(now);
        let window = self.policy.window_ms;
        if !is_fresh(now, req.t1, window) {
            return Err(RejectReason::StaleTimestamp.into());
        }
        let record = store
            .get(&req.o1)
            .map_err(ServerError::Store)?
            .ok_or(RejectReason::UnknownCredential)?;
        if req.bb.len() != record.bb_t.len() || lookup_digest(&req.bb, &record.id) != req.o1 {
            return Err(RejectReason::TemplateMismatch.into());
        }
        if self.policy.reject_replayed_m1 && self.seen.contains_key(&req.m1) {
            return Err(RejectReason::DuplicateM1.into());
        }

        let m1 = BigUint::from_bytes_be(&req.m1);
        let m2_prime = cheb_eval(record.x_s.value(), &m1, &self.p)
            .map_err(|_| RejectReason::Malformed)?;
        let m2_prime = element(&m2_prime);
        let temp = xor32(&req.o2, &secret_digest(&record.x_s));
        let alpha_prime = xor32(&temp, &transcript_digest(&req.m1, &m2_prime, req.t1));
        if alpha_prime != req.alpha {
            return Err(RejectReason::ProofMismatch.into());
        }

        if self.policy.reject_replayed_m1 {
            self.seen.insert(req.m1, now.max(req.t1).saturating_add(window));
        }
        let r_s = SecretDegree::random(rng);
        let m3 = element(&cheb_eval(r_s.value(), &record.s, &self.p).map_err(|_| RejectReason::Malformed)?);
        let t2 = now;
        let beta = transcript_digest(&m2_prime, &m3, t2);
        self.pending.insert(req.m1, PendingSession { m2_prime, r_s, m3, created_at: now });
        Ok(AuthChallenge { m3, beta, t2 })
    }

    /// Checks the client's confirmation for the session opened by `m1`.
    /// The pending session is consumed whatever the outcome.
    pub fn finish(
        &mut self,
        m1: &Element,
        confirm: &AuthConfirm,
        now: Timestamp,
    ) -> Result<SessionKey, RejectReason> {
        self.expire(now);
        let pending = self.pending.remove(m1).ok_or(RejectReason::UnknownSession)?;
        if !is_fresh(now, confirm.t3, self.policy.window_ms) {
            return Err(RejectReason::StaleTimestamp);
        }
        let m1_value = BigUint::from_bytes_be(m1);
        let m4_prime = cheb_eval(pending.r_s.value(), &m1_value, &self.p)
            .map_err(|_| RejectReason::Malformed)?;
        let m4_prime = element(&m4_prime);
        if transcript_digest(&pending.m2_prime, &m4_prime, confirm.t3) != confirm.gamma {
            return Err(RejectReason::ProofMismatch);
        }
        Ok(SessionKey::derive(&m4_prime))
    }
}

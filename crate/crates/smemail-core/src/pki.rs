//! Identities, key pairs, detached signatures, certificates, and
//! password-sealed keystores — the minimal PKI the mail protocol sits on.

use std::fmt;

use rand::RngCore;
use thiserror::Error;

use crate::curve::{CurveError, CurvePoint, DomainParams, Scalar};
use crate::suite::{self, Suite};
use crate::wire::tlv::{self, tag, DecodeError, DecodeErrorKind};

pub const KEYSTORE_SALT_LEN: usize = 16;
pub const POP_NONCE_LEN: usize = 16;
const FORMAT_VERSION: u8 = 1;

/// A mail identity: one `@`, printable ASCII, at most 254 octets. The string
/// participates in key derivation and signature hashes exactly as stored.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug, Hash)]
pub struct Identity(String);

impl Identity {
    pub fn parse(s: &str) -> Result<Identity, PkiError> {
        if s.is_empty() {
            return Err(PkiError::InvalidIdentity("empty"));
        }
        if s.len() > 254 {
            return Err(PkiError::InvalidIdentity("longer than 254 octets"));
        }
        if !s.bytes().all(|b| b.is_ascii_graphic()) {
            return Err(PkiError::InvalidIdentity(
                "must be printable ASCII without whitespace",
            ));
        }
        let mut parts = s.split('@');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(local), Some(domain), None) if !local.is_empty() && !domain.is_empty() => {
                Ok(Identity(s.to_owned()))
            }
            _ => Err(PkiError::InvalidIdentity("must be local@domain")),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }

    /// 2-octet big-endian length followed by the identity octets — the
    /// framing used whenever an identity enters a hash.
    pub fn length_prefixed(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + self.0.len());
        out.extend_from_slice(&(self.0.len() as u16).to_be_bytes());
        out.extend_from_slice(self.0.as_bytes());
        out
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Long-term key pair. `Debug` never prints the secret scalar.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub sk: Scalar,
    pub pk: CurvePoint,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("sk", &"<redacted>")
            .field("pk", &self.pk)
            .finish()
    }
}

/// Fresh key pair: sk uniform in [1, n-1], pk = sk·G.
pub fn generate_keypair(params: &DomainParams, rng: &mut dyn RngCore) -> KeyPair {
    let sk = params.random_scalar(rng);
    let pk = params.mul_g(sk.value());
    KeyPair { sk, pk }
}

#[derive(Error, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PublicKeyViolation {
    #[error("public key is the point at infinity")]
    Infinity,
    #[error("coordinate is not in canonical reduced form")]
    NonCanonical,
    #[error("point is not on the curve")]
    OffCurve,
    #[error("n·PK != O")]
    WrongOrder,
}

/// The four public-key checks, in order: not the identity, canonical
/// coordinates, on the curve, correct order.
pub fn validate_public_key(
    pk: &CurvePoint,
    params: &DomainParams,
) -> Result<(), PublicKeyViolation> {
    let (x, y) = pk.coords().ok_or(PublicKeyViolation::Infinity)?;
    if x.value() >= &params.q || y.value() >= &params.q {
        return Err(PublicKeyViolation::NonCanonical);
    }
    if !params.is_on_curve(pk) {
        return Err(PublicKeyViolation::OffCurve);
    }
    match params.scalar_mul(&params.n, pk) {
        Ok(CurvePoint::Infinity) => Ok(()),
        _ => Err(PublicKeyViolation::WrongOrder),
    }
}

/// A detached signature (R, s) over arbitrary octets, using the same
/// equation as the mail protocol itself: t = H(msg ‖ x_R ‖ y_R),
/// s = t·sk − r, verified by sG + R = t·PK. One primitive signs
/// certificates, OCSP tokens, and validation reports alike.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DetachedSignature {
    pub r_point: CurvePoint,
    pub s: Scalar,
}

fn detached_frame(message: &[u8], r_point: &CurvePoint, params: &DomainParams) -> Vec<u8> {
    let (x, y) = r_point.coords().expect("R is never the identity");
    let mut frame = message.to_vec();
    frame.extend_from_slice(&params.encode_field(x));
    frame.extend_from_slice(&params.encode_field(y));
    frame
}

pub fn sign_detached(
    message: &[u8],
    sk: &Scalar,
    params: &DomainParams,
    suite: &'static Suite,
    rng: &mut dyn RngCore,
) -> DetachedSignature {
    loop {
        let r = params.random_scalar(rng);
        let r_point = params.mul_g(r.value());
        let t = suite::hash_to_scalar(suite, &detached_frame(message, &r_point, params), params);
        if t.is_zero() {
            // a zero t would make s independent of the key; resample
            continue;
        }
        let s = params.sc_sub(&params.sc_mul(&t, sk), &r);
        return DetachedSignature { r_point, s };
    }
}

pub fn verify_detached(
    message: &[u8],
    sig: &DetachedSignature,
    pk: &CurvePoint,
    params: &DomainParams,
    suite: &'static Suite,
) -> bool {
    if sig.r_point.is_infinity() || !params.is_on_curve(&sig.r_point) {
        return false;
    }
    if sig.s.value() >= &params.n {
        return false;
    }
    let t = suite::hash_to_scalar(suite, &detached_frame(message, &sig.r_point, params), params);
    if t.is_zero() {
        return false;
    }
    let lhs = params
        .point_add(&params.mul_g(sig.s.value()), &sig.r_point)
        .expect("both terms are on the curve");
    let rhs = match params.scalar_mul(t.value(), pk) {
        Ok(p) => p,
        Err(_) => return false,
    };
    lhs == rhs
}

// ---- certificates -----------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Certificate {
    pub serial: u64,
    pub subject: Identity,
    pub subject_pk: CurvePoint,
    pub issuer: Identity,
    pub not_before: u64,
    pub not_after: u64,
    pub signature: DetachedSignature,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CertStatus {
    Good,
    Expired,
    BadSignature,
}

impl Certificate {
    /// The to-be-signed octets: TLV records in fixed order
    /// (serial, subject, subject_pk, issuer, not_before, not_after).
    pub fn tbs_bytes(&self, params: &DomainParams) -> Vec<u8> {
        cert_tbs(
            self.serial,
            &self.subject,
            &self.subject_pk,
            &self.issuer,
            self.not_before,
            self.not_after,
            params,
        )
    }
}

fn cert_tbs(
    serial: u64,
    subject: &Identity,
    subject_pk: &CurvePoint,
    issuer: &Identity,
    not_before: u64,
    not_after: u64,
    params: &DomainParams,
) -> Vec<u8> {
    let mut w = tlv::Writer::new();
    w.u64_record(tag::SERIAL, serial)
        .record(tag::IDENTITY, subject.as_bytes())
        .record(tag::POINT, &params.encode_point(subject_pk))
        .record(tag::IDENTITY, issuer.as_bytes())
        .u64_record(tag::TIMESTAMP, not_before)
        .u64_record(tag::TIMESTAMP, not_after);
    w.into_bytes()
}

/// Signature first, then the validity window: a certificate whose signature
/// fails is `BadSignature` no matter what the clock says.
pub fn validate_certificate(
    cert: &Certificate,
    ca_pk: &CurvePoint,
    now: u64,
    params: &DomainParams,
    suite: &'static Suite,
) -> CertStatus {
    if !verify_detached(&cert.tbs_bytes(params), &cert.signature, ca_pk, params, suite) {
        return CertStatus::BadSignature;
    }
    if now < cert.not_before || now > cert.not_after {
        return CertStatus::Expired;
    }
    CertStatus::Good
}

/// The issuing side of enrollment. Serial numbers increase monotonically per
/// authority.
pub struct CertificateAuthority {
    pub id: Identity,
    pub keys: KeyPair,
    next_serial: u64,
}

impl CertificateAuthority {
    pub fn new(id: Identity, keys: KeyPair) -> Self {
        CertificateAuthority { id, keys, next_serial: 1 }
    }

    /// Rebuilds a persisted authority, continuing its serial sequence.
    pub fn resume(id: Identity, keys: KeyPair, next_serial: u64) -> Self {
        CertificateAuthority { id, keys, next_serial: next_serial.max(1) }
    }

    pub fn next_serial(&self) -> u64 {
        self.next_serial
    }

    pub fn public_key(&self) -> &CurvePoint {
        &self.keys.pk
    }

    pub fn fresh_nonce(&self, rng: &mut dyn RngCore) -> Vec<u8> {
        let mut nonce = vec![0u8; POP_NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        nonce
    }

    /// Issues a certificate after checking the subject key and the
    /// proof-of-possession signature over the enrollment nonce.
    #[allow(clippy::too_many_arguments)]
    pub fn issue(
        &mut self,
        subject: &Identity,
        subject_pk: &CurvePoint,
        pop: &DetachedSignature,
        nonce: &[u8],
        not_before: u64,
        not_after: u64,
        params: &DomainParams,
        suite: &'static Suite,
        rng: &mut dyn RngCore,
    ) -> Result<Certificate, PkiError> {
        validate_public_key(subject_pk, params).map_err(PkiError::InvalidPublicKey)?;
        if !verify_detached(nonce, pop, subject_pk, params, suite) {
            return Err(PkiError::ProofOfPossession);
        }
        if not_before > not_after {
            return Err(PkiError::BadValidity);
        }
        let serial = self.next_serial;
        self.next_serial += 1;
        let tbs = cert_tbs(serial, subject, subject_pk, &self.id, not_before, not_after, params);
        let signature = sign_detached(&tbs, &self.keys.sk, params, suite, rng);
        Ok(Certificate {
            serial,
            subject: subject.clone(),
            subject_pk: subject_pk.clone(),
            issuer: self.id.clone(),
            not_before,
            not_after,
            signature,
        })
    }
}

/// The subject's half of enrollment: sign the authority's nonce.
pub fn proof_of_possession(
    nonce: &[u8],
    keys: &KeyPair,
    params: &DomainParams,
    suite: &'static Suite,
    rng: &mut dyn RngCore,
) -> DetachedSignature {
    sign_detached(nonce, &keys.sk, params, suite, rng)
}

// ---- keystores ----------------------------------------------------------------

/// A secret scalar sealed under a password. The cipher runs in IV-carrying
/// mode — the password key is long-lived, so the zero-IV shortcut the
/// protocol uses for one-shot session keys is off limits here.
#[derive(Clone, PartialEq, Eq)]
pub struct EncryptedKeystore {
    pub identity: Identity,
    pub salt: Vec<u8>,
    pub wrapped_sk: Vec<u8>,
    pub sk_digest: Vec<u8>,
}

impl fmt::Debug for EncryptedKeystore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EncryptedKeystore")
            .field("identity", &self.identity)
            .field("salt", &"<opaque>")
            .field("wrapped_sk", &"<opaque>")
            .finish()
    }
}

fn keystore_iv(suite: &Suite, salt: &[u8]) -> Vec<u8> {
    suite.digest(salt)[..suite.iv_len()].to_vec()
}

pub fn keystore_seal(
    identity: &Identity,
    sk: &Scalar,
    password: &[u8],
    params: &DomainParams,
    suite: &'static Suite,
    rng: &mut dyn RngCore,
) -> EncryptedKeystore {
    let mut salt = vec![0u8; KEYSTORE_SALT_LEN];
    rng.fill_bytes(&mut salt);
    let key = suite::password_kdf(suite, &salt, password, suite.key_len());
    let iv = keystore_iv(suite, &salt);
    let plain = params.encode_scalar(sk);
    let wrapped_sk = suite::sym_encrypt_iv(suite, &key, &iv, &plain)
        .expect("key and IV lengths come from the suite");
    let sk_digest = suite.digest(&plain);
    EncryptedKeystore { identity: identity.clone(), salt, wrapped_sk, sk_digest }
}

pub fn keystore_open(
    ks: &EncryptedKeystore,
    password: &[u8],
    params: &DomainParams,
    suite: &'static Suite,
) -> Result<Scalar, PkiError> {
    let key = suite::password_kdf(suite, &ks.salt, password, suite.key_len());
    let iv = keystore_iv(suite, &ks.salt);
    let plain = suite::sym_decrypt_iv(suite, &key, &iv, &ks.wrapped_sk)
        .map_err(|_| PkiError::CorruptKeystore("bad wrapped length"))?;
    if suite.digest(&plain) != ks.sk_digest {
        return Err(PkiError::WrongPassword);
    }
    params
        .decode_scalar(&plain)
        .map_err(|_| PkiError::CorruptKeystore("sealed scalar out of range"))
}

// ---- file formats ---------------------------------------------------------

/// Keystore file body: version, curve_id, suite_id, identity, salt,
/// wrapped scalar, scalar digest. Stored as base64 text.
pub fn keystore_to_bytes(ks: &EncryptedKeystore, params: &DomainParams, suite: &Suite) -> Vec<u8> {
    let mut w = tlv::Writer::new();
    w.u8_record(tag::VERSION, FORMAT_VERSION)
        .u8_record(tag::CURVE_ID, params.id)
        .u8_record(tag::SUITE_ID, suite.id)
        .record(tag::IDENTITY, ks.identity.as_bytes())
        .record(tag::NONCE, &ks.salt)
        .record(tag::CIPHERTEXT, &ks.wrapped_sk)
        .record(tag::DIGEST, &ks.sk_digest);
    w.into_bytes()
}

/// Decodes a keystore file body against known parameters, returning the
/// suite id the file declares.
pub fn keystore_from_bytes(
    bytes: &[u8],
    params: &DomainParams,
) -> Result<(EncryptedKeystore, u8), PkiError> {
    let mut r = tlv::Reader::new(bytes);
    let version = r.expect_u8(tag::VERSION)?;
    if version != FORMAT_VERSION {
        return Err(PkiError::BadVersion(version));
    }
    let curve_id = r.expect_u8(tag::CURVE_ID)?;
    if curve_id != params.id {
        return Err(PkiError::CurveMismatch { expected: params.id, found: curve_id });
    }
    let suite_id = r.expect_u8(tag::SUITE_ID)?;
    let (id_raw, id_off) = r.expect(tag::IDENTITY)?;
    let identity = parse_identity_value(id_raw, id_off)?;
    let (salt, _) = r.expect(tag::NONCE)?;
    let (wrapped, _) = r.expect(tag::CIPHERTEXT)?;
    let (digest, _) = r.expect(tag::DIGEST)?;
    r.finish()?;
    Ok((
        EncryptedKeystore {
            identity,
            salt: salt.to_vec(),
            wrapped_sk: wrapped.to_vec(),
            sk_digest: digest.to_vec(),
        },
        suite_id,
    ))
}

/// Certificate file body: version, curve_id, suite_id, the TBS records, then
/// the signature (R, s).
pub fn cert_to_bytes(cert: &Certificate, params: &DomainParams, suite: &Suite) -> Vec<u8> {
    let mut w = tlv::Writer::new();
    w.u8_record(tag::VERSION, FORMAT_VERSION)
        .u8_record(tag::CURVE_ID, params.id)
        .u8_record(tag::SUITE_ID, suite.id);
    let mut bytes = w.into_bytes();
    bytes.extend_from_slice(&cert.tbs_bytes(params));
    let mut sig = tlv::Writer::new();
    sig.record(tag::POINT, &params.encode_point(&cert.signature.r_point))
        .record(tag::SCALAR, &params.encode_scalar(&cert.signature.s));
    bytes.extend_from_slice(sig.as_bytes());
    bytes
}

pub fn cert_from_bytes(
    bytes: &[u8],
    params: &DomainParams,
) -> Result<(Certificate, u8), PkiError> {
    let mut r = tlv::Reader::new(bytes);
    let version = r.expect_u8(tag::VERSION)?;
    if version != FORMAT_VERSION {
        return Err(PkiError::BadVersion(version));
    }
    let curve_id = r.expect_u8(tag::CURVE_ID)?;
    if curve_id != params.id {
        return Err(PkiError::CurveMismatch { expected: params.id, found: curve_id });
    }
    let suite_id = r.expect_u8(tag::SUITE_ID)?;
    let serial = r.expect_u64(tag::SERIAL)?;
    let (subj_raw, subj_off) = r.expect(tag::IDENTITY)?;
    let subject = parse_identity_value(subj_raw, subj_off)?;
    let subject_pk = expect_point(&mut r, params)?;
    let (iss_raw, iss_off) = r.expect(tag::IDENTITY)?;
    let issuer = parse_identity_value(iss_raw, iss_off)?;
    let not_before = r.expect_u64(tag::TIMESTAMP)?;
    let not_after = r.expect_u64(tag::TIMESTAMP)?;
    let signature = expect_signature(&mut r, params)?;
    r.finish()?;
    Ok((
        Certificate { serial, subject, subject_pk, issuer, not_before, not_after, signature },
        suite_id,
    ))
}

/// Shared decode helpers: identities, points, scalars, and trailing
/// signatures appear in nearly every wire object.
pub(crate) fn parse_identity_value(raw: &[u8], offset: usize) -> Result<Identity, PkiError> {
    let text = std::str::from_utf8(raw).map_err(|_| {
        PkiError::Decode(DecodeError::new(offset, DecodeErrorKind::BadValue("identity is not ASCII")))
    })?;
    Identity::parse(text)
}

pub(crate) fn expect_point(
    r: &mut tlv::Reader<'_>,
    params: &DomainParams,
) -> Result<CurvePoint, DecodeError> {
    let (raw, off) = r.expect(tag::POINT)?;
    params
        .decode_point(raw)
        .map_err(|e| DecodeError::new(off, DecodeErrorKind::BadValue(curve_error_label(&e))))
}

pub(crate) fn expect_scalar(
    r: &mut tlv::Reader<'_>,
    params: &DomainParams,
) -> Result<Scalar, DecodeError> {
    let (raw, off) = r.expect(tag::SCALAR)?;
    params
        .decode_scalar(raw)
        .map_err(|e| DecodeError::new(off, DecodeErrorKind::BadValue(curve_error_label(&e))))
}

pub(crate) fn expect_signature(
    r: &mut tlv::Reader<'_>,
    params: &DomainParams,
) -> Result<DetachedSignature, DecodeError> {
    let r_point = expect_point(r, params)?;
    let s = expect_scalar(r, params)?;
    Ok(DetachedSignature { r_point, s })
}

pub(crate) fn curve_error_label(e: &CurveError) -> &'static str {
    match e {
        CurveError::OffCurve => "off-curve point",
        CurveError::CoordinateOutOfRange => "coordinate out of range",
        CurveError::ScalarOutOfRange => "scalar out of range",
        CurveError::BadMarker(_) => "bad point marker",
        CurveError::WrongLength { .. } => "wrong encoded length",
        _ => "malformed curve value",
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum PkiError {
    #[error("invalid identity: {0}")]
    InvalidIdentity(&'static str),
    #[error("invalid public key: {0}")]
    InvalidPublicKey(PublicKeyViolation),
    #[error("proof-of-possession signature does not verify")]
    ProofOfPossession,
    #[error("certificate validity window is inverted")]
    BadValidity,
    #[error("wrong password")]
    WrongPassword,
    #[error("corrupt keystore: {0}")]
    CorruptKeystore(&'static str),
    #[error("file declares curve {found:#04x}, expected {expected:#04x}")]
    CurveMismatch { expected: u8, found: u8 },
    #[error("unsupported format version {0}")]
    BadVersion(u8),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

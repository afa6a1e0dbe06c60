//! Request/response formats for the directory, OCSP, and delegated-validation
//! services, plus the disclosed-envelope bundle used for third-party
//! verification.
//!
//! Signed messages (OCSP tokens, validation reports) carry a trailing (R, s)
//! covering every preceding octet. Encoding is canonical, so verifiers
//! re-encode the prefix instead of trusting a caller-supplied buffer.

use thiserror::Error;

use crate::curve::{CurvePoint, DomainParams};
use crate::pki::{self, DetachedSignature, Identity};
use crate::suite::Suite;
use crate::wire::envelope::EncodeError;
use crate::wire::tlv::{self, tag, DecodeError, DecodeErrorKind};

pub const MESSAGE_VERSION: u8 = 1;

#[derive(Error, Debug, Clone, Copy, PartialEq, Eq)]
#[error("unknown status code {0:#04x}")]
pub struct BadStatus(pub u8);

// ---- OCSP -------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OcspStatus {
    Good,
    Revoked,
    Unknown,
}

impl OcspStatus {
    pub fn code(self) -> u8 {
        match self {
            OcspStatus::Good => 0,
            OcspStatus::Revoked => 1,
            OcspStatus::Unknown => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self, BadStatus> {
        match c {
            0 => Ok(OcspStatus::Good),
            1 => Ok(OcspStatus::Revoked),
            2 => Ok(OcspStatus::Unknown),
            other => Err(BadStatus(other)),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            OcspStatus::Good => "good",
            OcspStatus::Revoked => "revoked",
            OcspStatus::Unknown => "unknown",
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OcspRequest {
    pub target: Identity,
    pub nonce: Vec<u8>,
}

/// A signed status assertion. `pk`/`pk_valid` travel only with `Good`;
/// `pk_valid` reports whether the responder's own certificate and key checks
/// passed — a good-but-stale registration yields `Good` with `pk_valid =
/// false`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OcspToken {
    pub target: Identity,
    pub status: OcspStatus,
    pub pk: Option<CurvePoint>,
    pub pk_valid: Option<bool>,
    pub produced_at: u64,
    pub nonce: Vec<u8>,
    pub signature: DetachedSignature,
}

pub fn encode_ocsp_request(req: &OcspRequest) -> Vec<u8> {
    let mut w = tlv::Writer::new();
    w.u8_record(tag::VERSION, MESSAGE_VERSION)
        .record(tag::IDENTITY, req.target.as_bytes())
        .record(tag::NONCE, &req.nonce);
    w.into_bytes()
}

pub fn decode_ocsp_request(bytes: &[u8]) -> Result<OcspRequest, DecodeError> {
    let mut r = tlv::Reader::new(bytes);
    expect_version(&mut r)?;
    let target = expect_identity(&mut r)?;
    let (nonce, _) = r.expect(tag::NONCE)?;
    r.finish()?;
    Ok(OcspRequest { target, nonce: nonce.to_vec() })
}

/// The octets the responder signs: the full token minus the signature.
pub fn ocsp_token_signing_bytes(token: &OcspToken, params: &DomainParams) -> Vec<u8> {
    let mut w = tlv::Writer::new();
    w.u8_record(tag::VERSION, MESSAGE_VERSION)
        .record(tag::IDENTITY, token.target.as_bytes())
        .u8_record(tag::STATUS, token.status.code());
    if let Some(pk) = &token.pk {
        w.record(tag::POINT, &params.encode_point(pk));
    }
    if let Some(v) = token.pk_valid {
        w.u8_record(tag::STATUS, v as u8);
    }
    w.u64_record(tag::TIMESTAMP, token.produced_at)
        .record(tag::NONCE, &token.nonce);
    w.into_bytes()
}

pub fn encode_ocsp_token(token: &OcspToken, params: &DomainParams) -> Vec<u8> {
    let mut bytes = ocsp_token_signing_bytes(token, params);
    append_signature(&mut bytes, &token.signature, params);
    bytes
}

pub fn decode_ocsp_token(bytes: &[u8], params: &DomainParams) -> Result<OcspToken, DecodeError> {
    let mut r = tlv::Reader::new(bytes);
    expect_version(&mut r)?;
    let target = expect_identity(&mut r)?;
    let status_pos = r.pos() + 3;
    let status = OcspStatus::from_code(r.expect_u8(tag::STATUS)?)
        .map_err(|_| DecodeError::new(status_pos, DecodeErrorKind::BadValue("unknown status code")))?;
    // optional records are recognized by tag, not by status, so that a
    // flipped status octet still decodes and then fails signature checking
    let pk = match r.peek_tag() {
        Some(tag::POINT) => Some(pki::expect_point(&mut r, params)?),
        _ => None,
    };
    let pk_valid = match r.peek_tag() {
        Some(tag::STATUS) => Some(r.expect_u8(tag::STATUS)? != 0),
        _ => None,
    };
    let produced_at = r.expect_u64(tag::TIMESTAMP)?;
    let (nonce, _) = r.expect(tag::NONCE)?;
    let nonce = nonce.to_vec();
    let signature = pki::expect_signature(&mut r, params)?;
    r.finish()?;
    Ok(OcspToken { target, status, pk, pk_valid, produced_at, nonce, signature })
}

pub fn verify_ocsp_token(
    token: &OcspToken,
    responder_pk: &CurvePoint,
    params: &DomainParams,
    suite: &'static Suite,
) -> bool {
    pki::verify_detached(
        &ocsp_token_signing_bytes(token, params),
        &token.signature,
        responder_pk,
        params,
        suite,
    )
}

// ---- delegated validation -----------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DvVerdict {
    Ok,
    SenderRevoked,
    RecipientRevoked,
    SenderUnknown,
    RecipientUnknown,
    BadPublicKey,
    CertExpired,
    CertBadSignature,
    OcspSignatureBad,
    MalformedEnvelope,
}

impl DvVerdict {
    pub fn code(self) -> u8 {
        match self {
            DvVerdict::Ok => 0,
            DvVerdict::SenderRevoked => 1,
            DvVerdict::RecipientRevoked => 2,
            DvVerdict::SenderUnknown => 3,
            DvVerdict::RecipientUnknown => 4,
            DvVerdict::BadPublicKey => 5,
            DvVerdict::CertExpired => 6,
            DvVerdict::CertBadSignature => 7,
            DvVerdict::OcspSignatureBad => 8,
            DvVerdict::MalformedEnvelope => 9,
        }
    }

    pub fn from_code(c: u8) -> Result<Self, BadStatus> {
        Ok(match c {
            0 => DvVerdict::Ok,
            1 => DvVerdict::SenderRevoked,
            2 => DvVerdict::RecipientRevoked,
            3 => DvVerdict::SenderUnknown,
            4 => DvVerdict::RecipientUnknown,
            5 => DvVerdict::BadPublicKey,
            6 => DvVerdict::CertExpired,
            7 => DvVerdict::CertBadSignature,
            8 => DvVerdict::OcspSignatureBad,
            9 => DvVerdict::MalformedEnvelope,
            other => return Err(BadStatus(other)),
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            DvVerdict::Ok => "ok",
            DvVerdict::SenderRevoked => "sender-revoked",
            DvVerdict::RecipientRevoked => "recipient-revoked",
            DvVerdict::SenderUnknown => "sender-unknown",
            DvVerdict::RecipientUnknown => "recipient-unknown",
            DvVerdict::BadPublicKey => "bad-pk",
            DvVerdict::CertExpired => "cert-expired",
            DvVerdict::CertBadSignature => "cert-bad-signature",
            DvVerdict::OcspSignatureBad => "ocsp-signature-bad",
            DvVerdict::MalformedEnvelope => "malformed-envelope",
        }
    }
}

/// Submission to the validation server: the claimed ids plus the envelope
/// exactly as the sender rendered it.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DvRequest {
    pub sender: Identity,
    pub recipient: Identity,
    pub entity_text: Vec<u8>,
}

/// The validation report. Signed only on success; error reports go back
/// unsigned and are logged server-side.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DvResponse {
    pub sender: Identity,
    pub recipient: Identity,
    pub verdict: DvVerdict,
    pub params_digest: Vec<u8>,
    pub produced_at: u64,
    pub signature: Option<DetachedSignature>,
}

pub fn encode_dv_request(req: &DvRequest) -> Result<Vec<u8>, EncodeError> {
    if req.entity_text.len() > tlv::MAX_VALUE_LEN {
        return Err(EncodeError::Oversize(req.entity_text.len()));
    }
    let mut w = tlv::Writer::new();
    w.u8_record(tag::VERSION, MESSAGE_VERSION)
        .record(tag::IDENTITY, req.sender.as_bytes())
        .record(tag::IDENTITY, req.recipient.as_bytes())
        .record(tag::CIPHERTEXT, &req.entity_text);
    Ok(w.into_bytes())
}

pub fn decode_dv_request(bytes: &[u8]) -> Result<DvRequest, DecodeError> {
    let mut r = tlv::Reader::new(bytes);
    expect_version(&mut r)?;
    let sender = expect_identity(&mut r)?;
    let recipient = expect_identity(&mut r)?;
    let (entity_text, _) = r.expect(tag::CIPHERTEXT)?;
    r.finish()?;
    Ok(DvRequest { sender, recipient, entity_text: entity_text.to_vec() })
}

pub fn dv_response_signing_bytes(resp: &DvResponse) -> Vec<u8> {
    let mut w = tlv::Writer::new();
    w.u8_record(tag::VERSION, MESSAGE_VERSION)
        .record(tag::IDENTITY, resp.sender.as_bytes())
        .record(tag::IDENTITY, resp.recipient.as_bytes())
        .u8_record(tag::STATUS, resp.verdict.code())
        .record(tag::DIGEST, &resp.params_digest)
        .u64_record(tag::TIMESTAMP, resp.produced_at);
    w.into_bytes()
}

pub fn encode_dv_response(resp: &DvResponse, params: &DomainParams) -> Vec<u8> {
    let mut bytes = dv_response_signing_bytes(resp);
    if let Some(sig) = &resp.signature {
        append_signature(&mut bytes, sig, params);
    }
    bytes
}

pub fn decode_dv_response(bytes: &[u8], params: &DomainParams) -> Result<DvResponse, DecodeError> {
    let mut r = tlv::Reader::new(bytes);
    expect_version(&mut r)?;
    let sender = expect_identity(&mut r)?;
    let recipient = expect_identity(&mut r)?;
    let verdict_pos = r.pos() + 3;
    let verdict = DvVerdict::from_code(r.expect_u8(tag::STATUS)?)
        .map_err(|_| DecodeError::new(verdict_pos, DecodeErrorKind::BadValue("unknown verdict code")))?;
    let (params_digest, _) = r.expect(tag::DIGEST)?;
    let params_digest = params_digest.to_vec();
    let produced_at = r.expect_u64(tag::TIMESTAMP)?;
    let signature = match r.peek_tag() {
        Some(tag::POINT) => Some(pki::expect_signature(&mut r, params)?),
        _ => None,
    };
    r.finish()?;
    Ok(DvResponse { sender, recipient, verdict, params_digest, produced_at, signature })
}

pub fn verify_dv_response(
    resp: &DvResponse,
    dv_pk: &CurvePoint,
    params: &DomainParams,
    suite: &'static Suite,
) -> bool {
    match &resp.signature {
        None => false,
        Some(sig) => {
            pki::verify_detached(&dv_response_signing_bytes(resp), sig, dv_pk, params, suite)
        }
    }
}

// ---- directory ------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DirectoryRequest {
    pub target: Identity,
}

/// Unsigned lookup result: the registered key and revocation flag, or
/// nothing. Trust in delegated mode comes from the DV report, not from this.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DirectoryResponse {
    pub target: Identity,
    pub result: Option<(CurvePoint, bool)>,
}

pub fn encode_directory_request(req: &DirectoryRequest) -> Vec<u8> {
    let mut w = tlv::Writer::new();
    w.u8_record(tag::VERSION, MESSAGE_VERSION)
        .record(tag::IDENTITY, req.target.as_bytes());
    w.into_bytes()
}

pub fn decode_directory_request(bytes: &[u8]) -> Result<DirectoryRequest, DecodeError> {
    let mut r = tlv::Reader::new(bytes);
    expect_version(&mut r)?;
    let target = expect_identity(&mut r)?;
    r.finish()?;
    Ok(DirectoryRequest { target })
}

pub fn encode_directory_response(resp: &DirectoryResponse, params: &DomainParams) -> Vec<u8> {
    let mut w = tlv::Writer::new();
    w.u8_record(tag::VERSION, MESSAGE_VERSION)
        .record(tag::IDENTITY, resp.target.as_bytes());
    match &resp.result {
        None => {
            w.u8_record(tag::STATUS, 0);
        }
        Some((pk, revoked)) => {
            w.u8_record(tag::STATUS, 1)
                .record(tag::POINT, &params.encode_point(pk))
                .u8_record(tag::STATUS, *revoked as u8);
        }
    }
    w.into_bytes()
}

pub fn decode_directory_response(
    bytes: &[u8],
    params: &DomainParams,
) -> Result<DirectoryResponse, DecodeError> {
    let mut r = tlv::Reader::new(bytes);
    expect_version(&mut r)?;
    let target = expect_identity(&mut r)?;
    let found = r.expect_u8(tag::STATUS)?;
    let result = if found != 0 {
        let pk = pki::expect_point(&mut r, params)?;
        let revoked = r.expect_u8(tag::STATUS)? != 0;
        Some((pk, revoked))
    } else {
        None
    };
    r.finish()?;
    Ok(DirectoryResponse { target, result })
}

// ---- disclosed bundle -------------------------------------------------------

/// What a receiver publishes to let third parties verify an envelope: the
/// plaintext and the session key. Pairs with the envelope file itself.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Disclosed {
    pub message: Vec<u8>,
    pub key: Vec<u8>,
}

pub fn encode_disclosed(d: &Disclosed) -> Result<Vec<u8>, EncodeError> {
    if d.message.len() > tlv::MAX_VALUE_LEN {
        return Err(EncodeError::Oversize(d.message.len()));
    }
    let mut w = tlv::Writer::new();
    w.u8_record(tag::VERSION, MESSAGE_VERSION)
        .record(tag::CIPHERTEXT, &d.message)
        .record(tag::NONCE, &d.key);
    Ok(w.into_bytes())
}

pub fn decode_disclosed(bytes: &[u8]) -> Result<Disclosed, DecodeError> {
    let mut r = tlv::Reader::new(bytes);
    expect_version(&mut r)?;
    let (message, _) = r.expect(tag::CIPHERTEXT)?;
    let (key, _) = r.expect(tag::NONCE)?;
    r.finish()?;
    Ok(Disclosed { message: message.to_vec(), key: key.to_vec() })
}

// ---- shared helpers -----------------------------------------------------------

fn expect_version(r: &mut tlv::Reader<'_>) -> Result<(), DecodeError> {
    let pos = r.pos() + 3;
    let v = r.expect_u8(tag::VERSION)?;
    if v != MESSAGE_VERSION {
        return Err(DecodeError::new(pos, DecodeErrorKind::BadValue("unsupported message version")));
    }
    Ok(())
}

fn expect_identity(r: &mut tlv::Reader<'_>) -> Result<Identity, DecodeError> {
    let (raw, off) = r.expect(tag::IDENTITY)?;
    match std::str::from_utf8(raw).ok().and_then(|s| Identity::parse(s).ok()) {
        Some(id) => Ok(id),
        None => Err(DecodeError::new(off, DecodeErrorKind::BadValue("invalid identity"))),
    }
}

fn append_signature(bytes: &mut Vec<u8>, sig: &DetachedSignature, params: &DomainParams) {
    let mut w = tlv::Writer::new();
    w.record(tag::POINT, &params.encode_point(&sig.r_point))
        .record(tag::SCALAR, &params.encode_scalar(&sig.s));
    bytes.extend_from_slice(w.as_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::t17;
    use crate::pki::{generate_keypair, sign_detached};
    use crate::suite::default_suite;
    use crate::testkit::ident;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn signed_token(status: OcspStatus, with_pk: bool) -> (OcspToken, CurvePoint) {
        let t = t17();
        let s = default_suite();
        let mut rng = ChaCha20Rng::seed_from_u64(50);
        let responder = generate_keypair(&t, &mut rng);
        let mut token = OcspToken {
            target: ident("bob@example.org"),
            status,
            pk: with_pk.then(|| t.mul_g(&7u32.into())),
            pk_valid: with_pk.then_some(true),
            produced_at: 1_700_000_000,
            nonce: vec![0xAB; 16],
            signature: DetachedSignature {
                r_point: t.g.clone(),
                s: t.scalar_from(0u32),
            },
        };
        token.signature = sign_detached(
            &ocsp_token_signing_bytes(&token, &t),
            &responder.sk,
            &t,
            s,
            &mut rng,
        );
        (token, responder.pk)
    }

    #[test]
    fn ocsp_request_round_trip() {
        let req = OcspRequest { target: ident("bob@example.org"), nonce: vec![7; 16] };
        let bytes = encode_ocsp_request(&req);
        assert_eq!(decode_ocsp_request(&bytes).unwrap(), req);
        assert_eq!(encode_ocsp_request(&decode_ocsp_request(&bytes).unwrap()), bytes);
    }

    #[test]
    fn ocsp_token_round_trip_and_verify() {
        let t = t17();
        let s = default_suite();
        for (status, with_pk) in [(OcspStatus::Good, true), (OcspStatus::Revoked, false), (OcspStatus::Unknown, false)] {
            let (token, responder_pk) = signed_token(status, with_pk);
            let bytes = encode_ocsp_token(&token, &t);
            let decoded = decode_ocsp_token(&bytes, &t).unwrap();
            assert_eq!(decoded, token);
            assert_eq!(encode_ocsp_token(&decoded, &t), bytes);
            assert!(verify_ocsp_token(&decoded, &responder_pk, &t, s));
        }
    }

    #[test]
    fn flipped_status_octet_still_decodes_but_fails_verification() {
        let t = t17();
        let s = default_suite();
        let (token, responder_pk) = signed_token(OcspStatus::Good, true);
        let mut bytes = encode_ocsp_token(&token, &t);
        // the status value octet follows version(4) + identity(3+15) records
        let status_off = 4 + 3 + token.target.as_str().len() + 3;
        assert_eq!(bytes[status_off], OcspStatus::Good.code());
        bytes[status_off] ^= 1;
        let mutated = decode_ocsp_token(&bytes, &t).unwrap();
        assert_eq!(mutated.status, OcspStatus::Revoked);
        assert!(!verify_ocsp_token(&mutated, &responder_pk, &t, s));
    }

    #[test]
    fn tampered_nonce_or_signature_fails_verification() {
        let t = t17();
        let s = default_suite();
        let (token, responder_pk) = signed_token(OcspStatus::Good, true);
        let mut bad_nonce = token.clone();
        bad_nonce.nonce[0] ^= 0xFF;
        assert!(!verify_ocsp_token(&bad_nonce, &responder_pk, &t, s));
        let mut bad_sig = token.clone();
        bad_sig.signature.s = t.sc_add(&token.signature.s, &t.scalar_from(1u32));
        assert!(!verify_ocsp_token(&bad_sig, &responder_pk, &t, s));
        // wrong responder key
        assert!(!verify_ocsp_token(&token, &t.mul_g(&9u32.into()), &t, s));
    }

    #[test]
    fn dv_request_round_trip() {
        let req = DvRequest {
            sender: ident("alice@example.org"),
            recipient: ident("bob@example.org"),
            entity_text: b"MIME-Version: 1.0\r\n...".to_vec(),
        };
        let bytes = encode_dv_request(&req).unwrap();
        assert_eq!(decode_dv_request(&bytes).unwrap(), req);
    }

    #[test]
    fn dv_response_round_trip_signed_and_unsigned() {
        let t = t17();
        let s = default_suite();
        let mut rng = ChaCha20Rng::seed_from_u64(51);
        let dv = generate_keypair(&t, &mut rng);
        let mut ok = DvResponse {
            sender: ident("alice@example.org"),
            recipient: ident("bob@example.org"),
            verdict: DvVerdict::Ok,
            params_digest: vec![0xD1; 32],
            produced_at: 1_700_000_123,
            signature: None,
        };
        ok.signature = Some(sign_detached(&dv_response_signing_bytes(&ok), &dv.sk, &t, s, &mut rng));
        let bytes = encode_dv_response(&ok, &t);
        let decoded = decode_dv_response(&bytes, &t).unwrap();
        assert_eq!(decoded, ok);
        assert!(verify_dv_response(&decoded, &dv.pk, &t, s));

        let err = DvResponse {
            verdict: DvVerdict::SenderRevoked,
            signature: None,
            ..ok.clone()
        };
        let bytes = encode_dv_response(&err, &t);
        let decoded = decode_dv_response(&bytes, &t).unwrap();
        assert_eq!(decoded.signature, None);
        assert!(!verify_dv_response(&decoded, &dv.pk, &t, s));
    }

    #[test]
    fn dv_response_digest_is_covered_by_signature() {
        let t = t17();
        let s = default_suite();
        let mut rng = ChaCha20Rng::seed_from_u64(52);
        let dv = generate_keypair(&t, &mut rng);
        let mut ok = DvResponse {
            sender: ident("alice@example.org"),
            recipient: ident("bob@example.org"),
            verdict: DvVerdict::Ok,
            params_digest: vec![0xD1; 32],
            produced_at: 7,
            signature: None,
        };
        ok.signature = Some(sign_detached(&dv_response_signing_bytes(&ok), &dv.sk, &t, s, &mut rng));
        let mut tampered = ok.clone();
        tampered.params_digest[5] ^= 1;
        assert!(!verify_dv_response(&tampered, &dv.pk, &t, s));
    }

    #[test]
    fn directory_messages_round_trip() {
        let t = t17();
        let req = DirectoryRequest { target: ident("ghost@example.org") };
        let bytes = encode_directory_request(&req);
        assert_eq!(decode_directory_request(&bytes).unwrap(), req);

        let miss = DirectoryResponse { target: req.target.clone(), result: None };
        let bytes = encode_directory_response(&miss, &t);
        assert_eq!(decode_directory_response(&bytes, &t).unwrap(), miss);

        let hit = DirectoryResponse {
            target: ident("bob@example.org"),
            result: Some((t.mul_g(&7u32.into()), false)),
        };
        let bytes = encode_directory_response(&hit, &t);
        assert_eq!(decode_directory_response(&bytes, &t).unwrap(), hit);
        assert_eq!(encode_directory_response(&decode_directory_response(&bytes, &t).unwrap(), &t), bytes);
    }

    #[test]
    fn disclosed_bundle_round_trip() {
        let d = Disclosed { message: b"attack at dawn".to_vec(), key: vec![0x11; 16] };
        let bytes = encode_disclosed(&d).unwrap();
        assert_eq!(decode_disclosed(&bytes).unwrap(), d);
    }

    #[test]
    fn verdict_codes_round_trip() {
        for c in 0..=9u8 {
            let v = DvVerdict::from_code(c).unwrap();
            assert_eq!(v.code(), c);
            assert!(!v.label().is_empty());
        }
        assert!(DvVerdict::from_code(10).is_err());
        assert!(OcspStatus::from_code(3).is_err());
    }

    #[test]
    fn message_version_checked() {
        let req = OcspRequest { target: ident("bob@example.org"), nonce: vec![1; 16] };
        let mut bytes = encode_ocsp_request(&req);
        bytes[3] = 2;
        let err = decode_ocsp_request(&bytes).unwrap_err();
        assert_eq!(err.kind, DecodeErrorKind::BadValue("unsupported message version"));
        assert_eq!(err.offset, 3);
    }
}

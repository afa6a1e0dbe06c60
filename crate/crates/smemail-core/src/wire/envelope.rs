//! The signcrypted envelope on the wire: ids in the MIME headers, the TLV
//! body carrying (version, curve, suite, R, C, s) in that fixed order.

use thiserror::Error;

use crate::curve::DomainParams;
use crate::pki;
use crate::signcrypt::SigncryptedEnvelope;
use crate::suite;
use crate::wire::mime::MimeEntity;
use crate::wire::tlv::{self, tag, DecodeError, DecodeErrorKind};

pub const ENVELOPE_VERSION: u8 = 1;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("payload of {0} octets does not fit a single envelope")]
    Oversize(usize),
    #[error("R must not be the point at infinity")]
    InfinityPoint,
}

/// Body TLV only — what the delegated-validation digest and the MIME body
/// are built from.
pub fn envelope_body(env: &SigncryptedEnvelope, params: &DomainParams) -> Result<Vec<u8>, EncodeError> {
    if env.r_point.is_infinity() {
        return Err(EncodeError::InfinityPoint);
    }
    if env.ciphertext.len() > tlv::MAX_VALUE_LEN {
        return Err(EncodeError::Oversize(env.ciphertext.len()));
    }
    let mut w = tlv::Writer::new();
    w.u8_record(tag::VERSION, ENVELOPE_VERSION)
        .u8_record(tag::CURVE_ID, env.curve_id)
        .u8_record(tag::SUITE_ID, env.suite_id)
        .record(tag::POINT, &params.encode_point(&env.r_point))
        .record(tag::CIPHERTEXT, &env.ciphertext)
        .record(tag::SCALAR, &params.encode_scalar(&env.s));
    Ok(w.into_bytes())
}

pub fn encode_envelope(
    env: &SigncryptedEnvelope,
    params: &DomainParams,
) -> Result<MimeEntity, EncodeError> {
    let body = envelope_body(env, params)?;
    Ok(MimeEntity::new(env.sender.clone(), env.recipient.clone(), body))
}

pub fn decode_envelope(
    entity: &MimeEntity,
    params: &DomainParams,
) -> Result<SigncryptedEnvelope, DecodeError> {
    let mut r = tlv::Reader::new(entity.body());
    let version_pos = r.pos() + 3;
    let version = r.expect_u8(tag::VERSION)?;
    if version != ENVELOPE_VERSION {
        return Err(DecodeError::new(version_pos, DecodeErrorKind::BadValue("unsupported envelope version")));
    }
    let curve_pos = r.pos() + 3;
    let curve_id = r.expect_u8(tag::CURVE_ID)?;
    if curve_id != params.id {
        return Err(DecodeError::new(curve_pos, DecodeErrorKind::BadValue("curve id mismatch")));
    }
    let suite_pos = r.pos() + 3;
    let suite_id = r.expect_u8(tag::SUITE_ID)?;
    if suite::suite_by_id(suite_id).is_none() {
        return Err(DecodeError::new(suite_pos, DecodeErrorKind::BadValue("unknown suite")));
    }
    let point_pos = r.pos() + 3;
    let r_point = pki::expect_point(&mut r, params)?;
    if r_point.is_infinity() {
        return Err(DecodeError::new(point_pos, DecodeErrorKind::BadValue("R must not be the identity")));
    }
    let (ciphertext, _) = r.expect(tag::CIPHERTEXT)?;
    let s = pki::expect_scalar(&mut r, params)?;
    r.finish()?;
    Ok(SigncryptedEnvelope {
        curve_id,
        suite_id,
        sender: entity.from.clone(),
        recipient: entity.to.clone(),
        r_point,
        ciphertext: ciphertext.to_vec(),
        s,
    })
}

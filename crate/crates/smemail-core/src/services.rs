//! Server-side machinery: the public-key directory, the OCSP responder, the
//! delegated-validation (DV) server, and a store-and-forward mail relay.
//!
//! These are plain in-process state machines so the whole deployment can run
//! deterministically inside one address space; the flow layer wires them to
//! clients and a virtual clock.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::curve::{CurveError, CurvePoint, DomainParams};
use crate::pki::{
    self, validate_certificate, validate_public_key, CertStatus, Certificate, Identity, KeyPair,
};
use crate::suite::Suite;
use crate::wire::envelope::decode_envelope;
use crate::wire::messages::{
    DirectoryRequest, DirectoryResponse, DvRequest, DvResponse, DvVerdict, OcspRequest,
    OcspStatus, OcspToken,
};
use crate::wire::mime::MimeEntity;
use crate::wire::tlv::{self, tag, DecodeError};

#[derive(Error, Debug, PartialEq, Eq)]
pub enum ServiceError {
    #[error("identity already registered")]
    DuplicateIdentity,
    #[error("certificate does not match the registration")]
    CertMismatch,
    #[error("registered key failed validation: {0}")]
    BadKey(pki::PublicKeyViolation),
    #[error("unknown identity")]
    UnknownIdentity,
    #[error(transparent)]
    Pki(#[from] pki::PkiError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

// ---- directory ------------------------------------------------------------------

/// One registration: the key the CA certified, the certificate itself, and
/// the revocation instant if any.
#[derive(Clone, Debug)]
pub struct DirectoryRecord {
    pub identity: Identity,
    pub pk: CurvePoint,
    pub cert: Certificate,
    pub revoked_at: Option<u64>,
}

/// Authoritative identity → key mapping. Lookups are unauthenticated; the
/// OCSP and DV servers layer signatures on top.
#[derive(Clone, Debug, Default)]
pub struct Directory {
    records: BTreeMap<Identity, DirectoryRecord>,
}

impl Directory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(
        &mut self,
        identity: Identity,
        pk: CurvePoint,
        cert: Certificate,
        params: &DomainParams,
    ) -> Result<(), ServiceError> {
        if self.records.contains_key(&identity) {
            return Err(ServiceError::DuplicateIdentity);
        }
        if cert.subject != identity || cert.subject_pk != pk {
            return Err(ServiceError::CertMismatch);
        }
        if let Err(v) = validate_public_key(&pk, params) {
            return Err(ServiceError::BadKey(v));
        }
        self.records.insert(
            identity.clone(),
            DirectoryRecord { identity, pk, cert, revoked_at: None },
        );
        Ok(())
    }

    pub fn lookup(&self, identity: &Identity) -> Option<&DirectoryRecord> {
        self.records.get(identity)
    }

    pub fn revoke(&mut self, identity: &Identity, at: u64) -> Result<(), ServiceError> {
        match self.records.get_mut(identity) {
            None => Err(ServiceError::UnknownIdentity),
            Some(rec) => {
                rec.revoked_at.get_or_insert(at);
                Ok(())
            }
        }
    }

    pub fn is_revoked(&self, identity: &Identity) -> bool {
        self.lookup(identity).map_or(false, |r| r.revoked_at.is_some())
    }

    pub fn respond(&self, req: &DirectoryRequest) -> DirectoryResponse {
        DirectoryResponse {
            target: req.target.clone(),
            result: self
                .lookup(&req.target)
                .map(|r| (r.pk.clone(), r.revoked_at.is_some())),
        }
    }

    pub fn identities(&self) -> impl Iterator<Item = &Identity> {
        self.records.keys()
    }

    pub fn records(&self) -> impl Iterator<Item = &DirectoryRecord> {
        self.records.values()
    }

    /// Reinserts a persisted record verbatim, revocation mark included.
    /// Duplicates are still refused; validation happened at original `put`
    /// time and the record format carries no way to forge past it silently.
    pub fn restore(&mut self, rec: DirectoryRecord) -> Result<(), ServiceError> {
        if self.records.contains_key(&rec.identity) {
            return Err(ServiceError::DuplicateIdentity);
        }
        self.records.insert(rec.identity.clone(), rec);
        Ok(())
    }
}

/// Persistence format for one directory record (used by the CLI state dir):
/// the registration fields with the certificate nested as opaque octets.
pub fn record_to_bytes(rec: &DirectoryRecord, params: &DomainParams, suite: &Suite) -> Vec<u8> {
    let cert = pki::cert_to_bytes(&rec.cert, params, suite);
    let mut w = tlv::Writer::new();
    w.u8_record(tag::VERSION, 1)
        .record(tag::IDENTITY, rec.identity.as_bytes())
        .record(tag::POINT, &params.encode_point(&rec.pk))
        .u8_record(tag::STATUS, rec.revoked_at.is_some() as u8);
    if let Some(at) = rec.revoked_at {
        w.u64_record(tag::TIMESTAMP, at);
    }
    w.record(tag::CIPHERTEXT, &cert);
    w.into_bytes()
}

pub fn record_from_bytes(
    bytes: &[u8],
    params: &DomainParams,
) -> Result<DirectoryRecord, ServiceError> {
    let mut r = tlv::Reader::new(bytes);
    let pos = r.pos() + 3;
    if r.expect_u8(tag::VERSION)? != 1 {
        return Err(DecodeError::new(
            pos,
            tlv::DecodeErrorKind::BadValue("unsupported record version"),
        )
        .into());
    }
    let identity = {
        let (raw, off) = r.expect(tag::IDENTITY)?;
        std::str::from_utf8(raw)
            .ok()
            .and_then(|s| Identity::parse(s).ok())
            .ok_or_else(|| {
                DecodeError::new(off, tlv::DecodeErrorKind::BadValue("invalid identity"))
            })?
    };
    let pk = pki::expect_point(&mut r, params)?;
    let revoked = r.expect_u8(tag::STATUS)? != 0;
    let revoked_at = if revoked { Some(r.expect_u64(tag::TIMESTAMP)?) } else { None };
    let (cert_bytes, _) = r.expect(tag::CIPHERTEXT)?;
    let (cert, _) = pki::cert_from_bytes(cert_bytes, params)?;
    r.finish()?;
    Ok(DirectoryRecord { identity, pk, cert, revoked_at })
}

// ---- OCSP responder ---------------------------------------------------------------

/// Signs status assertions over directory state. For a known, unrevoked
/// identity the token carries the registered key plus a `pk_valid` flag
/// summarizing the responder's own certificate and key checks, so clients
/// need no CA round trip of their own.
pub struct OcspServer {
    pub id: Identity,
    pub keys: KeyPair,
    pub ca_pk: CurvePoint,
}

impl OcspServer {
    pub fn respond(
        &self,
        req: &OcspRequest,
        directory: &Directory,
        now: u64,
        params: &DomainParams,
        suite: &'static Suite,
        rng: &mut dyn rand::RngCore,
    ) -> OcspToken {
        let (status, pk, pk_valid) = match directory.lookup(&req.target) {
            None => (OcspStatus::Unknown, None, None),
            Some(rec) if rec.revoked_at.is_some() => (OcspStatus::Revoked, None, None),
            Some(rec) => {
                let cert_ok = validate_certificate(&rec.cert, &self.ca_pk, now, params, suite)
                    == CertStatus::Good;
                let key_ok = validate_public_key(&rec.pk, params).is_ok();
                (OcspStatus::Good, Some(rec.pk.clone()), Some(cert_ok && key_ok))
            }
        };
        let mut token = OcspToken {
            target: req.target.clone(),
            status,
            pk,
            pk_valid,
            produced_at: now,
            nonce: req.nonce.clone(),
            signature: pki::DetachedSignature {
                r_point: CurvePoint::Infinity,
                s: params.scalar_from(0u32),
            },
        };
        token.signature = pki::sign_detached(
            &crate::wire::messages::ocsp_token_signing_bytes(&token, params),
            &self.keys.sk,
            params,
            suite,
            rng,
        );
        token
    }
}

// ---- delegated validation server -----------------------------------------------------

/// The digest a DV report commits to: the submitted entity octets exactly as
/// received, bound to the claimed sender and recipient.
pub fn dv_digest(suite: &Suite, entity_text: &[u8], sender: &Identity, recipient: &Identity) -> Vec<u8> {
    let mut buf = Vec::with_capacity(entity_text.len() + 64);
    buf.extend_from_slice(entity_text);
    buf.extend_from_slice(&sender.length_prefixed());
    buf.extend_from_slice(&recipient.length_prefixed());
    suite.digest(&buf)
}

/// Validates on behalf of senders: certificate, key, and revocation status
/// for both parties, plus envelope well-formedness. It holds no private keys
/// and never unsigncrypts; content integrity stays end-to-end. On success
/// the report is signed and the entity is queued for delivery; on failure
/// the report goes back unsigned, nothing is delivered, and the failure is
/// logged.
pub struct DvServer {
    pub id: Identity,
    pub keys: KeyPair,
    pub ocsp_pk: CurvePoint,
    pub ca_pk: CurvePoint,
    pub log: Vec<String>,
}

impl DvServer {
    pub fn new(id: Identity, keys: KeyPair, ocsp_pk: CurvePoint, ca_pk: CurvePoint) -> Self {
        Self { id, keys, ocsp_pk, ca_pk, log: Vec::new() }
    }

    /// Full validation pipeline. `query_ocsp` lets the caller interpose the
    /// deployment's responder (and its transcript hooks) without this server
    /// holding a reference to it.
    #[allow(clippy::too_many_arguments)]
    pub fn validate(
        &mut self,
        req: &DvRequest,
        directory: &Directory,
        now: u64,
        params: &DomainParams,
        suite: &'static Suite,
        rng: &mut dyn rand::RngCore,
        query_ocsp: &mut dyn FnMut(&OcspRequest) -> OcspToken,
    ) -> (DvResponse, Option<MimeEntity>) {
        let verdict = self.inspect(req, directory, now, params, suite, rng, query_ocsp);
        let digest = dv_digest(suite, &req.entity_text, &req.sender, &req.recipient);
        let mut resp = DvResponse {
            sender: req.sender.clone(),
            recipient: req.recipient.clone(),
            verdict,
            params_digest: digest,
            produced_at: now,
            signature: None,
        };
        let entity = match verdict {
            DvVerdict::Ok => {
                resp.signature = Some(pki::sign_detached(
                    &crate::wire::messages::dv_response_signing_bytes(&resp),
                    &self.keys.sk,
                    params,
                    suite,
                    rng,
                ));
                // re-parse is infallible here: inspect() already did it
                std::str::from_utf8(&req.entity_text)
                    .ok()
                    .and_then(|t| MimeEntity::parse(t).ok())
            }
            _ => None,
        };
        self.log.push(format!(
            "{} {} {} {} {}",
            now,
            hex_lower(&resp.params_digest),
            req.sender,
            req.recipient,
            verdict.label(),
        ));
        (resp, entity)
    }

    #[allow(clippy::too_many_arguments)]
    fn inspect(
        &self,
        req: &DvRequest,
        directory: &Directory,
        now: u64,
        params: &DomainParams,
        suite: &'static Suite,
        rng: &mut dyn rand::RngCore,
        query_ocsp: &mut dyn FnMut(&OcspRequest) -> OcspToken,
    ) -> DvVerdict {
        // structural checks first: the entity must parse, its headers must
        // match the claimed parties, and the envelope must decode
        let text = match std::str::from_utf8(&req.entity_text) {
            Ok(t) => t,
            Err(_) => return DvVerdict::MalformedEnvelope,
        };
        let entity = match MimeEntity::parse(text) {
            Ok(e) => e,
            Err(_) => return DvVerdict::MalformedEnvelope,
        };
        if entity.from != req.sender || entity.to != req.recipient {
            return DvVerdict::MalformedEnvelope;
        }
        if decode_envelope(&entity, params).is_err() {
            return DvVerdict::MalformedEnvelope;
        }

        // status of both parties via the responder, sender first
        for (who, revoked, unknown) in [
            (&req.sender, DvVerdict::SenderRevoked, DvVerdict::SenderUnknown),
            (&req.recipient, DvVerdict::RecipientRevoked, DvVerdict::RecipientUnknown),
        ] {
            let mut nonce = vec![0u8; pki::POP_NONCE_LEN];
            rng.fill_bytes(&mut nonce);
            let ocsp_req = OcspRequest { target: who.clone(), nonce: nonce.clone() };
            let token = query_ocsp(&ocsp_req);
            if !crate::wire::messages::verify_ocsp_token(&token, &self.ocsp_pk, params, suite)
                || token.nonce != nonce
                || token.target != *who
            {
                return DvVerdict::OcspSignatureBad;
            }
            match token.status {
                OcspStatus::Revoked => return revoked,
                OcspStatus::Unknown => return unknown,
                OcspStatus::Good => {}
            }
        }

        // certificate and key checks from the directory records
        for who in [&req.sender, &req.recipient] {
            let rec = match directory.lookup(who) {
                Some(r) => r,
                // unreachable if OCSP and directory agree, but don't assume
                None => return DvVerdict::SenderUnknown,
            };
            match validate_certificate(&rec.cert, &self.ca_pk, now, params, suite) {
                CertStatus::Good => {}
                CertStatus::Expired => return DvVerdict::CertExpired,
                CertStatus::BadSignature => return DvVerdict::CertBadSignature,
            }
            if validate_public_key(&rec.pk, params).is_err() {
                return DvVerdict::BadPublicKey;
            }
        }

        // well-formed and fully validated; content checks are the
        // recipient's job, since only the recipient can derive k
        DvVerdict::Ok
    }
}

fn hex_lower(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

// ---- mail relay --------------------------------------------------------------------

/// A delivered item: the entity plus the DV report that authorized it (none
/// in basic topology, where the relay is a dumb queue).
#[derive(Clone, Debug)]
pub struct MailItem {
    pub entity: MimeEntity,
    pub report: Option<DvResponse>,
}

/// Store-and-forward queues plus a journal of everything ever relayed — the
/// journal doubles as the adversary's wiretap and replay source in tests.
#[derive(Default)]
pub struct MailServer {
    boxes: BTreeMap<Identity, Vec<MailItem>>,
    pub journal: Vec<MailItem>,
}

impl MailServer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enqueue(&mut self, recipient: Identity, item: MailItem) {
        self.journal.push(item.clone());
        self.boxes.entry(recipient).or_default().push(item);
    }

    pub fn fetch(&mut self, recipient: &Identity) -> Vec<MailItem> {
        self.boxes.remove(recipient).unwrap_or_default()
    }

    pub fn pending(&self, recipient: &Identity) -> usize {
        self.boxes.get(recipient).map_or(0, Vec::len)
    }
}

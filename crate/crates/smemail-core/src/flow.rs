//! Client-side protocol flows over an in-process deployment: composing in
//! basic and delegated topologies, delivering with per-stage rejection
//! reporting, and the transcript type the simulator snapshots.

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::curve::{CurvePoint, DomainParams};
use crate::pki::{
    generate_keypair, proof_of_possession, validate_public_key, CertificateAuthority, Identity,
    KeyPair,
};
use crate::services::{
    dv_digest, Directory, DvServer, MailItem, MailServer, OcspServer, ServiceError,
};
use crate::signcrypt::{signcrypt, unsigncrypt, SigncryptError};
use crate::suite::{suite_by_id, Suite};
use crate::wire::envelope::{decode_envelope, encode_envelope, EncodeError};
use crate::wire::messages::{
    verify_dv_response, DvRequest, DvVerdict, OcspRequest, OcspStatus, OcspToken,
};
use crate::wire::tlv::{self, tag};

/// How old an OCSP token may be, in virtual seconds, before a client refuses
/// to act on it.
pub const FRESHNESS_WINDOW: u64 = 300;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Topology {
    /// Sender validates the recipient via OCSP herself (Fig. 3 shape).
    Basic,
    /// Validation delegated to the DV server; independent mail relay.
    DelegatedFig4,
    /// As fig4, but the mail relay is operated by the network provider.
    DelegatedFig5,
}

impl Topology {
    pub fn parse(s: &str) -> Option<Topology> {
        match s {
            "basic" => Some(Topology::Basic),
            "delegated-fig4" | "fig4" => Some(Topology::DelegatedFig4),
            "delegated-fig5" | "fig5" => Some(Topology::DelegatedFig5),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Topology::Basic => "basic",
            Topology::DelegatedFig4 => "delegated-fig4",
            Topology::DelegatedFig5 => "delegated-fig5",
        }
    }

    pub fn is_delegated(self) -> bool {
        !matches!(self, Topology::Basic)
    }
}

/// The server keys every client is configured to trust.
#[derive(Clone, Debug)]
pub struct TrustedRoots {
    pub ca_pk: CurvePoint,
    pub ocsp_pk: CurvePoint,
    pub dv_pk: CurvePoint,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum KeySource {
    Ocsp,
    Directory,
    Pinned,
}

impl KeySource {
    pub fn label(self) -> &'static str {
        match self {
            KeySource::Ocsp => "ocsp",
            KeySource::Directory => "directory",
            KeySource::Pinned => "pinned",
        }
    }
}

/// A peer key the client has accepted, with where it came from.
#[derive(Clone, Debug)]
pub struct KnownKey {
    pub pk: CurvePoint,
    pub source: KeySource,
    pub fetched_at: u64,
}

/// A mail user agent's long-lived state.
pub struct ClientState {
    pub id: Identity,
    pub keys: KeyPair,
    pub roots: TrustedRoots,
    pub known_keys: BTreeMap<Identity, KnownKey>,
    /// Encodings of every R accepted so far; duplicates are replays.
    pub seen_r: BTreeSet<Vec<u8>>,
    pub freshness_window: u64,
}

impl ClientState {
    pub fn new(id: Identity, keys: KeyPair, roots: TrustedRoots) -> Self {
        ClientState {
            id,
            keys,
            roots,
            known_keys: BTreeMap::new(),
            seen_r: BTreeSet::new(),
            freshness_window: FRESHNESS_WINDOW,
        }
    }

    pub fn pin(&mut self, peer: Identity, pk: CurvePoint, at: u64) {
        self.known_keys.insert(peer, KnownKey { pk, source: KeySource::Pinned, fetched_at: at });
    }
}

// ---- transcripts -------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EntryKind {
    /// Traffic between actors — what the 4-messages-per-send count counts.
    Message,
    /// Local observation; never leaves the actor.
    Note,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TranscriptEntry {
    pub at: u64,
    pub kind: EntryKind,
    pub actor: String,
    pub text: String,
}

/// Ordered record of everything observable in a run. Rendering is canonical
/// so transcripts can be compared byte-for-byte across runs.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn msg(&mut self, at: u64, actor: &str, text: String) {
        self.entries.push(TranscriptEntry { at, kind: EntryKind::Message, actor: actor.into(), text });
    }

    pub fn note(&mut self, at: u64, actor: &str, text: String) {
        self.entries.push(TranscriptEntry { at, kind: EntryKind::Note, actor: actor.into(), text });
    }

    pub fn message_count(&self) -> usize {
        self.entries.iter().filter(|e| e.kind == EntryKind::Message).count()
    }

    /// Index of the first entry whose text contains `needle`.
    pub fn position(&self, needle: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.text.contains(needle))
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.position(needle).is_some()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let kind = match e.kind {
                EntryKind::Message => "msg",
                EntryKind::Note => "note",
            };
            out.push_str(&format!("{} {} {} {}\n", e.at, kind, e.actor, e.text));
        }
        out
    }

    /// TLV form for golden files: one (timestamp, kind, actor, text) group
    /// per entry.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = tlv::Writer::new();
        for e in &self.entries {
            w.u64_record(tag::TIMESTAMP, e.at)
                .u8_record(tag::STATUS, (e.kind == EntryKind::Note) as u8)
                .record(tag::IDENTITY, e.actor.as_bytes())
                .record(tag::CIPHERTEXT, e.text.as_bytes());
        }
        w.into_bytes()
    }
}

// ---- error taxonomy -----------------------------------------------------------

#[derive(Error, Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcspFailure {
    #[error("token signature does not verify")]
    BadSignature,
    #[error("token echoes a different nonce")]
    NonceMismatch,
    #[error("token names a different identity")]
    WrongTarget,
    #[error("token is older than the freshness window")]
    Stale,
    #[error("identity is revoked")]
    Revoked,
    #[error("identity is unknown")]
    Unknown,
    #[error("responder could not vouch for the key")]
    KeyInvalid,
}

impl OcspFailure {
    pub fn label(self) -> &'static str {
        match self {
            OcspFailure::BadSignature => "ocsp-signature-bad",
            OcspFailure::NonceMismatch => "ocsp-nonce-mismatch",
            OcspFailure::WrongTarget => "ocsp-wrong-target",
            OcspFailure::Stale => "ocsp-stale",
            OcspFailure::Revoked => "ocsp-revoked",
            OcspFailure::Unknown => "ocsp-unknown",
            OcspFailure::KeyInvalid => "ocsp-key-invalid",
        }
    }
}

#[derive(Error, Debug, PartialEq, Eq)]
pub enum SendError {
    #[error("ocsp validation failed: {0}")]
    Ocsp(OcspFailure),
    #[error("recipient not in the directory")]
    RecipientUnknown,
    #[error("directory returned an invalid key")]
    BadDirectoryKey,
    #[error("validation server rejected: {}", .0.label())]
    DvRejected(DvVerdict),
    #[error("validation report signature or digest did not verify")]
    DvReportInvalid,
    #[error("signcryption failed: {0}")]
    Signcrypt(SigncryptError),
    #[error("envelope encoding failed: {0}")]
    Encode(EncodeError),
}

/// Why an incoming item was refused, by pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    Ocsp(OcspFailure),
    DvSignature,
    DigestMismatch,
    EnvelopeInvalid(String),
    SignatureInvalid,
    Replay,
}

impl RejectReason {
    pub fn stage(&self) -> &'static str {
        match self {
            RejectReason::Ocsp(_) => "ocsp",
            RejectReason::DvSignature => "dv-signature",
            RejectReason::DigestMismatch => "digest-mismatch",
            RejectReason::EnvelopeInvalid(_) => "envelope-invalid",
            RejectReason::SignatureInvalid => "signature-invalid",
            RejectReason::Replay => "replay",
        }
    }
}

/// One fetched item's fate.
#[derive(Debug, PartialEq, Eq)]
pub struct Delivery {
    pub from: Identity,
    pub outcome: Result<Vec<u8>, RejectReason>,
}

// ---- the deployment ------------------------------------------------------------

/// All services of one deployment behind a single mutable facade, plus the
/// hooks the attack scenarios use.
pub struct ServiceBus {
    pub params: DomainParams,
    pub suite: &'static Suite,
    pub directory: Directory,
    pub ocsp: OcspServer,
    pub dv: DvServer,
    pub mail: MailServer,
    pub directory_id: Identity,
    pub mail_id: Identity,
    /// When set, the next client-facing OCSP token is corrupted in flight
    /// (signature scalar bumped) and the flag clears. DV-internal queries
    /// are unaffected.
    pub corrupt_next_ocsp_token: bool,
    server_rng: ChaCha20Rng,
}

impl ServiceBus {
    /// Assembles a bus from individually constructed (or persisted) services.
    /// `rng_seed` feeds the servers' signing nonces for this process.
    pub fn assemble(
        params: DomainParams,
        suite: &'static Suite,
        directory: Directory,
        ocsp: OcspServer,
        dv: DvServer,
        mail: MailServer,
        rng_seed: u64,
    ) -> ServiceBus {
        ServiceBus {
            params,
            suite,
            directory,
            ocsp,
            dv,
            mail,
            directory_id: Identity::parse("directory@sim.local").unwrap(),
            mail_id: Identity::parse("mail@sim.local").unwrap(),
            corrupt_next_ocsp_token: false,
            server_rng: ChaCha20Rng::seed_from_u64(rng_seed),
        }
    }

    /// Client-facing OCSP query; applies the in-flight corruption hook.
    pub fn ocsp_query(&mut self, target: &Identity, nonce: Vec<u8>, now: u64) -> OcspToken {
        let req = OcspRequest { target: target.clone(), nonce };
        let mut token = self.ocsp.respond(
            &req,
            &self.directory,
            now,
            &self.params,
            self.suite,
            &mut self.server_rng,
        );
        if self.corrupt_next_ocsp_token {
            self.corrupt_next_ocsp_token = false;
            token.signature.s = self.params.sc_add(&token.signature.s, &self.params.scalar_from(1u32));
        }
        token
    }

    /// Submit an entity for delegated validation; delivers on success.
    pub fn dv_submit(&mut self, req: &DvRequest, now: u64) -> crate::wire::messages::DvResponse {
        let ServiceBus { params, suite, directory, ocsp, dv, mail, server_rng, .. } = self;
        let params: &DomainParams = params;
        let directory: &Directory = directory;
        let ocsp: &OcspServer = ocsp;
        // the responder draws from a child stream so both sides can sign
        let mut ocsp_rng = ChaCha20Rng::seed_from_u64(server_rng.next_u64());
        let mut query =
            |r: &OcspRequest| ocsp.respond(r, directory, now, params, suite, &mut ocsp_rng);
        let (resp, delivered) = dv.validate(req, directory, now, params, suite, server_rng, &mut query);
        if let Some(entity) = delivered {
            mail.enqueue(req.recipient.clone(), MailItem { entity, report: Some(resp.clone()) });
        }
        resp
    }

    pub fn revoke(&mut self, identity: &Identity, at: u64) -> Result<(), ServiceError> {
        self.directory.revoke(identity, at)
    }
}

/// A provisioned world: services plus one client per user, all keys
/// certified and registered.
pub struct Deployment {
    pub bus: ServiceBus,
    pub clients: BTreeMap<Identity, ClientState>,
    pub ca: CertificateAuthority,
    /// Client-side randomness stream (ephemerals, nonces).
    pub rng: ChaCha20Rng,
}

impl Deployment {
    pub fn client_mut(&mut self, id: &Identity) -> &mut ClientState {
        self.clients.get_mut(id).expect("unknown client")
    }
}

/// Builds a deployment deterministically from a seed: CA, OCSP, DV and mail
/// services under `sim.local`, then one enrolled client per user id.
/// Certificates are valid from an hour before `now` to thirty days after.
pub fn provision(
    params: &DomainParams,
    suite: &'static Suite,
    user_ids: &[Identity],
    now: u64,
    seed: u64,
) -> Deployment {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut ca = CertificateAuthority::new(
        Identity::parse("ca@sim.local").unwrap(),
        generate_keypair(params, &mut rng),
    );
    let ocsp_keys = generate_keypair(params, &mut rng);
    let dv_keys = generate_keypair(params, &mut rng);
    let roots = TrustedRoots {
        ca_pk: ca.keys.pk.clone(),
        ocsp_pk: ocsp_keys.pk.clone(),
        dv_pk: dv_keys.pk.clone(),
    };

    let mut directory = Directory::new();
    let mut clients = BTreeMap::new();
    for id in user_ids {
        let kp = generate_keypair(params, &mut rng);
        let nonce = ca.fresh_nonce(&mut rng);
        let pop = proof_of_possession(&nonce, &kp, params, suite, &mut rng);
        let cert = ca
            .issue(id, &kp.pk, &pop, &nonce, now - 3_600, now + 30 * 86_400, params, suite, &mut rng)
            .expect("enrollment of a fresh key cannot fail");
        directory.put(id.clone(), kp.pk.clone(), cert, params).expect("ids are unique");
        clients.insert(id.clone(), ClientState::new(id.clone(), kp, roots.clone()));
    }

    let server_rng = ChaCha20Rng::seed_from_u64(rng.next_u64());
    let bus = ServiceBus {
        params: params.clone(),
        suite,
        directory,
        ocsp: OcspServer {
            id: Identity::parse("ocsp@sim.local").unwrap(),
            keys: ocsp_keys,
            ca_pk: roots.ca_pk.clone(),
        },
        dv: DvServer::new(
            Identity::parse("dv@sim.local").unwrap(),
            dv_keys,
            roots.ocsp_pk.clone(),
            roots.ca_pk.clone(),
        ),
        mail: MailServer::new(),
        directory_id: Identity::parse("directory@sim.local").unwrap(),
        mail_id: Identity::parse("mail@sim.local").unwrap(),
        corrupt_next_ocsp_token: false,
        server_rng,
    };
    Deployment { bus, clients, ca, rng }
}

// ---- token validation ------------------------------------------------------------

/// Client-side checks on a fetched OCSP token, in order: signature, target,
/// nonce echo, freshness, status, key usability. Returns the vouched key.
pub fn validate_ocsp_token(
    token: &OcspToken,
    target: &Identity,
    nonce: &[u8],
    roots: &TrustedRoots,
    now: u64,
    window: u64,
    params: &DomainParams,
    suite: &'static Suite,
) -> Result<CurvePoint, OcspFailure> {
    if !crate::wire::messages::verify_ocsp_token(token, &roots.ocsp_pk, params, suite) {
        return Err(OcspFailure::BadSignature);
    }
    if token.target != *target {
        return Err(OcspFailure::WrongTarget);
    }
    if token.nonce != nonce {
        return Err(OcspFailure::NonceMismatch);
    }
    if token.produced_at > now || now - token.produced_at > window {
        return Err(OcspFailure::Stale);
    }
    match token.status {
        OcspStatus::Revoked => return Err(OcspFailure::Revoked),
        OcspStatus::Unknown => return Err(OcspFailure::Unknown),
        OcspStatus::Good => {}
    }
    if token.pk_valid != Some(true) {
        return Err(OcspFailure::KeyInvalid);
    }
    match &token.pk {
        Some(pk) if validate_public_key(pk, params).is_ok() => Ok(pk.clone()),
        _ => Err(OcspFailure::KeyInvalid),
    }
}

fn short_digest(suite: &Suite, bytes: &[u8]) -> String {
    let d = suite.digest(bytes);
    d[..4].iter().map(|b| format!("{b:02x}")).collect()
}

// ---- composing -----------------------------------------------------------------

/// Sends `message` to `recipient` over the given topology, recording every
/// exchange. Nothing is handed to the transport until validation succeeds.
#[allow(clippy::too_many_arguments)]
pub fn compose_and_send(
    client: &mut ClientState,
    bus: &mut ServiceBus,
    recipient: &Identity,
    message: &[u8],
    topology: Topology,
    now: u64,
    rng: &mut dyn RngCore,
    transcript: &mut Transcript,
) -> Result<(), SendError> {
    let pk_b = if topology.is_delegated() {
        delegated_recipient_key(client, bus, recipient, now, transcript)?
    } else {
        ocsp_recipient_key(client, bus, recipient, now, rng, transcript)?
    };

    let env = signcrypt(message, &client.id, &client.keys, recipient, &pk_b, &bus.params, bus.suite, rng)
        .map_err(SendError::Signcrypt)?;
    transcript.note(
        now,
        client.id.as_str(),
        format!("signcrypt to {recipient} ({} plaintext octets)", message.len()),
    );
    let entity = encode_envelope(&env, &bus.params).map_err(SendError::Encode)?;
    let text = entity.render_bytes();
    let digest = short_digest(bus.suite, &text);

    if topology.is_delegated() {
        transcript.msg(now, client.id.as_str(), format!("dv-submit {digest} to {recipient}"));
        let req = DvRequest {
            sender: client.id.clone(),
            recipient: recipient.clone(),
            entity_text: text.clone(),
        };
        let resp = bus.dv_submit(&req, now);
        let signed = if resp.signature.is_some() { "signed" } else { "unsigned" };
        transcript.msg(
            now,
            bus.dv.id.as_str(),
            format!("dv-report {} {signed}", resp.verdict.label()),
        );
        if resp.verdict != DvVerdict::Ok {
            return Err(SendError::DvRejected(resp.verdict));
        }
        if !verify_dv_response(&resp, &client.roots.dv_pk, &bus.params, bus.suite)
            || resp.params_digest != dv_digest(bus.suite, &text, &client.id, recipient)
        {
            return Err(SendError::DvReportInvalid);
        }
        transcript.note(now, client.id.as_str(), format!("dv-report-verified {digest}"));
    } else {
        transcript.msg(now, client.id.as_str(), format!("submit {digest} to {recipient}"));
        bus.mail.enqueue(recipient.clone(), MailItem { entity, report: None });
        transcript.msg(
            now,
            bus.mail_id.as_str(),
            format!("ack {recipient} queued={}", bus.mail.pending(recipient)),
        );
    }
    Ok(())
}

/// Basic-topology key discovery: query OCSP, validate the token, pin the key.
fn ocsp_recipient_key(
    client: &mut ClientState,
    bus: &mut ServiceBus,
    recipient: &Identity,
    now: u64,
    rng: &mut dyn RngCore,
    transcript: &mut Transcript,
) -> Result<CurvePoint, SendError> {
    let mut nonce = vec![0u8; 16];
    rng.fill_bytes(&mut nonce);
    transcript.msg(now, client.id.as_str(), format!("ocsp-query {recipient}"));
    let token = bus.ocsp_query(recipient, nonce.clone(), now);
    transcript.msg(now, bus.ocsp.id.as_str(), describe_token(&token));
    let pk = validate_ocsp_token(
        &token,
        recipient,
        &nonce,
        &client.roots,
        now,
        client.freshness_window,
        &bus.params,
        bus.suite,
    )
    .map_err(SendError::Ocsp)?;
    transcript.note(now, client.id.as_str(), format!("ocsp-validated {recipient}"));
    client.known_keys.insert(
        recipient.clone(),
        KnownKey { pk: pk.clone(), source: KeySource::Ocsp, fetched_at: now },
    );
    Ok(pk)
}

/// Delegated-topology key discovery: pinned key if present, else one
/// directory lookup. No OCSP traffic on this path.
fn delegated_recipient_key(
    client: &mut ClientState,
    bus: &ServiceBus,
    recipient: &Identity,
    now: u64,
    transcript: &mut Transcript,
) -> Result<CurvePoint, SendError> {
    if let Some(known) = client.known_keys.get(recipient) {
        transcript.note(
            now,
            client.id.as_str(),
            format!("pinned-key {recipient} source={}", known.source.label()),
        );
        return Ok(known.pk.clone());
    }
    transcript.msg(now, client.id.as_str(), format!("directory-query {recipient}"));
    let resp = bus.directory.respond(&crate::wire::messages::DirectoryRequest {
        target: recipient.clone(),
    });
    match resp.result {
        None => {
            transcript.msg(now, bus.directory_id.as_str(), format!("directory-miss {recipient}"));
            Err(SendError::RecipientUnknown)
        }
        Some((pk, revoked)) => {
            transcript.msg(
                now,
                bus.directory_id.as_str(),
                format!("directory-record {recipient} revoked={revoked}"),
            );
            if validate_public_key(&pk, &bus.params).is_err() {
                return Err(SendError::BadDirectoryKey);
            }
            transcript.note(now, client.id.as_str(), format!("directory-validated {recipient}"));
            client.known_keys.insert(
                recipient.clone(),
                KnownKey { pk: pk.clone(), source: KeySource::Directory, fetched_at: now },
            );
            Ok(pk)
        }
    }
}

fn describe_token(token: &OcspToken) -> String {
    let mut text = format!("ocsp-token {} {}", token.target, token.status.label());
    if let Some(v) = token.pk_valid {
        text.push_str(if v { " pk-valid" } else { " pk-invalid" });
    }
    text
}

// ---- delivering -----------------------------------------------------------------

/// Drains the client's mailbox and opens each item, reporting per-item
/// outcomes in arrival order.
pub fn fetch_and_open(
    client: &mut ClientState,
    bus: &mut ServiceBus,
    topology: Topology,
    now: u64,
    rng: &mut dyn RngCore,
    transcript: &mut Transcript,
) -> Vec<Delivery> {
    let items = bus.mail.fetch(&client.id);
    transcript.msg(now, client.id.as_str(), format!("fetch {} item(s)", items.len()));
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let from = item.entity.from.clone();
        let outcome = open_item(client, bus, &item, topology, now, rng, transcript);
        match &outcome {
            Ok(_) => transcript.note(now, client.id.as_str(), format!("accept from {from}")),
            Err(r) => transcript.note(
                now,
                client.id.as_str(),
                format!("reject from {from} stage={}", r.stage()),
            ),
        }
        out.push(Delivery { from, outcome });
    }
    out
}

fn open_item(
    client: &mut ClientState,
    bus: &mut ServiceBus,
    item: &MailItem,
    topology: Topology,
    now: u64,
    rng: &mut dyn RngCore,
    transcript: &mut Transcript,
) -> Result<Vec<u8>, RejectReason> {
    let from = item.entity.from.clone();
    let text = item.entity.render_bytes();

    let pk_a = if topology.is_delegated() {
        // digest first: a mismatch means the octets changed after the DV saw
        // them, and that verdict needs no curve work at all. The report's
        // signature is checked next, before its verdict is trusted.
        let report = item.report.as_ref().ok_or(RejectReason::DvSignature)?;
        if report.params_digest != dv_digest(bus.suite, &text, &from, &client.id) {
            return Err(RejectReason::DigestMismatch);
        }
        if !verify_dv_response(report, &client.roots.dv_pk, &bus.params, bus.suite) {
            return Err(RejectReason::DvSignature);
        }
        transcript.note(now, client.id.as_str(), format!("dv-report-verified from {from}"));
        delegated_sender_key(client, bus, &from, now, transcript)?
    } else {
        let mut nonce = vec![0u8; 16];
        rng.fill_bytes(&mut nonce);
        transcript.msg(now, client.id.as_str(), format!("ocsp-query {from}"));
        let token = bus.ocsp_query(&from, nonce.clone(), now);
        transcript.msg(now, bus.ocsp.id.as_str(), describe_token(&token));
        let pk = validate_ocsp_token(
            &token,
            &from,
            &nonce,
            &client.roots,
            now,
            client.freshness_window,
            &bus.params,
            bus.suite,
        )
        .map_err(RejectReason::Ocsp)?;
        transcript.note(now, client.id.as_str(), format!("ocsp-validated {from}"));
        client.known_keys.insert(
            from.clone(),
            KnownKey { pk: pk.clone(), source: KeySource::Ocsp, fetched_at: now },
        );
        pk
    };

    let env = decode_envelope(&item.entity, &bus.params)
        .map_err(|e| RejectReason::EnvelopeInvalid(e.to_string()))?;
    if env.recipient != client.id {
        return Err(RejectReason::EnvelopeInvalid("addressed to a different identity".into()));
    }
    let suite = suite_by_id(env.suite_id).expect("decoder admits known suites only");
    let message = unsigncrypt(&env, &client.keys, &pk_a, &bus.params, suite).map_err(|e| match e {
        SigncryptError::EnvelopeInvalid(m) => RejectReason::EnvelopeInvalid(m.into()),
        _ => RejectReason::SignatureInvalid,
    })?;
    // replay check happens on envelopes that verified: a fresh r makes every
    // honest R unique, so a repeat can only be a replay
    if !client.seen_r.insert(bus.params.encode_point(&env.r_point)) {
        return Err(RejectReason::Replay);
    }
    Ok(message)
}

/// Sender-key discovery on the delivery side in delegated mode — pinned or
/// directory, never OCSP.
fn delegated_sender_key(
    client: &mut ClientState,
    bus: &ServiceBus,
    sender: &Identity,
    now: u64,
    transcript: &mut Transcript,
) -> Result<CurvePoint, RejectReason> {
    if let Some(known) = client.known_keys.get(sender) {
        transcript.note(
            now,
            client.id.as_str(),
            format!("pinned-key {sender} source={}", known.source.label()),
        );
        return Ok(known.pk.clone());
    }
    transcript.msg(now, client.id.as_str(), format!("directory-query {sender}"));
    let resp = bus
        .directory
        .respond(&crate::wire::messages::DirectoryRequest { target: sender.clone() });
    match resp.result {
        None => {
            transcript.msg(now, bus.directory_id.as_str(), format!("directory-miss {sender}"));
            Err(RejectReason::EnvelopeInvalid("sender not in the directory".into()))
        }
        Some((pk, revoked)) => {
            transcript.msg(
                now,
                bus.directory_id.as_str(),
                format!("directory-record {sender} revoked={revoked}"),
            );
            if validate_public_key(&pk, &bus.params).is_err() {
                return Err(RejectReason::EnvelopeInvalid("sender key invalid".into()));
            }
            client.known_keys.insert(
                sender.clone(),
                KnownKey { pk: pk.clone(), source: KeySource::Directory, fetched_at: now },
            );
            Ok(pk)
        }
    }
}

//! SMEmail: signcryption-based secure mail over a minimal PKI.
//!
//! The crate is layered bottom-up:
//!
//! * [`curve`] — prime-field and short-Weierstrass group arithmetic over
//!   arbitrary-precision integers, domain-parameter validation, point and
//!   scalar codecs.
//! * [`suite`] — pluggable hash/KDF/cipher bundles (SHA-256 + AES-128-CTR by
//!   default).
//! * [`pki`] — identities, key pairs, detached signatures, certificates, and
//!   password-sealed keystores.
//! * [`signcrypt`] — the combined sign-and-encrypt primitive and its public
//!   verification mode.
//! * [`wire`] — TLV container, MIME envelope, and every request/response
//!   message format.
//! * [`services`] — directory, OCSP responder, delegated-validation server,
//!   and store-and-forward mail relay.
//! * [`flow`] — the client-side protocol driver (compose/send, fetch/open)
//!   with pinning, replay, and freshness policy.
//! * [`sim`] — a deterministic scenario interpreter producing byte-stable
//!   transcripts.
//!
//! [`testkit`] carries the independent oracles (naive group law, brute-force
//! discrete log) used to cross-check the production arithmetic; it is compiled
//! into the library so integration tests and the simulator's recovery
//! demonstrations can share it.

pub mod curve;
pub mod flow;
pub mod opcount;
pub mod pki;
pub mod services;
pub mod signcrypt;
pub mod sim;
pub mod suite;
pub mod testkit;
pub mod wire;

pub use curve::{CurvePoint, DomainParams, FieldElement, Scalar, ValidationMode};
pub use pki::{Certificate, DetachedSignature, Identity, KeyPair};
pub use signcrypt::SigncryptedEnvelope;
pub use suite::Suite;

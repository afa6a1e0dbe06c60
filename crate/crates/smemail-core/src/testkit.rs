//! Independent oracles used to cross-check the production arithmetic, plus a
//! reference sign-then-encrypt composition for cost comparisons.
//!
//! The oracles deliberately share no code with [`crate::curve`]'s fast paths:
//! `naive_scalar_mul` is repeated addition, `discrete_log` is brute-force
//! search. Both are only usable on desk-scale groups, which is the point.

use rand::RngCore;

use crate::curve::{CurvePoint, DomainParams};
use crate::pki::{self, DetachedSignature, Identity, KeyPair};
use crate::suite::{self, Suite};

/// kP by literal repeated addition, k taken directly (no reduction mod n).
pub fn naive_scalar_mul(params: &DomainParams, k: u64, p: &CurvePoint) -> CurvePoint {
    let mut acc = CurvePoint::Infinity;
    for _ in 0..k {
        acc = params
            .point_add(&acc, p)
            .expect("oracle inputs are on the curve");
    }
    acc
}

/// Brute-force discrete log: the unique k in [0, n-1] with kG = target, or
/// `None` if the target is outside the group generated by G.
pub fn discrete_log(params: &DomainParams, target: &CurvePoint) -> Option<u64> {
    let n: u64 = params.n.clone().try_into().ok()?;
    let mut acc = CurvePoint::Infinity;
    for k in 0..n {
        if acc == *target {
            return Some(k);
        }
        acc = params.point_add(&acc, &params.g).ok()?;
    }
    None
}

/// Classical sign-then-encrypt over the same primitives the signcryption
/// uses: an ephemeral ECDH key exchange for the content key, then a detached
/// signature over the plaintext. Exists purely as a cost baseline for the
/// operation-count comparison — it is not part of the protocol.
pub struct SignThenEncrypt {
    pub eph_pub: CurvePoint,
    pub ciphertext: Vec<u8>,
    pub signature: DetachedSignature,
}

pub fn sign_then_encrypt(
    message: &[u8],
    sender: &KeyPair,
    recipient_pk: &CurvePoint,
    params: &DomainParams,
    suite: &'static Suite,
    rng: &mut dyn RngCore,
) -> SignThenEncrypt {
    let eph = params.random_scalar(rng);
    let eph_pub = params.mul_g(eph.value());
    let shared = params
        .scalar_mul(eph.value(), recipient_pk)
        .expect("recipient key is on the curve");
    let (sx, _) = shared.coords().expect("shared secret is not the identity");
    let key = suite::kdf_raw(suite, &params.encode_field(sx), suite.key_len());
    let ciphertext = suite::sym_encrypt(suite, &key, message).expect("key sized by suite");
    let signature = pki::sign_detached(message, &sender.sk, params, suite, rng);
    SignThenEncrypt { eph_pub, ciphertext, signature }
}

pub fn decrypt_then_verify(
    bundle: &SignThenEncrypt,
    recipient: &KeyPair,
    sender_pk: &CurvePoint,
    params: &DomainParams,
    suite: &'static Suite,
) -> Option<Vec<u8>> {
    let shared = params
        .scalar_mul(recipient.sk.value(), &bundle.eph_pub)
        .ok()?;
    let (sx, _) = shared.coords()?;
    let key = suite::kdf_raw(suite, &params.encode_field(sx), suite.key_len());
    let message = suite::sym_decrypt(suite, &key, &bundle.ciphertext).ok()?;
    pki::verify_detached(&message, &bundle.signature, sender_pk, params, suite)
        .then_some(message)
}

/// An `RngCore` that replays a scripted octet queue. Tests use it to force
/// specific ephemeral scalars through rejection sampling; it panics when the
/// script runs dry so a test can never silently consume entropy it did not
/// stage.
pub struct QueueRng {
    queue: std::collections::VecDeque<u8>,
}

impl QueueRng {
    pub fn new(octets: &[u8]) -> Self {
        QueueRng { queue: octets.iter().copied().collect() }
    }
}

impl RngCore for QueueRng {
    fn next_u32(&mut self) -> u32 {
        let mut b = [0u8; 4];
        self.fill_bytes(&mut b);
        u32::from_be_bytes(b)
    }

    fn next_u64(&mut self) -> u64 {
        let mut b = [0u8; 8];
        self.fill_bytes(&mut b);
        u64::from_be_bytes(b)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for d in dest {
            *d = self.queue.pop_front().expect("QueueRng script exhausted");
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

/// Convenience for tests: an identity that is known to parse.
pub fn ident(s: &str) -> Identity {
    Identity::parse(s).expect("test identity parses")
}

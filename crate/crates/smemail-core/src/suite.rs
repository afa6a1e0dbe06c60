//! Pluggable symmetric primitives: hash, KDF, and content cipher.
//!
//! A [`Suite`] bundles one hash with one stream cipher and is addressed by a
//! single identifier octet on the wire. Everything above this module asks the
//! suite for digests and keystreams instead of naming algorithms, so swapping
//! the whole symmetric layer is a one-octet change.

use aes::{Aes128, Aes256};
use ctr::cipher::{KeyIvInit, StreamCipher};
use ctr::Ctr128BE;
use num_bigint::BigUint;
use sha2::{Digest, Sha256, Sha512};
use thiserror::Error;

use crate::curve::{DomainParams, FieldElement, Scalar};
use crate::pki::Identity;

pub const SUITE_ID_SHA256_AES128: u8 = 0x01;
pub const SUITE_ID_SHA512_AES256: u8 = 0x02;

/// Iteration count for the password KDF sealing keystores.
pub const PASSWORD_KDF_ITERATIONS: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum HashKind {
    Sha256,
    Sha512,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CipherKind {
    Aes128Ctr,
    Aes256Ctr,
}

#[derive(Debug)]
pub struct Suite {
    pub id: u8,
    pub name: &'static str,
    hash: HashKind,
    cipher: CipherKind,
}

pub static SUITES: [Suite; 2] = [
    Suite {
        id: SUITE_ID_SHA256_AES128,
        name: "sha256-aes128",
        hash: HashKind::Sha256,
        cipher: CipherKind::Aes128Ctr,
    },
    Suite {
        id: SUITE_ID_SHA512_AES256,
        name: "sha512-aes256",
        hash: HashKind::Sha512,
        cipher: CipherKind::Aes256Ctr,
    },
];

pub fn default_suite() -> &'static Suite {
    &SUITES[0]
}

pub fn suite_by_id(id: u8) -> Option<&'static Suite> {
    SUITES.iter().find(|s| s.id == id)
}

pub fn suite_by_name(name: &str) -> Option<&'static Suite> {
    SUITES.iter().find(|s| s.name == name)
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum SuiteError {
    #[error("wrong key length: expected {expected}, found {found}")]
    WrongKeyLength { expected: usize, found: usize },
    #[error("wrong IV length: expected {expected}, found {found}")]
    WrongIvLength { expected: usize, found: usize },
}

impl Suite {
    pub fn digest_len(&self) -> usize {
        match self.hash {
            HashKind::Sha256 => 32,
            HashKind::Sha512 => 64,
        }
    }

    pub fn key_len(&self) -> usize {
        match self.cipher {
            CipherKind::Aes128Ctr => 16,
            CipherKind::Aes256Ctr => 32,
        }
    }

    pub fn iv_len(&self) -> usize {
        16
    }

    pub fn digest(&self, data: &[u8]) -> Vec<u8> {
        match self.hash {
            HashKind::Sha256 => Sha256::digest(data).to_vec(),
            HashKind::Sha512 => Sha512::digest(data).to_vec(),
        }
    }
}

/// Digest interpreted as a big-endian integer, reduced mod n.
pub fn hash_to_scalar(suite: &Suite, data: &[u8], params: &DomainParams) -> Scalar {
    let d = BigUint::from_bytes_be(&suite.digest(data));
    params.scalar_from(d)
}

/// Counter-mode expansion of a seed into `out_len` octets:
/// block_i = H(seed ‖ i) with a 4-octet big-endian counter starting at 0.
pub fn kdf_raw(suite: &Suite, seed: &[u8], out_len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(out_len);
    let mut counter = 0u32;
    while out.len() < out_len {
        let mut block_in = seed.to_vec();
        block_in.extend_from_slice(&counter.to_be_bytes());
        out.extend_from_slice(&suite.digest(&block_in));
        counter += 1;
    }
    out.truncate(out_len);
    out
}

/// The session-key KDF: H'(x_K ‖ ID_A ‖ y_K ‖ ID_B) with fixed-width
/// coordinates and length-prefixed identities, expanded to `out_len`. Binding
/// both identities into the key is what stops unknown-key-share swaps.
pub fn kdf(
    suite: &Suite,
    params: &DomainParams,
    x_k: &FieldElement,
    id_a: &Identity,
    y_k: &FieldElement,
    id_b: &Identity,
    out_len: usize,
) -> Vec<u8> {
    let mut seed = params.encode_field(x_k);
    seed.extend_from_slice(&id_a.length_prefixed());
    seed.extend_from_slice(&params.encode_field(y_k));
    seed.extend_from_slice(&id_b.length_prefixed());
    kdf_raw(suite, &seed, out_len)
}

/// Password KDF for keystores: each output block is 10,000 chained hash
/// applications seeded with salt ‖ password ‖ counter.
pub fn password_kdf(suite: &Suite, salt: &[u8], password: &[u8], out_len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(out_len);
    let mut counter = 0u32;
    while out.len() < out_len {
        let mut block_in = salt.to_vec();
        block_in.extend_from_slice(password);
        block_in.extend_from_slice(&counter.to_be_bytes());
        let mut d = suite.digest(&block_in);
        for _ in 1..PASSWORD_KDF_ITERATIONS {
            d = suite.digest(&d);
        }
        out.extend_from_slice(&d);
        counter += 1;
    }
    out.truncate(out_len);
    out
}

fn keystream_xor(
    suite: &Suite,
    key: &[u8],
    iv: &[u8],
    data: &[u8],
) -> Result<Vec<u8>, SuiteError> {
    if key.len() != suite.key_len() {
        return Err(SuiteError::WrongKeyLength { expected: suite.key_len(), found: key.len() });
    }
    if iv.len() != suite.iv_len() {
        return Err(SuiteError::WrongIvLength { expected: suite.iv_len(), found: iv.len() });
    }
    let mut buf = data.to_vec();
    match suite.cipher {
        CipherKind::Aes128Ctr => {
            let mut c = Ctr128BE::<Aes128>::new(key.into(), iv.into());
            c.apply_keystream(&mut buf);
        }
        CipherKind::Aes256Ctr => {
            let mut c = Ctr128BE::<Aes256>::new(key.into(), iv.into());
            c.apply_keystream(&mut buf);
        }
    }
    Ok(buf)
}

/// Protocol-mode encryption: CTR with an all-zero IV. Sound *only* because
/// every session key k is derived from a fresh ephemeral point and used for
/// exactly one message. Anything that reuses a key (the keystore does) must
/// go through [`sym_encrypt_iv`] instead.
pub fn sym_encrypt(suite: &Suite, key: &[u8], message: &[u8]) -> Result<Vec<u8>, SuiteError> {
    keystream_xor(suite, key, &vec![0u8; suite.iv_len()], message)
}

pub fn sym_decrypt(suite: &Suite, key: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, SuiteError> {
    keystream_xor(suite, key, &vec![0u8; suite.iv_len()], ciphertext)
}

/// IV-carrying mode for stored data whose key outlives a single message.
pub fn sym_encrypt_iv(
    suite: &Suite,
    key: &[u8],
    iv: &[u8],
    message: &[u8],
) -> Result<Vec<u8>, SuiteError> {
    keystream_xor(suite, key, iv, message)
}

pub fn sym_decrypt_iv(
    suite: &Suite,
    key: &[u8],
    iv: &[u8],
    ciphertext: &[u8],
) -> Result<Vec<u8>, SuiteError> {
    keystream_xor(suite, key, iv, ciphertext)
}

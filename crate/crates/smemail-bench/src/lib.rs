//! Shared fixtures for the benchmark suite.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use smemail_core::curve::{p256, t17, DomainParams};
use smemail_core::pki::{generate_keypair, Identity, KeyPair};
use smemail_core::suite::{default_suite, Suite};

pub struct Fixture {
    pub params: DomainParams,
    pub suite: &'static Suite,
    pub alice: KeyPair,
    pub bob: KeyPair,
    pub ida: Identity,
    pub idb: Identity,
    pub rng: ChaCha20Rng,
}

fn fixture(params: DomainParams, seed: u64) -> Fixture {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let alice = generate_keypair(&params, &mut rng);
    let bob = generate_keypair(&params, &mut rng);
    Fixture {
        params,
        suite: default_suite(),
        alice,
        bob,
        ida: Identity::parse("alice@example.org").unwrap(),
        idb: Identity::parse("bob@example.org").unwrap(),
        rng,
    }
}

/// Desk-scale curve: dominated by protocol overhead, not arithmetic.
pub fn desk() -> Fixture {
    fixture(t17(), 11)
}

/// Strict-mode standard curve: the realistic cost profile.
pub fn strict() -> Fixture {
    fixture(p256(), 12)
}

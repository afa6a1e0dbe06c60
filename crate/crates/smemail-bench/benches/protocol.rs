use criterion::{black_box, criterion_group, criterion_main, Criterion};

use smemail_bench::{desk, strict};
use smemail_core::signcrypt::{signcrypt, unsigncrypt};
use smemail_core::testkit::sign_then_encrypt;
use smemail_core::wire::envelope::{decode_envelope, encode_envelope};

fn scalar_mul(c: &mut Criterion) {
    let mut g = c.benchmark_group("scalar_mul");
    for fx in [desk(), strict()] {
        let k = &fx.alice.sk;
        g.bench_function(fx.params.name.clone(), |b| {
            b.iter(|| fx.params.mul_g(black_box(k.value())))
        });
    }
    g.finish();
}

fn signcryption(c: &mut Criterion) {
    let msg = vec![0x5a; 64];
    let mut g = c.benchmark_group("signcrypt");
    for mut fx in [desk(), strict()] {
        g.bench_function(fx.params.name.clone(), |b| {
            b.iter(|| {
                signcrypt(
                    black_box(&msg),
                    &fx.ida,
                    &fx.alice,
                    &fx.idb,
                    &fx.bob.pk,
                    &fx.params,
                    fx.suite,
                    &mut fx.rng,
                )
                .unwrap()
            })
        });
    }
    g.finish();

    let mut g = c.benchmark_group("unsigncrypt");
    for mut fx in [desk(), strict()] {
        let env =
            signcrypt(&msg, &fx.ida, &fx.alice, &fx.idb, &fx.bob.pk, &fx.params, fx.suite, &mut fx.rng)
                .unwrap();
        g.bench_function(fx.params.name.clone(), |b| {
            b.iter(|| unsigncrypt(black_box(&env), &fx.bob, &fx.alice.pk, &fx.params, fx.suite).unwrap())
        });
    }
    g.finish();

    // the naive construction from the same primitives, for the cost headline
    let mut g = c.benchmark_group("sign_then_encrypt_baseline");
    let mut fx = strict();
    g.bench_function("p256", |b| {
        b.iter(|| sign_then_encrypt(black_box(&msg), &fx.alice, &fx.bob.pk, &fx.params, fx.suite, &mut fx.rng))
    });
    g.finish();
}

fn wire(c: &mut Criterion) {
    let mut fx = strict();
    let msg = vec![0x5a; 64];
    let env = signcrypt(&msg, &fx.ida, &fx.alice, &fx.idb, &fx.bob.pk, &fx.params, fx.suite, &mut fx.rng)
        .unwrap();
    let entity = encode_envelope(&env, &fx.params).unwrap();

    let mut g = c.benchmark_group("wire");
    g.bench_function("encode_envelope", |b| {
        b.iter(|| encode_envelope(black_box(&env), &fx.params).unwrap())
    });
    g.bench_function("decode_envelope", |b| {
        b.iter(|| decode_envelope(black_box(&entity), &fx.params).unwrap())
    });
    g.bench_function("render_mime", |b| b.iter(|| black_box(&entity).render_bytes()));
    g.finish();
}

criterion_group!(benches, scalar_mul, signcryption, wire);
criterion_main!(benches);

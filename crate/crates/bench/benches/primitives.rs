// SPDX-License-Identifier: Apache-2.0

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use verfu_bench::setup;
use verfu_core::algebra::{random_below, seeded_rng};
use verfu_core::commitment::{commit, decommit};
use verfu_core::lhh::lhh_hash;
use verfu_core::paillier::{decrypt, encrypt, encrypt_crt};

fn paillier(c: &mut Criterion) {
    let mut g = c.benchmark_group("paillier");
    for kappa in [256u64, 2048] {
        let s = setup(kappa, 1);
        let pk = &s.params.pk;
        let mut rng = seeded_rng(&[b"paillier-bench"]);
        let m = random_below(&pk.n, &mut rng);
        let ct = encrypt(pk, &m, &mut rng).unwrap();
        g.bench_with_input(BenchmarkId::new("encrypt", kappa), &m, |b, m| {
            b.iter(|| encrypt(pk, black_box(m), &mut rng).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("encrypt_crt", kappa), &m, |b, m| {
            b.iter(|| encrypt_crt(pk, &s.sk, black_box(m), &mut rng).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("decrypt", kappa), &ct, |b, ct| {
            b.iter(|| decrypt(&s.sk, pk, black_box(ct)).unwrap())
        });
    }
    g.finish();
}

fn lhh(c: &mut Criterion) {
    let mut g = c.benchmark_group("lhh_hash");
    g.sample_size(10);
    for dim in [16usize, 256, 1024] {
        let s = setup(256, dim);
        let mut rng = seeded_rng(&[b"lhh-bench"]);
        let q = &s.params.lhh.group.q_order;
        let m: Vec<_> = (0..dim).map(|_| random_below(q, &mut rng)).collect();
        g.bench_with_input(BenchmarkId::from_parameter(dim), &m, |b, m| {
            b.iter(|| lhh_hash(&s.params.lhh, black_box(m)).unwrap())
        });
    }
    g.finish();
}

fn commitment(c: &mut Criterion) {
    let s = setup(256, 1);
    let com = &s.params.com;
    let mut rng = seeded_rng(&[b"com-bench"]);
    let q = &com.group.q_order;
    let (x, r) = (random_below(q, &mut rng), random_below(q, &mut rng));
    let cm = commit(com, &x, &r);
    c.bench_function("commit", |b| b.iter(|| commit(com, black_box(&x), black_box(&r))));
    c.bench_function("decommit", |b| b.iter(|| decommit(com, black_box(&cm), &x, &r)));
}

criterion_group!(benches, paillier, lhh, commitment);
criterion_main!(benches);

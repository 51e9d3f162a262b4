// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};

use verfu_bench::two_round_world;
use verfu_core::protocol::{run_round, EngineOptions};

fn unlearning_round(c: &mut Criterion) {
    let mut g = c.benchmark_group("unlearning_round");
    g.sample_size(10);
    for dim in [16usize, 64] {
        let (mut world, [first, second]) = two_round_world(256, dim, 4);
        let grads: BTreeMap<u32, Vec<f64>> = first.cohort.iter().map(|&i| (i, vec![0.25; dim])).collect();
        run_round(&mut world, &first, &grads, &EngineOptions::default()).unwrap();
        let normals: BTreeMap<u32, Vec<f64>> = grads.into_iter().filter(|(i, _)| *i != 0).collect();
        g.bench_function(BenchmarkId::from_parameter(dim), |b| {
            b.iter_batched(
                || world.clone(),
                |mut w| run_round(&mut w, &second, &normals, &EngineOptions::default()).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, unlearning_round);
criterion_main!(benches);

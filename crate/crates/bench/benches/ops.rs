use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sizeset::{Options, StructureKind, ThreadId};

const KEYS: i64 = 2_048;

fn single_thread_ops(c: &mut Criterion) {
    let t = ThreadId::new(0);
    let mut group = c.benchmark_group("ops");
    for kind in [
        StructureKind::Hash,
        StructureKind::HarrisHash,
        StructureKind::List,
        StructureKind::HarrisList,
    ] {
        let set = kind.build(Options::new(1).expected_elements(KEYS as usize)).unwrap();
        for k in (0..KEYS).rev().step_by(2) {
            set.insert(t, k);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        group.bench_function(BenchmarkId::new("insert-delete", kind.name()), |b| {
            b.iter(|| {
                let k = rng.random_range(0..KEYS);
                if set.insert(t, k) {
                    set.delete(t, k);
                }
            })
        });
        group.bench_function(BenchmarkId::new("contains", kind.name()), |b| {
            b.iter(|| black_box(set.contains(t, rng.random_range(0..KEYS))))
        });
    }
    group.finish();
}

criterion_group!(benches, single_thread_ops);
criterion_main!(benches);

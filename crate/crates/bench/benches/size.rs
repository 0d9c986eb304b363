use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sizeset::{ConcurrentSet, Options, StructureKind, ThreadId};

fn filled(kind: StructureKind, n: i64) -> Box<dyn ConcurrentSet> {
    let set = kind.build(Options::new(8).expected_elements(n as usize)).unwrap();
    // Descending keys keep the list fill linear.
    for k in (0..n).rev() {
        set.insert(ThreadId::new(0), k);
    }
    set
}

fn size_vs_elements(c: &mut Criterion) {
    let mut group = c.benchmark_group("size");
    for kind in [StructureKind::List, StructureKind::Hash, StructureKind::HarrisHash] {
        for n in [1_000, 100_000] {
            let set = filled(kind, n);
            group.bench_with_input(BenchmarkId::new(kind.name(), n), &set, |b, set| {
                b.iter(|| black_box(set.size(ThreadId::new(1))))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, size_vs_elements);
criterion_main!(benches);

//! Criterion benchmarks for the sizeset crates; see `benches/`.

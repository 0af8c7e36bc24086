//! Criterion benchmarks for the primitives and protocols; see `benches/`.

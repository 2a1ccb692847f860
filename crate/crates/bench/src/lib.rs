//! Criterion benchmarks for the interlacement crate; see `benches/`.

//! Criterion benchmarks for the selection pipeline live in `benches/`.

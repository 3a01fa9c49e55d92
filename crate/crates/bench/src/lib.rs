//! Criterion benchmarks for the Monte-Carlo hot paths live in `benches/`.

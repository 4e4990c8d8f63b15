//! Criterion benchmarks for `hricat-core` live under `benches/`.

//! Criterion benchmarks for the radstab hot paths; see `benches/`.

//! Criterion benchmarks for `mqplab-core`; see `benches/`.

//! Criterion benchmarks for assembly and the extremal solver live under `benches/`.

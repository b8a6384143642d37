//! Criterion benchmarks for the simulators and the mean recursions; see
//! `benches/`.

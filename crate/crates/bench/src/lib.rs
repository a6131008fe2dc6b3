//! Benchmarks for benchcert kernels live in `benches/`.

//! Benchmark harness crate. The benchmarks live in `benches/kernels.rs`.

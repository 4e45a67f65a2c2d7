//! Benchmarks for the decontext pipeline live in `benches/`.
//!
//! Run with `cargo bench -p decontext-bench`.

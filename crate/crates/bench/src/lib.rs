//! Benchmarks for rvr-core live in `benches/`; this crate has no library code.

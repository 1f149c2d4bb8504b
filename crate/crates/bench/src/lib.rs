//! Benchmark-only crate; see `benches/pooling.rs`. The `gcpool bench`
//! subcommand runs the median-of-ten scaling sweep instead.

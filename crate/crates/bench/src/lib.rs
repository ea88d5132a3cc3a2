//! Benchmarks for the opal toolkit live in `benches/opal.rs`.

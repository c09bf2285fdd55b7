//! Benchmark-only crate; see `benches/flows.rs`. Run with
//! `cargo bench -p roughflow-bench`.

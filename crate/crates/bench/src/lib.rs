//! Criterion benchmarks for the GP engine, the optimizer portfolio and a small
//! campaign. Run with `cargo bench -p caai-bench`.

//! Criterion benchmarks for the forecasting substrate live in `benches/`.

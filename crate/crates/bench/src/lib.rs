//! Benchmarks for the sampler and post-processing live under `benches/`.

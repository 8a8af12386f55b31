//! Benchmark-only crate; see `benches/pipeline.rs` for the measured paths:
//! dense symmetric eigendecomposition, Gaussian sampling plus empirical
//! covariance assembly, the per-replication excess-risk pipeline, and the
//! closed-form bound evaluations.

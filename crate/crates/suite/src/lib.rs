//! Acceptance suite for `mlnt`.
//!
//! Everything lives in `tests/acceptance.rs`. The package sorts after
//! `mlnt-core`, so `cargo test --workspace` runs the long report after every
//! unit and integration test has finished.

//! Acceptance suite for `tgode-core`; everything lives in `tests/acceptance.rs`.

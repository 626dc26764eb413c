//! Acceptance checks for kneadforge. Everything lives in `tests/acceptance.rs`;
//! run it with `cargo test -p kneadforge-validation`.

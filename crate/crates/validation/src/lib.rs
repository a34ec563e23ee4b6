//! Holds the workspace acceptance suite in `tests/acceptance.rs`; it sits in
//! its own package so it runs after every other test target.

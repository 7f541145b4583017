//! Benchmark suites, cassette authoring and the run-controller service.

pub mod author;
pub mod bench;
pub mod config;
pub mod service;

//! Test support shared by the integration suites.
#![allow(dead_code)]

pub mod gen;
pub mod oracle;

use mcfl::verifier::VerifierConfig;
use std::path::PathBuf;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn sample(name: &str) -> PathBuf {
    workspace_root().join("samples").join(name)
}

pub fn benchmarks_dir() -> PathBuf {
    workspace_root().join("benchmarks")
}

pub fn config(nondet: (i64, i64)) -> VerifierConfig {
    VerifierConfig { nondet_domain: nondet, max_states: 2_000_000, ..VerifierConfig::default() }
}

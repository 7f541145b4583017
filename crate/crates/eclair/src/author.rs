//! Authoring of the shipped cassettes: every suite runs once in record mode
//! against the scripted fixture oracle, so replaying the cassettes offline
//! reproduces those runs exactly.

use crate::bench::{run_suite, BenchError, Suite};
use crate::config::{Config, DEFAULT_SEED};
use eclair_core::fm::{BackendKind, Provider};
use eclair_core::oracle::{Oracle, OracleMode};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Faithful oracle answers for every suite.
pub const ORACLE_CASSETTE: &str = "oracle.jsonl";
/// Execution answers from an oracle that never performs a workflow's last step.
pub const OMIT_FINAL_CASSETTE: &str = "oracle-omit-final.jsonl";

/// The cassettes and configs checked into this crate.
pub fn shipped_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).to_path_buf()
}

pub fn shipped_cassette(name: &str) -> PathBuf {
    shipped_dir().join("cassettes").join(name)
}

pub fn shipped_config(name: &str) -> PathBuf {
    shipped_dir().join("configs").join(name)
}

fn record(cassette: &Path, suites: &[Suite], oracle: &Oracle, scratch: &Path) -> Result<(), BenchError> {
    if cassette.exists() {
        std::fs::remove_file(cassette).map_err(|source| BenchError::Io {
            path: cassette.to_path_buf(),
            source,
        })?;
    }
    let mut config = Config::replay(cassette);
    config.fm.backend = BackendKind::Record;
    let provider: Arc<dyn Provider> = Arc::new(oracle.provider());
    for &suite in suites {
        run_suite(suite, &config, DEFAULT_SEED, &scratch.join(suite.as_str()), Some(provider.clone()))?;
    }
    Ok(())
}

/// Writes both cassettes into `dir`, replacing existing ones.
pub fn author_cassettes(dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    std::fs::create_dir_all(dir).map_err(|source| BenchError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let scratch = dir.join(".authoring");
    let faithful = dir.join(ORACLE_CASSETTE);
    record(
        &faithful,
        &[Suite::Validate, Suite::Grounding, Suite::Demonstrate, Suite::Execute],
        &Oracle::fixtures(OracleMode::Faithful),
        &scratch,
    )?;
    let omit = dir.join(OMIT_FINAL_CASSETTE);
    record(&omit, &[Suite::Execute], &Oracle::fixtures(OracleMode::OmitFinal), &scratch)?;
    std::fs::remove_dir_all(&scratch).map_err(|source| BenchError::Io { path: scratch, source })?;
    Ok(vec![faithful, omit])
}

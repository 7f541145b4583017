//! Deterministic GUI simulator.
//!
//! A [`SiteSpec`] declares pages, elements and transition rules; [`SimEnv`]
//! executes actions against it and renders each observation to a PNG with the
//! built-in bitmap font. The [`Environment`] trait is the seam a live browser
//! adapter would implement.

mod env;
pub mod fixtures;
mod render;
mod spec;

pub use env::{oracle_trace, oracle_trace_complete, record_demonstration, SimEnv};
pub use render::render_state;
pub use spec::{
    Effect, ElementTarget, ElementTemplate, Flag, GoalCondition, Guard, OracleStep, PageSpec,
    SetValue, SiteSpec, SpecError, TransitionRule, Trigger, WorkflowSpec,
};

use crate::model::{Action, State};
use std::sync::Arc;

/// A state together with the PNG its `screenshot_ref` names.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub state: State,
    pub screenshot: Arc<Vec<u8>>,
}

/// An action that had no effect. The environment is unchanged.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{reason}")]
pub struct ActuationFault {
    pub reason: String,
}

impl ActuationFault {
    pub fn new(reason: impl Into<String>) -> Self {
        Self {
            reason: reason.into(),
        }
    }
}

pub trait Environment: Send {
    /// Identifier of the site or application under control.
    fn environment_id(&self) -> &str;
    fn observe(&mut self) -> Observation;
    fn apply(&mut self, action: &Action) -> Result<Observation, ActuationFault>;
    /// Ground-truth goal check, where the environment has one.
    fn goal_reached(&self, _workflow_id: &str) -> Option<bool> {
        None
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("unknown workflow {0:?}")]
    UnknownWorkflow(String),
    #[error("unknown site {0:?}")]
    UnknownSite(String),
}

/// Loads a site from a `site.yaml` file or a directory containing one.
pub fn load_site(path: &std::path::Path) -> Result<SimEnv, SimError> {
    let file = if path.is_dir() {
        path.join("site.yaml")
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&file).map_err(|e| SpecError {
        location: file.display().to_string(),
        message: e.to_string(),
    })?;
    let spec = SiteSpec::from_yaml(&text)?;
    Ok(SimEnv::new(Arc::new(spec)))
}

/// Resolves an environment reference: a shipped fixture name or a path.
pub fn resolve_site(reference: &str) -> Result<Arc<SiteSpec>, SimError> {
    if let Some(spec) = fixtures::site(reference) {
        return Ok(spec);
    }
    let path = std::path::Path::new(reference);
    if path.exists() {
        return Ok(load_site(path)?.spec().clone());
    }
    Err(SimError::UnknownSite(reference.to_string()))
}

use super::events::ElementInfo;
use crate::ground::GroundStrategy;
use crate::model::{ActionKind, ElementRole, Sop};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Action budget when a run has no SOP.
pub const NO_SOP_BUDGET: usize = 25;

/// Actions that must be approved by a person before they run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhitelistEntry {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<ElementRole>,
    /// Case-insensitive glob over the element label; `*` matches any run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_pattern: Option<String>,
}

fn glob(pattern: &str, text: &str) -> bool {
    let (p, t): (Vec<char>, Vec<char>) = (
        pattern.to_lowercase().chars().collect(),
        text.to_lowercase().chars().collect(),
    );
    // dp[j]: pattern prefix matches text prefix of length j.
    let mut dp = vec![false; t.len() + 1];
    dp[0] = true;
    for &pc in &p {
        let mut next = vec![false; t.len() + 1];
        if pc == '*' {
            let mut any = false;
            for j in 0..=t.len() {
                any |= dp[j];
                next[j] = any;
            }
        } else {
            for j in 1..=t.len() {
                next[j] = dp[j - 1] && t[j - 1] == pc;
            }
        }
        dp = next;
    }
    dp[t.len()]
}

impl WhitelistEntry {
    pub fn matches(&self, kind: ActionKind, element: Option<&ElementInfo>) -> bool {
        if kind != self.kind {
            return false;
        }
        if self.role.is_none() && self.label_pattern.is_none() {
            return true;
        }
        let Some(e) = element else {
            return false;
        };
        self.role.is_none_or(|r| r == e.role)
            && self.label_pattern.as_deref().is_none_or(|p| glob(p, &e.label))
    }
}

pub fn whitelisted(list: &[WhitelistEntry], kind: ActionKind, element: Option<&ElementInfo>) -> bool {
    list.iter().any(|w| w.matches(kind, element))
}

#[derive(Debug, thiserror::Error)]
pub enum WhitelistError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

/// Reads a JSON array of whitelist entries.
pub fn load_whitelist(path: &Path) -> Result<Vec<WhitelistEntry>, WhitelistError> {
    let err = |message: String| WhitelistError::Invalid {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunPolicy {
    /// Defaults to twice the SOP length plus five, or [`NO_SOP_BUDGET`].
    pub max_actions: Option<usize>,
    pub strategy: GroundStrategy,
    pub whitelist: Vec<WhitelistEntry>,
    /// Waiting longer than this for a decision aborts the run. No limit by default.
    pub decision_timeout_ms: Option<u64>,
    /// Deterministic actuation check after every action.
    pub step_checks: bool,
}

impl Default for RunPolicy {
    fn default() -> Self {
        Self {
            max_actions: None,
            strategy: GroundStrategy::Som,
            whitelist: Vec::new(),
            decision_timeout_ms: None,
            step_checks: true,
        }
    }
}

impl RunPolicy {
    pub fn budget(&self, sop: Option<&Sop>) -> usize {
        self.max_actions
            .unwrap_or_else(|| sop.map_or(NO_SOP_BUDGET, |s| 2 * s.len() + 5))
    }

    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if self.max_actions == Some(0) {
            out.push(("policy.max_actions".into(), "must be at least 1".into()));
        }
        out
    }
}

use super::keyframes::{extract_keyframes, Keyframe, DEFAULT_SETTLE_MS};
use crate::fm::{FmRequest, Image};
use crate::model::{Action, DemonstrationBundle};
use crate::prompts;
use crate::sim::SiteSpec;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

/// How much of a demonstration the model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DemoMode {
    /// Workflow description only.
    #[serde(rename = "wd")]
    Wd,
    /// Description plus keyframe screenshots.
    #[serde(rename = "wd+kf")]
    WdKf,
    /// Description, keyframes and the textual action log.
    #[serde(rename = "wd+kf+act")]
    WdKfAct,
}

impl DemoMode {
    pub const ALL: [DemoMode; 3] = [DemoMode::Wd, DemoMode::WdKf, DemoMode::WdKfAct];

    pub fn as_str(&self) -> &'static str {
        match self {
            DemoMode::Wd => "wd",
            DemoMode::WdKf => "wd+kf",
            DemoMode::WdKfAct => "wd+kf+act",
        }
    }

    /// Row label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            DemoMode::Wd => "WD",
            DemoMode::WdKf => "WD+KF",
            DemoMode::WdKfAct => "WD+KF+ACT",
        }
    }
}

impl fmt::Display for DemoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DemoMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        DemoMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s) || m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown mode {s:?}; expected wd, wd+kf or wd+kf+act"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextOptions {
    pub settle_ms: u64,
    /// Display labels for element ids in the action log.
    pub labels: HashMap<String, String>,
}

impl Default for ContextOptions {
    fn default() -> Self {
        Self {
            settle_ms: DEFAULT_SETTLE_MS,
            labels: HashMap::new(),
        }
    }
}

impl ContextOptions {
    /// Labels every element of a site by id.
    pub fn with_site_labels(mut self, spec: &SiteSpec) -> Self {
        for page in spec.pages.values() {
            for e in &page.elements {
                self.labels.insert(e.id.clone(), e.label.clone());
            }
        }
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error("mode {0} needs keyframes but the bundle has no frames")]
    MissingKeyframes(DemoMode),
    #[error(transparent)]
    Fm(#[from] crate::fm::FmError),
    #[error("model output is not an SOP: {0}")]
    SopParse(#[from] crate::model::SopError),
}

/// One action-log line: ordinal, kind, target label, payload.
pub fn action_line(ordinal: usize, a: &Action, labels: &HashMap<String, String>) -> String {
    let mut line = format!("Action {ordinal}: {}", a.kind);
    if let Some(t) = &a.target {
        let label = labels.get(t).map(String::as_str).unwrap_or(t);
        line.push_str(&format!(" \"{label}\""));
    } else if let Some(p) = a.coordinates {
        line.push_str(&format!(" at ({:.0},{:.0})", p.x, p.y));
    }
    if let Some(t) = &a.text {
        line.push_str(&format!(" text=\"{t}\""));
    }
    if let Some(arg) = &a.direction_or_url {
        line.push_str(&format!(" {arg}"));
    }
    line
}

/// Builds the SOP-generation request for a demonstration.
pub fn build_demo_context(
    bundle: &DemonstrationBundle,
    mode: DemoMode,
    options: &ContextOptions,
) -> Result<FmRequest, DemoError> {
    let keyframes: Vec<Keyframe> = match mode {
        DemoMode::Wd => Vec::new(),
        _ => extract_keyframes(&bundle.frames, &bundle.action_log, options.settle_ms)
            .map_err(|_| DemoError::MissingKeyframes(mode))?,
    };
    let mut context = String::new();
    if !keyframes.is_empty() {
        context.push_str("\nRecording of a person performing the task:\n");
        let mut next_event = 0;
        for (i, k) in keyframes.iter().enumerate() {
            if mode == DemoMode::WdKfAct {
                while next_event < bundle.action_log.len()
                    && bundle.action_log[next_event].ts_ms < k.ts_ms
                {
                    let line = action_line(next_event + 1, &bundle.action_log[next_event], &options.labels);
                    context.push_str(&line);
                    context.push('\n');
                    next_event += 1;
                }
            }
            context.push_str(&format!("[Screenshot {}]\n", i + 1));
        }
        if mode == DemoMode::WdKfAct {
            for (i, a) in bundle.action_log.iter().enumerate().skip(next_event) {
                context.push_str(&action_line(i + 1, a, &options.labels));
                context.push('\n');
            }
        }
    }
    let text = prompts::DEMONSTRATE_SOP.fill(&[
        ("description", &bundle.workflow.description),
        ("context", &context),
    ]);
    let images = keyframes
        .iter()
        .enumerate()
        .map(|(i, k)| {
            Image::new(
                format!("keyframe_{:02}.png", i + 1),
                bundle.frames[k.frame].png.clone(),
            )
        })
        .collect();
    Ok(FmRequest::new(format!("demonstrate.sop.{}", mode.as_str()))
        .system(prompts::DEMONSTRATE_SYSTEM.text)
        .user(text, images))
}

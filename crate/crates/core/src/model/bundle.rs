//! On-disk demonstration bundles.
//!
//! ```text
//! <bundle>/
//!   meta.json        {"id", "description", "env", "frame_ts_ms": [..]}
//!   frames/0000.png  ordered recording frames
//!   actions.jsonl    one Action per line
//!   sop.md           optional reference SOP
//! ```

use super::{parse_sop, Action, Sop, Workflow};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Milliseconds between frames when `meta.json` omits `frame_ts_ms`.
pub const DEFAULT_FRAME_INTERVAL_MS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub ts_ms: u64,
    pub png: Vec<u8>,
}

/// A recorded human demonstration of one workflow.
#[derive(Debug, Clone, PartialEq)]
pub struct DemonstrationBundle {
    pub workflow: Workflow,
    /// Recording frames in time order.
    pub frames: Vec<Frame>,
    pub action_log: Vec<Action>,
    pub sop: Option<Sop>,
}

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("missing file {0}")]
    MissingFile(String),
    #[error("schema violation in {file}:{line}: {message}")]
    SchemaViolation {
        file: String,
        line: usize,
        message: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Serialize, Deserialize)]
struct Meta {
    #[serde(flatten)]
    workflow: Workflow,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame_ts_ms: Option<Vec<u64>>,
}

impl DemonstrationBundle {
    pub fn recording_span(&self) -> Option<(u64, u64)> {
        Some((self.frames.first()?.ts_ms, self.frames.last()?.ts_ms))
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = self.workflow.problems();
        if self.frames.is_empty() {
            out.push("bundle has no frames".into());
        }
        if self.frames.windows(2).any(|w| w[1].ts_ms < w[0].ts_ms) {
            out.push("frame timestamps decrease".into());
        }
        if let Some((start, end)) = self.recording_span() {
            for (i, a) in self.action_log.iter().enumerate() {
                if a.ts_ms < start || a.ts_ms > end {
                    out.push(format!(
                        "action {i} at {} ms lies outside the recording [{start}, {end}]",
                        a.ts_ms
                    ));
                }
            }
        }
        out
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_required(dir: &Path, name: &str) -> Result<String, BundleError> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(BundleError::MissingFile(name.to_string()));
    }
    std::fs::read_to_string(&path).map_err(io_err(&path))
}

pub fn read_bundle(dir: &Path) -> Result<DemonstrationBundle, BundleError> {
    let meta_text = read_required(dir, "meta.json")?;
    let meta: Meta =
        serde_json::from_str(&meta_text).map_err(|e| BundleError::SchemaViolation {
            file: "meta.json".into(),
            line: e.line(),
            message: e.to_string(),
        })?;
    let actions_text = read_required(dir, "actions.jsonl")?;
    let mut action_log = Vec::new();
    for (n, line) in actions_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let violation = |message: String| BundleError::SchemaViolation {
            file: "actions.jsonl".into(),
            line: n + 1,
            message,
        };
        let action: Action = serde_json::from_str(line).map_err(|e| violation(e.to_string()))?;
        if let Some(p) = action.problems().into_iter().next() {
            return Err(violation(p));
        }
        action_log.push(action);
    }

    let frames_dir = dir.join("frames");
    if !frames_dir.is_dir() {
        return Err(BundleError::MissingFile("frames/".into()));
    }
    let mut names: Vec<String> = std::fs::read_dir(&frames_dir)
        .map_err(io_err(&frames_dir))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".png"))
        .collect();
    names.sort();
    if let Some(ts) = &meta.frame_ts_ms {
        if ts.len() != names.len() {
            return Err(BundleError::SchemaViolation {
                file: "meta.json".into(),
                line: 1,
                message: format!(
                    "frame_ts_ms has {} entries for {} frames",
                    ts.len(),
                    names.len()
                ),
            });
        }
    }
    let mut frames = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let path = frames_dir.join(name);
        let png = std::fs::read(&path).map_err(io_err(&path))?;
        let ts_ms = meta
            .frame_ts_ms
            .as_ref()
            .map(|t| t[i])
            .unwrap_or(i as u64 * DEFAULT_FRAME_INTERVAL_MS);
        frames.push(Frame { ts_ms, png });
    }

    let sop_path = dir.join("sop.md");
    let sop = if sop_path.exists() {
        let text = std::fs::read_to_string(&sop_path).map_err(io_err(&sop_path))?;
        Some(parse_sop(&text).map_err(|e| BundleError::SchemaViolation {
            file: "sop.md".into(),
            line: 1,
            message: e.to_string(),
        })?)
    } else {
        None
    };

    let bundle = DemonstrationBundle {
        workflow: meta.workflow,
        frames,
        action_log,
        sop,
    };
    if let Some(p) = bundle.problems().into_iter().next() {
        return Err(BundleError::SchemaViolation {
            file: "meta.json".into(),
            line: 1,
            message: p,
        });
    }
    Ok(bundle)
}

pub fn write_bundle(bundle: &DemonstrationBundle, dir: &Path) -> Result<(), BundleError> {
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(io_err(&frames_dir))?;
    let meta = Meta {
        workflow: bundle.workflow.clone(),
        frame_ts_ms: Some(bundle.frames.iter().map(|f| f.ts_ms).collect()),
    };
    let meta_path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    std::fs::write(&meta_path, text + "\n").map_err(io_err(&meta_path))?;
    for (i, f) in bundle.frames.iter().enumerate() {
        let path = frames_dir.join(format!("{i:04}.png"));
        std::fs::write(&path, &f.png).map_err(io_err(&path))?;
    }
    let mut actions = String::new();
    for a in &bundle.action_log {
        actions.push_str(&serde_json::to_string(a).expect("action serializes"));
        actions.push('\n');
    }
    let actions_path = dir.join("actions.jsonl");
    std::fs::write(&actions_path, actions).map_err(io_err(&actions_path))?;
    if let Some(sop) = &bundle.sop {
        let path = dir.join("sop.md");
        std::fs::write(&path, sop.to_markdown()).map_err(io_err(&path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle() -> DemonstrationBundle {
        DemonstrationBundle {
            workflow: Workflow::new("w1", "Log in", "login_flow"),
            frames: (0..3)
                .map(|i| Frame {
                    ts_ms: i * 500,
                    png: vec![i as u8; 4],
                })
                .collect(),
            action_log: vec![
                Action::click_element("username").at(200),
                Action::type_text("alice").at(700),
            ],
            sop: Some(parse_sop("1. Click the username field\n2. Type alice").unwrap()),
        }
    }

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle();
        write_bundle(&b, dir.path()).unwrap();
        assert_eq!(read_bundle(dir.path()).unwrap(), b);
    }

    #[test]
    fn missing_actions() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&bundle(), dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("actions.jsonl")).unwrap();
        match read_bundle(dir.path()) {
            Err(BundleError::MissingFile(f)) => assert_eq!(f, "actions.jsonl"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn type_without_text_is_a_schema_violation() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&bundle(), dir.path()).unwrap();
        std::fs::write(
            dir.path().join("actions.jsonl"),
            "{\"kind\":\"click\",\"target\":\"a\",\"ts_ms\":1}\n{\"kind\":\"type\",\"ts_ms\":2}\n",
        )
        .unwrap();
        match read_bundle(dir.path()) {
            Err(BundleError::SchemaViolation { file, line, .. }) => {
                assert_eq!(file, "actions.jsonl");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

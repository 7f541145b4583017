use super::events::Event;
use super::suggest::ActionSuggestion;
use super::RunSummary;
use crate::model::{write_trace, State, Trace, TraceItem};
use serde::Serialize;
use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

pub const TRACE_FILE: &str = "trace.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SUGGESTIONS_FILE: &str = "suggestions.jsonl";
pub const RESULT_FILE: &str = "result.json";

/// Writes a run directory as the run progresses:
/// `trace.jsonl`, `screenshots/`, `suggestions.jsonl`, `events.jsonl`, `result.json`.
pub struct RunDir {
    root: PathBuf,
    trace: File,
    suggestions: File,
    events: File,
    written: HashSet<String>,
}

fn append(path: &Path) -> io::Result<File> {
    OpenOptions::new().create(true).write(true).truncate(true).open(path)
}

fn line<T: Serialize>(f: &mut File, value: &T) -> io::Result<()> {
    let mut s = serde_json::to_string(value).map_err(io::Error::other)?;
    s.push('\n');
    f.write_all(s.as_bytes())?;
    f.flush()
}

impl RunDir {
    pub fn create(root: &Path, workflow_id: &str) -> io::Result<Self> {
        fs::create_dir_all(root.join("screenshots"))?;
        let mut trace = append(&root.join(TRACE_FILE))?;
        write_trace(
            &Trace {
                workflow_id: workflow_id.to_string(),
                items: Vec::new(),
            },
            &mut trace,
        )?;
        Ok(Self {
            root: root.to_path_buf(),
            trace,
            suggestions: append(&root.join(SUGGESTIONS_FILE))?,
            events: append(&root.join(EVENTS_FILE))?,
            written: HashSet::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn trace_item(&mut self, item: &TraceItem) -> io::Result<()> {
        line(&mut self.trace, item)
    }

    pub fn screenshot(&mut self, state: &State, png: &[u8]) -> io::Result<()> {
        if self.written.insert(state.screenshot_ref.clone()) {
            let path = self.root.join(&state.screenshot_ref);
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, png)?;
        }
        Ok(())
    }

    pub fn suggestion(&mut self, action_index: usize, s: &ActionSuggestion) -> io::Result<()> {
        #[derive(Serialize)]
        struct Rec<'a> {
            action_index: usize,
            #[serde(flatten)]
            suggestion: &'a ActionSuggestion,
        }
        line(&mut self.suggestions, &Rec { action_index, suggestion: s })
    }

    pub fn event(&mut self, e: &Event) -> io::Result<()> {
        line(&mut self.events, e)
    }

    pub fn result(&mut self, summary: &RunSummary) -> io::Result<()> {
        let text = serde_json::to_string_pretty(summary).map_err(io::Error::other)?;
        fs::write(self.root.join(RESULT_FILE), text + "\n")
    }
}

/// Reads `events.jsonl`, skipping a torn final line.
pub fn read_events(path: &Path) -> io::Result<Vec<Event>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for l in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str(l) {
            Ok(e) => out.push(e),
            Err(_) => break,
        }
    }
    Ok(out)
}

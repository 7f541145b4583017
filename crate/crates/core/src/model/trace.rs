use super::{Action, State};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

/// Alternating record of observations and actions: `s, a, s, a, ..., s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub workflow_id: String,
    pub items: Vec<TraceItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TraceItem {
    State(State),
    Action(Action),
}

impl TraceItem {
    pub fn ts_ms(&self) -> u64 {
        match self {
            TraceItem::State(s) => s.ts_ms,
            TraceItem::Action(a) => a.ts_ms,
        }
    }
}

impl Trace {
    pub fn new(workflow_id: impl Into<String>, initial: State) -> Self {
        Self {
            workflow_id: workflow_id.into(),
            items: vec![TraceItem::State(initial)],
        }
    }

    pub fn push(&mut self, action: Action, state: State) {
        self.items.push(TraceItem::Action(action));
        self.items.push(TraceItem::State(state));
    }

    pub fn states(&self) -> impl Iterator<Item = &State> {
        self.items.iter().filter_map(|i| match i {
            TraceItem::State(s) => Some(s),
            _ => None,
        })
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.items.iter().filter_map(|i| match i {
            TraceItem::Action(a) => Some(a),
            _ => None,
        })
    }

    pub fn state_count(&self) -> usize {
        self.states().count()
    }

    pub fn action_count(&self) -> usize {
        self.actions().count()
    }

    pub fn last_state(&self) -> Option<&State> {
        self.states().last()
    }

    /// `(s, a, s')` triples in order. Only meaningful for well-formed traces.
    pub fn steps(&self) -> Vec<(&State, &Action, &State)> {
        self.items
            .windows(3)
            .step_by(2)
            .filter_map(|w| match w {
                [TraceItem::State(s), TraceItem::Action(a), TraceItem::State(s2)] => {
                    Some((s, a, s2))
                }
                _ => None,
            })
            .collect()
    }

    /// Prefix holding the first `k` states (and the `k - 1` actions between them).
    pub fn truncated(&self, k: usize) -> Trace {
        let len = (2 * k).saturating_sub(1).min(self.items.len());
        Trace {
            workflow_id: self.workflow_id.clone(),
            items: self.items[..len].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Empty,
    Alternation,
    EndsWithAction,
    TimestampOrder,
    MalformedAction,
    MalformedState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub index: usize,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at index {}", self.message, self.index)
    }
}

/// Every violated structural invariant of `trace`; empty iff well-formed.
pub fn validate_trace(trace: &Trace) -> Vec<Violation> {
    let mut out = Vec::new();
    let items = &trace.items;
    if items.is_empty() {
        out.push(Violation {
            kind: ViolationKind::Empty,
            index: 0,
            message: "trace has no items".into(),
        });
        return out;
    }
    for (i, item) in items.iter().enumerate() {
        match (i % 2, item) {
            (0, TraceItem::Action(_)) => out.push(Violation {
                kind: ViolationKind::Alternation,
                index: i,
                message: "expected State, found Action".into(),
            }),
            (1, TraceItem::State(_)) => out.push(Violation {
                kind: ViolationKind::Alternation,
                index: i,
                message: "expected Action, found State".into(),
            }),
            _ => {}
        }
        match item {
            TraceItem::Action(a) => {
                for p in a.problems() {
                    out.push(Violation {
                        kind: ViolationKind::MalformedAction,
                        index: i,
                        message: p,
                    });
                }
            }
            TraceItem::State(s) => {
                for p in s.problems() {
                    out.push(Violation {
                        kind: ViolationKind::MalformedState,
                        index: i,
                        message: p,
                    });
                }
            }
        }
        if i > 0 && item.ts_ms() < items[i - 1].ts_ms() {
            out.push(Violation {
                kind: ViolationKind::TimestampOrder,
                index: i,
                message: format!(
                    "timestamp {} precedes previous {}",
                    item.ts_ms(),
                    items[i - 1].ts_ms()
                ),
            });
        }
    }
    if let Some(TraceItem::Action(_)) = items.last() {
        out.push(Violation {
            kind: ViolationKind::EndsWithAction,
            index: items.len() - 1,
            message: format!("ends with Action at index {}", items.len() - 1),
        });
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record {
    Header { workflow_id: String },
    State(State),
    Action(Action),
}

/// Writes the line-delimited trace format: a header line, then one record per item.
pub fn write_trace(trace: &Trace, mut w: impl Write) -> std::io::Result<()> {
    let header = Record::Header {
        workflow_id: trace.workflow_id.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for item in &trace.items {
        writeln!(w, "{}", serde_json::to_string(item)?)?;
    }
    Ok(())
}

pub fn read_trace(r: impl BufRead, path_for_errors: &str) -> Result<Trace, TraceError> {
    let mut trace = Trace {
        workflow_id: String::new(),
        items: Vec::new(),
    };
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|source| TraceError::Io {
            path: path_for_errors.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
            path: path_for_errors.to_string(),
            line: n + 1,
            message: e.to_string(),
        })?;
        match rec {
            Record::Header { workflow_id } => trace.workflow_id = workflow_id,
            Record::State(s) => trace.items.push(TraceItem::State(s)),
            Record::Action(a) => trace.items.push(TraceItem::Action(a)),
        }
    }
    Ok(trace)
}

impl Trace {
    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        write_trace(self, &mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn from_jsonl(s: &str) -> Result<Trace, TraceError> {
        read_trace(s.as_bytes(), "<memory>")
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        std::fs::write(path, self.to_jsonl()).map_err(|source| TraceError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Trace, TraceError> {
        let f = std::fs::File::open(path).map_err(|source| TraceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        read_trace(std::io::BufReader::new(f), &path.display().to_string())
    }
}

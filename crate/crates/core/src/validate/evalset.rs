use super::checks::{
    check_actuation, check_completion, check_constraint, check_trajectory, Judge, Judgment, Subject,
    ValidateError,
};
use super::negatives::EvalItem;
use super::Constraint;
use crate::model::{parse_sop, score_binary, BinaryReport, LabeledPrediction, Screenshots, Trace};
use crate::sim::resolve_site;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

pub const EVALSET_FILE: &str = "evalset.jsonl";

/// Line of `evalset.jsonl`; the trace lives at `trace_ref`, relative to the set's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub task: Subject,
    pub trace_ref: String,
    pub label: bool,
    pub provenance: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sop: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalsetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("item {id}: {message}")]
    Item { id: String, message: String },
    #[error("evaluation set is empty")]
    Empty,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> EvalsetError + '_ {
    move |source| EvalsetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `evalset.jsonl` and one trace file per item under `traces/`.
/// Screenshot references in the traces are resolved against `dir`.
pub fn write_evalset(dir: &Path, items: &[EvalItem]) -> Result<(), EvalsetError> {
    let traces = dir.join("traces");
    fs::create_dir_all(&traces).map_err(io(&traces))?;
    let mut lines = String::new();
    for it in items {
        let trace_ref = format!("traces/{}.jsonl", it.id);
        let path = dir.join(&trace_ref);
        fs::write(&path, it.trace.to_jsonl()).map_err(io(&path))?;
        let rec = EvalRecord {
            id: it.id.clone(),
            task: it.task,
            trace_ref,
            label: it.label,
            provenance: it.provenance.clone(),
            description: it.description.clone(),
            sop: it.sop.clone(),
            constraint: it.constraint.clone(),
            site: it.site.clone(),
        };
        lines.push_str(&serde_json::to_string(&rec).expect("records serialize"));
        lines.push('\n');
    }
    let path = dir.join(EVALSET_FILE);
    fs::write(&path, lines).map_err(io(&path))
}

/// Reads an evaluation set from `evalset.jsonl` or the directory holding it.
pub fn read_evalset(path: &Path) -> Result<(PathBuf, Vec<EvalItem>), EvalsetError> {
    let file = if path.is_dir() {
        path.join(EVALSET_FILE)
    } else {
        path.to_path_buf()
    };
    let dir = file.parent().unwrap_or(Path::new(".")).to_path_buf();
    let f = fs::File::open(&file).map_err(io(&file))?;
    let mut items = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io(&file))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EvalRecord = serde_json::from_str(&line).map_err(|e| EvalsetError::Parse {
            path: file.clone(),
            line: n + 1,
            message: e.to_string(),
        })?;
        let trace = Trace::load(&dir.join(&rec.trace_ref)).map_err(|e| EvalsetError::Item {
            id: rec.id.clone(),
            message: e.to_string(),
        })?;
        items.push(EvalItem {
            id: rec.id,
            task: rec.task,
            trace,
            label: rec.label,
            provenance: rec.provenance,
            description: rec.description,
            sop: rec.sop,
            constraint: rec.constraint,
            site: rec.site,
        });
    }
    Ok((dir, items))
}

/// Runs the check matching an item's task.
pub fn judge_item(item: &EvalItem, screens: &dyn Screenshots, judge: Judge) -> Result<Judgment, EvalsetError> {
    let fail = |message: String| EvalsetError::Item {
        id: item.id.clone(),
        message,
    };
    let site = match (&judge, &item.site) {
        (Judge::Deterministic, Some(r)) => Some(resolve_site(r).map_err(|e| fail(e.to_string()))?),
        _ => None,
    };
    let out = match item.task {
        Subject::Actuation => {
            let steps = item.trace.steps();
            let (s, a, s2) = steps.first().ok_or_else(|| fail("actuation item has no step".into()))?;
            check_actuation(s, a, s2, screens, judge)
        }
        Subject::Constraint => {
            let text = item.constraint.as_deref().ok_or_else(|| fail("constraint item without constraint".into()))?;
            let c: Constraint = text.parse().map_err(|e: super::ConstraintParseError| fail(e.to_string()))?;
            let s = item.trace.states().next().ok_or_else(|| fail("empty trace".into()))?;
            check_constraint(&c, s, screens, judge)
        }
        Subject::Completion => check_completion(&item.trace, &item.description, screens, judge, site.as_ref()),
        Subject::Trajectory => {
            let text = item.sop.as_deref().ok_or_else(|| fail("trajectory item without SOP".into()))?;
            let sop = parse_sop(text).map_err(|e| fail(e.to_string()))?;
            check_trajectory(&item.trace, &sop, &item.description, screens, judge, site.as_ref())
        }
    };
    out.map_err(|e: ValidateError| fail(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub task: Subject,
    pub label: bool,
    pub predicted: bool,
    pub provenance: String,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateRow {
    pub row: String,
    pub task: Subject,
    /// Absent when the set has no items for the task.
    pub report: Option<BinaryReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateReport {
    pub rows: Vec<ValidateRow>,
    pub items: Vec<ItemResult>,
}

/// Judges every item and scores each task against the labels.
pub fn eval_judges(items: &[EvalItem], screens: &dyn Screenshots, judge: Judge) -> Result<ValidateReport, EvalsetError> {
    if items.is_empty() {
        return Err(EvalsetError::Empty);
    }
    let mut results = Vec::with_capacity(items.len());
    for it in items {
        let j = judge_item(it, screens, judge)?;
        results.push(ItemResult {
            id: it.id.clone(),
            task: it.task,
            label: it.label,
            predicted: j.verdict,
            provenance: it.provenance.clone(),
            rationale: j.rationale,
        });
    }
    let rows = Subject::ALL
        .iter()
        .map(|&task| {
            let preds: Vec<LabeledPrediction> = results
                .iter()
                .filter(|r| r.task == task)
                .map(|r| LabeledPrediction::new(r.predicted, r.label))
                .collect();
            ValidateRow {
                row: task.title().to_string(),
                task,
                report: score_binary(&preds).ok(),
            }
        })
        .collect();
    Ok(ValidateReport { rows, items: results })
}

//! Evaluation suites. Each writes `report.json` and `report.md` to its output
//! directory; under a replay backend and a fixed seed both files are
//! byte-for-byte reproducible.

use crate::config::{Config, JudgeChoice};
use eclair_core::demonstrate::{generate_sop, score_sop, ContextOptions, DemoMode, SopJudge, SopScore};
use eclair_core::execute::{
    run_workflow, teacher_forced, AutoDecision, DecisionKind, ForcedStep, NullSink, RunDir, RunHooks,
    RunInputs, RunPolicy, RunStatus,
};
use eclair_core::fm::{Backend, FmError, Provider};
use eclair_core::ground::{
    evaluate_grounding, format_accuracy, load_dataset, rows_report, BoxSourceKind, BucketThresholds,
    GroundStrategy, GroundingReport, GroundingRow, HitCount,
};
use eclair_core::model::{DirScreens, Screenshots, Sop, Workflow};
use eclair_core::oracle::{fixture_evalset, grounding_samples};
use eclair_core::sim::{fixtures, oracle_trace, record_demonstration, SimEnv};
use eclair_core::validate::{eval_judges, read_evalset, Judge, Subject, ValidateReport};
use serde::Serialize;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Demonstrate,
    Execute,
    Grounding,
    Validate,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Demonstrate, Suite::Execute, Suite::Grounding, Suite::Validate];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Demonstrate => "demonstrate",
            Suite::Execute => "execute",
            Suite::Grounding => "grounding",
            Suite::Validate => "validate",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown suite {s:?}; expected demonstrate, execute, grounding or validate"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("model backend: {0}")]
    Backend(#[from] FmError),
    #[error("{0}")]
    Dataset(String),
    #[error("item {id}: {message}")]
    Item { id: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Rendered report of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutput {
    pub suite: Suite,
    pub json: String,
    pub markdown: String,
}

impl SuiteOutput {
    fn new<T: Serialize>(suite: Suite, report: &T, markdown: String) -> Self {
        Self {
            suite,
            json: serde_json::to_string_pretty(report).expect("reports serialize") + "\n",
            markdown,
        }
    }

    pub fn write(&self, out: &Path) -> Result<(), BenchError> {
        std::fs::create_dir_all(out).map_err(io_err(out))?;
        let j = out.join(REPORT_JSON);
        std::fs::write(&j, &self.json).map_err(io_err(&j))?;
        let m = out.join(REPORT_MD);
        std::fs::write(&m, &self.markdown).map_err(io_err(&m))
    }
}

/// Builds the configured backend once, on first use.
struct Lazy<'a> {
    config: &'a Config,
    provider: Option<Arc<dyn Provider>>,
    backend: Option<Arc<dyn Backend>>,
}

impl Lazy<'_> {
    fn get(&mut self) -> Result<Arc<dyn Backend>, BenchError> {
        if self.backend.is_none() {
            self.backend = Some(self.config.fm.build(self.provider.clone())?);
        }
        Ok(self.backend.clone().expect("just built"))
    }
}

/// Runs one suite and writes its report under `out`. `provider` stands in for
/// the HTTP client in live and record modes.
pub fn run_suite(
    suite: Suite,
    config: &Config,
    seed: u64,
    out: &Path,
    provider: Option<Arc<dyn Provider>>,
) -> Result<SuiteOutput, BenchError> {
    let mut backend = Lazy {
        config,
        provider,
        backend: None,
    };
    let output = match suite {
        Suite::Validate => validate_suite(config, seed, &mut backend)?,
        Suite::Grounding => grounding_suite(config, &mut backend)?,
        Suite::Demonstrate => demonstrate_suite(config, &mut backend)?,
        Suite::Execute => execute_suite(config, out, &mut backend)?,
    };
    output.write(out)?;
    Ok(output)
}

fn backend_label(config: &Config) -> String {
    match &config.fm.model {
        Some(m) => format!("{:?}:{m}", config.fm.backend).to_lowercase(),
        None => format!("{:?}", config.fm.backend).to_lowercase(),
    }
}

fn ratio(x: f64) -> String {
    format!("{x:.2}")
}

/// Published live results, kept for side-by-side reading.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReferenceRow {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn validate_reference(task: Subject) -> ReferenceRow {
    let (precision, recall, f1) = match task {
        Subject::Actuation => (0.95, 0.85, 0.90),
        Subject::Constraint => (0.67, 0.36, 0.47),
        Subject::Completion => (0.90, 0.84, 0.87),
        Subject::Trajectory => (0.88, 0.83, 0.85),
    };
    ReferenceRow { precision, recall, f1 }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateBench {
    pub suite: Suite,
    pub seed: u64,
    pub judge: JudgeChoice,
    pub backend: String,
    pub set: String,
    pub items: usize,
    pub positives: usize,
    pub negatives: usize,
    pub notes: Vec<String>,
    pub reference: Vec<(String, ReferenceRow)>,
    pub report: ValidateReport,
}

fn validate_suite(config: &Config, seed: u64, backend: &mut Lazy) -> Result<SuiteOutput, BenchError> {
    let s = &config.validate;
    let (items, screens, set): (_, Box<dyn Screenshots>, String) = match &s.set {
        Some(path) => {
            let (dir, items) = read_evalset(path).map_err(|e| BenchError::Dataset(e.to_string()))?;
            let name = path.file_name().map_or("evalset".into(), |n| n.to_string_lossy().into_owned());
            (items, Box::new(DirScreens::new(dir)), name)
        }
        None => {
            let (items, screens) =
                fixture_evalset(seed, &s.jitter_seeds).map_err(|e| BenchError::Dataset(e.to_string()))?;
            (items, Box::new(screens), "fixtures".to_string())
        }
    };
    let items: Vec<_> = items
        .into_iter()
        .filter(|i| s.tasks.is_empty() || s.tasks.contains(&i.task))
        .collect();
    if items.is_empty() {
        return Err(BenchError::Dataset("no items for the selected tasks".into()));
    }
    let b;
    let judge = match s.judge {
        JudgeChoice::Det => Judge::Deterministic,
        JudgeChoice::Fm => {
            b = backend.get()?;
            Judge::Fm(b.as_ref())
        }
    };
    let mut report = eval_judges(&items, screens.as_ref(), judge).map_err(|e| match e {
        eclair_core::validate::EvalsetError::Item { id, message } => BenchError::Item { id, message },
        other => BenchError::Dataset(other.to_string()),
    })?;
    let selected = |t: &Subject| s.tasks.is_empty() || s.tasks.contains(t);
    report.rows.retain(|r| selected(&r.task));
    let positives = items.iter().filter(|i| i.label).count();
    let bench = ValidateBench {
        suite: Suite::Validate,
        seed,
        judge: s.judge,
        backend: if s.judge == JudgeChoice::Det { "deterministic".into() } else { backend_label(config) },
        set,
        items: items.len(),
        positives,
        negatives: items.len() - positives,
        notes: vec![
            "actuation negatives repeat the before state, three per positive".into(),
            "completion and trajectory negatives: one per positive".into(),
            "constraint negatives pair a step's constraint with an earlier state, drawn uniformly under the seed from those where it fails".into(),
        ],
        reference: Subject::ALL
            .iter()
            .filter(|t| selected(t))
            .map(|&t| (t.title().to_string(), validate_reference(t)))
            .collect(),
        report,
    };
    let mut md = format!(
        "# Self-validation\n\nJudge: {} ({}). Set: {}. Seed: {}. Items: {} ({} positive, {} negative).\n\n",
        match s.judge {
            JudgeChoice::Fm => "fm",
            JudgeChoice::Det => "det",
        },
        bench.backend,
        bench.set,
        seed,
        bench.items,
        bench.positives,
        bench.negatives
    );
    md.push_str("| Task | Precision | Recall | F1 | Items | Reference P / R / F1 |\n|---|---|---|---|---|---|\n");
    for row in &bench.report.rows {
        let r = validate_reference(row.task);
        let reference = format!("{:.2} / {:.2} / {:.2}", r.precision, r.recall, r.f1);
        match &row.report {
            Some(b) => writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} |",
                row.row,
                ratio(b.precision),
                ratio(b.recall),
                ratio(b.f1),
                b.total(),
                reference
            ),
            None => writeln!(md, "| {} | n/a | n/a | n/a | 0 | {} |", row.row, reference),
        }
        .expect("string write");
    }
    md.push('\n');
    for n in &bench.notes {
        writeln!(md, "- {n}").expect("string write");
    }
    Ok(SuiteOutput::new(Suite::Validate, &bench, md))
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundingTableRow {
    pub model: String,
    pub strategy: GroundStrategy,
    pub bbox_source: String,
    pub report: GroundingReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundingBench {
    pub suite: Suite,
    pub dataset: String,
    pub cases: usize,
    pub thresholds: BucketThresholds,
    pub rows: Vec<GroundingTableRow>,
    pub items: Vec<(GroundStrategy, Vec<GroundingRow>)>,
}

fn grounding_suite(config: &Config, backend: &mut Lazy) -> Result<SuiteOutput, BenchError> {
    let s = &config.grounding;
    let (samples, dataset) = match &s.dataset {
        Some(dir) => (
            load_dataset(dir).map_err(|e| BenchError::Dataset(e.to_string()))?,
            dir.file_name().map_or("dataset".into(), |n| n.to_string_lossy().into_owned()),
        ),
        None => (grounding_samples(), "fixtures".to_string()),
    };
    if samples.is_empty() {
        return Err(BenchError::Dataset("no grounding cases".into()));
    }
    let thresholds = BucketThresholds::default();
    let b = backend.get()?;
    let source = match samples[0].boxes.kind {
        BoxSourceKind::Snapshot => "snapshot",
        BoxSourceKind::DetectorFile => "detector file",
    };
    let mut rows = Vec::new();
    let mut items = Vec::new();
    for &strategy in &s.strategies {
        let evaluated = evaluate_grounding(&samples, b.as_ref(), strategy, &thresholds)
            .map_err(|(id, e)| BenchError::Item { id, message: e.to_string() })?;
        let report = rows_report(&evaluated).expect("samples are non-empty");
        rows.push(GroundingTableRow {
            model: backend_label(config),
            strategy,
            bbox_source: match strategy {
                GroundStrategy::Som => source.into(),
                GroundStrategy::Direct => "--".into(),
            },
            report,
        });
        items.push((strategy, evaluated));
    }
    let bench = GroundingBench {
        suite: Suite::Grounding,
        dataset: dataset.clone(),
        cases: samples.len(),
        thresholds,
        rows,
        items,
    };
    let acc = |h: &HitCount| format_accuracy(h.accuracy());
    let mut md = format!(
        "# Grounding\n\nDataset: {dataset} ({} cases). A hit is a predicted box whose center lies in the target box.\n\n",
        bench.cases
    );
    writeln!(md, "| Model | Bbox source | S \\| M \\| L ({dataset}) | Overall |\n|---|---|---|---|").expect("string write");
    for r in &bench.rows {
        writeln!(
            md,
            "| {} | {} | {} \\| {} \\| {} | {} |",
            r.model,
            r.bbox_source,
            acc(&r.report.small),
            acc(&r.report.medium),
            acc(&r.report.large),
            acc(&r.report.overall)
        )
        .expect("string write");
    }
    Ok(SuiteOutput::new(Suite::Grounding, &bench, md))
}

#[derive(Debug, Clone, Serialize)]
pub struct DemonstrateItem {
    pub workflow: String,
    pub mode: DemoMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sop: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub score: SopScore,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemonstrateRow {
    pub method: String,
    pub missing: f64,
    pub incorrect: f64,
    pub total: f64,
    pub precision: f64,
    pub recall: f64,
    pub correctness: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemonstrateBench {
    pub suite: Suite,
    pub judge: JudgeChoice,
    pub backend: String,
    pub workflows: usize,
    pub rows: Vec<DemonstrateRow>,
    pub items: Vec<DemonstrateItem>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn demonstrate_suite(config: &Config, backend: &mut Lazy) -> Result<SuiteOutput, BenchError> {
    let b = backend.get()?;
    let judge_choice = config.demonstrate.judge;
    let mut items = Vec::new();
    let mut references = Vec::new();
    for (spec, id) in fixtures::workflows() {
        let bundle =
            record_demonstration(&spec, &id, None).map_err(|e| BenchError::Item { id: id.clone(), message: e.to_string() })?;
        let Some(reference) = bundle.sop.clone() else {
            continue;
        };
        references.push(reference.len());
        let options = ContextOptions::default().with_site_labels(&spec);
        for mode in DemoMode::ALL {
            let item_id = format!("{id}/{mode}");
            let generated = generate_sop(&bundle, mode, &options, b.as_ref());
            let (candidate, error) = match generated {
                Ok(sop) => (sop, None),
                Err(eclair_core::demonstrate::DemoError::Fm(e)) => return Err(BenchError::Item { id: item_id, message: e.to_string() }),
                Err(e) => (Sop { steps: Vec::new(), source: eclair_core::model::SopSource::Generated }, Some(e.to_string())),
            };
            let judge = match judge_choice {
                JudgeChoice::Det => SopJudge::Deterministic,
                JudgeChoice::Fm => SopJudge::Fm {
                    backend: b.as_ref(),
                    description: &bundle.workflow.description,
                },
            };
            let score = score_sop(&candidate, &reference, &judge)
                .map_err(|e| BenchError::Item { id: item_id.clone(), message: e.to_string() })?;
            items.push(DemonstrateItem {
                workflow: id.clone(),
                mode,
                sop: (!candidate.is_empty()).then(|| candidate.to_markdown()),
                error,
                score,
            });
        }
    }
    if references.is_empty() {
        return Err(BenchError::Dataset("no fixture workflow has a reference SOP".into()));
    }
    let mut rows: Vec<DemonstrateRow> = DemoMode::ALL
        .iter()
        .map(|&mode| {
            let of = || items.iter().filter(move |i| i.mode == mode).map(|i| &i.score);
            DemonstrateRow {
                method: mode.label().into(),
                missing: mean(of().map(|s| s.n_missing as f64)),
                incorrect: mean(of().map(|s| s.n_incorrect as f64)),
                total: mean(of().map(|s| s.n_total as f64)),
                precision: mean(of().map(|s| s.precision)),
                recall: mean(of().map(|s| s.recall)),
                correctness: mean(of().map(|s| s.correct as u8 as f64)),
            }
        })
        .collect();
    rows.push(DemonstrateRow {
        method: "Ground truth".into(),
        missing: 0.0,
        incorrect: 0.0,
        total: mean(references.iter().map(|&n| n as f64)),
        precision: 1.0,
        recall: 1.0,
        correctness: 1.0,
    });
    let bench = DemonstrateBench {
        suite: Suite::Demonstrate,
        judge: judge_choice,
        backend: backend_label(config),
        workflows: references.len(),
        rows,
        items,
    };
    let mut md = format!(
        "# SOP generation\n\nMeans over {} workflows. Backend: {}. Judge: {}.\n\n",
        bench.workflows,
        bench.backend,
        match judge_choice {
            JudgeChoice::Fm => "fm",
            JudgeChoice::Det => "det",
        }
    );
    md.push_str("| Method | Missing | Incorrect | Total | Precision | Recall | Correctness |\n|---|---|---|---|---|---|---|\n");
    for r in &bench.rows {
        writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.method,
            ratio(r.missing),
            ratio(r.incorrect),
            ratio(r.total),
            ratio(r.precision),
            ratio(r.recall),
            ratio(r.correctness)
        )
        .expect("string write");
    }
    Ok(SuiteOutput::new(Suite::Demonstrate, &bench, md))
}

#[derive(Debug, Clone, Serialize)]
pub struct ExecuteItem {
    pub run_id: String,
    pub workflow: String,
    pub sop: bool,
    pub status: RunStatus,
    pub actions: usize,
    pub oracle_goal: Option<bool>,
    pub completed: bool,
    pub flagged_actions: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub next_action_correct: usize,
    pub next_action_steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExecuteRow {
    pub sop: bool,
    /// Teacher-forced: every step sees the true history.
    pub next_action_accuracy: f64,
    /// Free-running runs that stopped with the goal met.
    pub completion_rate: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExecuteBench {
    pub suite: Suite,
    pub backend: String,
    pub strategy: GroundStrategy,
    pub notes: Vec<String>,
    pub rows: Vec<ExecuteRow>,
    pub items: Vec<ExecuteItem>,
}

fn execute_suite(config: &Config, out: &Path, backend: &mut Lazy) -> Result<SuiteOutput, BenchError> {
    let b = backend.get()?;
    let s = &config.execute;
    let workflows: Vec<_> = fixtures::workflows()
        .into_iter()
        .filter(|(_, id)| s.workflows.is_empty() || s.workflows.contains(id))
        .collect();
    if workflows.is_empty() {
        return Err(BenchError::Dataset("no matching fixture workflows".into()));
    }
    let mut items = Vec::new();
    for with_sop in [false, true] {
        for (spec, id) in &workflows {
            let w = spec.workflow(id).expect("listed workflow");
            let workflow = Workflow::new(&w.id, &w.description, &spec.name);
            let sop = match (&w.sop, with_sop) {
                (Some(text), true) => Some(
                    eclair_core::model::parse_sop(text)
                        .map_err(|e| BenchError::Item { id: id.clone(), message: e.to_string() })?,
                ),
                _ => None,
            };
            let constraints = match &sop {
                Some(_) => fixtures::constraints(id).unwrap_or_default(),
                None => Vec::new(),
            };
            let run_id = format!("{id}-{}", if with_sop { "sop" } else { "nosop" });
            let dir_path = out.join("runs").join(&run_id);
            let mut dir = RunDir::create(&dir_path, id).map_err(io_err(&dir_path))?;
            let policy = RunPolicy {
                strategy: s.strategy,
                ..RunPolicy::default()
            };
            let mut env = SimEnv::new(spec.clone());
            let result = run_workflow(
                &RunInputs {
                    run_id: &run_id,
                    workflow: &workflow,
                    sop: sop.as_ref(),
                    constraints: &constraints,
                },
                &mut env,
                b.as_ref(),
                &policy,
                &mut RunHooks {
                    events: &mut NullSink,
                    decisions: &mut AutoDecision(DecisionKind::Approve),
                    dir: Some(&mut dir),
                },
            );
            if let Some(message) = cache_miss(&result.detail) {
                return Err(BenchError::Item { id: run_id, message });
            }
            let (trace, screens) = oracle_trace(spec, id, None, true)
                .map_err(|e| BenchError::Item { id: id.clone(), message: e.to_string() })?;
            let mut intents: Vec<String> = w.oracle.iter().map(|o| o.intent.clone()).collect();
            intents.push("Stop".into());
            let steps: Vec<ForcedStep> = trace
                .steps()
                .into_iter()
                .zip(intents)
                .map(|((state, action, _), intent)| ForcedStep {
                    state: state.clone(),
                    action: action.clone(),
                    intent,
                })
                .collect();
            let forced = teacher_forced(&w.description, sop.as_ref(), &steps, &screens, b.as_ref(), s.strategy);
            if let Some(e) = forced.steps.iter().find_map(|o| o.error.as_deref().filter(|m| m.contains("cassette has no entry"))) {
                return Err(BenchError::Item { id: format!("{run_id}/teacher"), message: e.to_string() });
            }
            items.push(ExecuteItem {
                run_id,
                workflow: id.clone(),
                sop: with_sop,
                status: result.status,
                actions: result.trace.action_count(),
                oracle_goal: result.oracle_goal,
                completed: result.succeeded(),
                flagged_actions: result.flagged_actions(),
                detail: result.detail.clone(),
                next_action_correct: forced.correct,
                next_action_steps: forced.steps.len(),
            });
        }
    }
    let rows: Vec<ExecuteRow> = [false, true]
        .iter()
        .map(|&sop| {
            let of: Vec<&ExecuteItem> = items.iter().filter(|i| i.sop == sop).collect();
            let steps: usize = of.iter().map(|i| i.next_action_steps).sum();
            let correct: usize = of.iter().map(|i| i.next_action_correct).sum();
            ExecuteRow {
                sop,
                next_action_accuracy: if steps == 0 { 0.0 } else { correct as f64 / steps as f64 },
                completion_rate: of.iter().filter(|i| i.completed).count() as f64 / of.len() as f64,
                runs: of.len(),
            }
        })
        .collect();
    let bench = ExecuteBench {
        suite: Suite::Execute,
        backend: backend_label(config),
        strategy: s.strategy,
        notes: vec![
            "next-action accuracy is teacher-forced; completion comes from free-running runs".into(),
            "handoff interrupts are approved automatically".into(),
        ],
        rows,
        items,
    };
    let mut md = format!(
        "# Execution\n\n{} workflows. Backend: {}. Grounding: {}.\n\n| SOP | Next action suggestion acc. | Overall workflow completion acc. |\n|---|---|---|\n",
        workflows.len(),
        bench.backend,
        bench.strategy
    );
    for r in &bench.rows {
        writeln!(
            md,
            "| {} | {} | {} |",
            if r.sop { "yes" } else { "no" },
            ratio(r.next_action_accuracy),
            ratio(r.completion_rate)
        )
        .expect("string write");
    }
    md.push('\n');
    for n in &bench.notes {
        writeln!(md, "- {n}").expect("string write");
    }
    Ok(SuiteOutput::new(Suite::Execute, &bench, md))
}

/// Replay misses surface in a run's detail; the bench treats them as errors
/// rather than as failed runs.
fn cache_miss(detail: &Option<String>) -> Option<String> {
    detail.as_deref().filter(|d| d.contains("cassette has no entry")).map(str::to_string)
}

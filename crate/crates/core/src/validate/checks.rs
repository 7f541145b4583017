use super::Constraint;
use crate::fm::{parse_verdict, Backend, FmError, FmRequest, Image};
use crate::model::{Action, ActionKind, Element, Point, Screenshots, Sop, State, Trace};
use crate::prompts;
use crate::sim::{oracle_trace_complete, SimError, SiteSpec};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::{Arc, OnceLock};

/// Screenshots at each end of a long trace that FM judges get to see.
pub const JUDGE_EDGE_FRAMES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    Actuation,
    Constraint,
    Completion,
    Trajectory,
}

impl Subject {
    pub const ALL: [Subject; 4] = [
        Subject::Actuation,
        Subject::Constraint,
        Subject::Completion,
        Subject::Trajectory,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Subject::Actuation => "actuation",
            Subject::Constraint => "constraint",
            Subject::Completion => "completion",
            Subject::Trajectory => "trajectory",
        }
    }

    /// Row name in validation reports.
    pub fn title(&self) -> &'static str {
        match self {
            Subject::Actuation => "Actuation",
            Subject::Constraint => "Integrity Constraint",
            Subject::Completion => "Workflow Completion",
            Subject::Trajectory => "Workflow Trajectory",
        }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Subject {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Subject::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown task {s:?}; expected actuation, constraint, completion or trajectory"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    Fm,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub verdict: bool,
    pub rationale: String,
    pub judge: JudgeKind,
    pub subject: Subject,
    /// Backend that answered, for fm judgments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
}

impl Judgment {
    fn det(subject: Subject, verdict: bool, rationale: impl Into<String>) -> Self {
        Self {
            verdict,
            rationale: rationale.into(),
            judge: JudgeKind::Deterministic,
            subject,
            backend: None,
        }
    }
}

#[derive(Clone, Copy)]
pub enum Judge<'a> {
    Deterministic,
    Fm(&'a dyn Backend),
}

#[derive(Debug, thiserror::Error)]
pub enum ValidateError {
    #[error(transparent)]
    Fm(#[from] FmError),
    #[error("screenshot {0} is missing")]
    MissingScreenshot(String),
    #[error("deterministic {0} check needs the site the trace ran on")]
    NoSite(Subject),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("trace is empty")]
    EmptyTrace,
}

/// One-line rendering of an action used in judge prompts; [`parse_action_text`] inverts it.
///
/// ```text
/// click #login_btn
/// click @(290,125)
/// type "alice"
/// scroll "down"
/// ```
pub fn action_text(a: &Action) -> String {
    let mut s = a.kind.to_string();
    if let Some(t) = &a.target {
        s.push_str(&format!(" #{t}"));
    }
    if let Some(p) = a.coordinates {
        s.push_str(&format!(" @({},{})", p.x, p.y));
    }
    let payload = a.text.as_ref().or(a.direction_or_url.as_ref());
    if let Some(t) = payload {
        s.push(' ');
        s.push_str(&serde_json::to_string(t).expect("strings serialize"));
    }
    s
}

pub fn parse_action_text(line: &str) -> Option<Action> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r#"^([a-z]+)(?: #(\S+))?(?: @\(([^,()]+),([^,()]+)\))?(?: (".*"))?$"#)
            .expect("static regex")
    });
    let c = re.captures(line.trim())?;
    let kind = ActionKind::parse(&c[1])?;
    let payload: Option<String> = match c.get(5) {
        Some(m) => Some(serde_json::from_str(m.as_str()).ok()?),
        None => None,
    };
    let coordinates = match (c.get(3), c.get(4)) {
        (Some(x), Some(y)) => Some(Point::new(x.as_str().parse().ok()?, y.as_str().parse().ok()?)),
        _ => None,
    };
    let (text, arg) = match kind {
        ActionKind::Type | ActionKind::Keypress => (payload, None),
        _ => (None, payload),
    };
    Some(Action {
        kind,
        target: c.get(2).map(|m| m.as_str().to_string()),
        coordinates,
        text,
        direction_or_url: arg,
        ts_ms: 0,
    })
}

/// Numbered action lines, one per action, or `(none)`.
pub fn action_list(trace: &Trace) -> String {
    if trace.action_count() == 0 {
        return "(none)\n".into();
    }
    trace
        .actions()
        .enumerate()
        .map(|(i, a)| format!("{}. {}\n", i + 1, action_text(a)))
        .collect()
}

/// States shown to FM judges: all of them, or the first and last
/// [`JUDGE_EDGE_FRAMES`] with a note on what was left out.
pub fn judge_frames(trace: &Trace) -> (Vec<&State>, String) {
    let states: Vec<&State> = trace.states().collect();
    let n = states.len();
    if n <= 2 * JUDGE_EDGE_FRAMES {
        return (states, String::new());
    }
    let mut shown = states[..JUDGE_EDGE_FRAMES].to_vec();
    shown.extend_from_slice(&states[n - JUDGE_EDGE_FRAMES..]);
    let note = format!(
        " (screenshots {} to {} of {} omitted)",
        JUDGE_EDGE_FRAMES + 1,
        n - JUDGE_EDGE_FRAMES,
        n
    );
    (shown, note)
}

fn load(screens: &dyn Screenshots, s: &State) -> Result<Arc<Vec<u8>>, ValidateError> {
    screens
        .load(&s.screenshot_ref)
        .ok_or_else(|| ValidateError::MissingScreenshot(s.screenshot_ref.clone()))
}

fn images(screens: &dyn Screenshots, states: &[&State]) -> Result<Vec<Image>, ValidateError> {
    states
        .iter()
        .enumerate()
        .map(|(i, s)| Ok(Image::new(format!("screenshot_{:02}.png", i + 1), load(screens, s)?)))
        .collect()
}

fn ask(backend: &dyn Backend, subject: Subject, request: FmRequest) -> Result<Judgment, ValidateError> {
    let reply = backend.complete(&request)?;
    let text = reply.text.trim();
    // An answer without a verdict counts as a rejection.
    let (verdict, rationale) = match parse_verdict(text) {
        Some(v) => (v, text.to_string()),
        None => (false, format!("no verdict in response: {text:?}")),
    };
    Ok(Judgment {
        verdict,
        rationale: if rationale.is_empty() {
            "(empty response)".into()
        } else {
            rationale
        },
        judge: JudgeKind::Fm,
        subject,
        backend: Some(reply.backend_id),
    })
}

fn same_screen(a: &State, b: &State) -> bool {
    a.url_or_screen_id == b.url_or_screen_id && a.elements == b.elements
}

pub fn check_actuation(
    s: &State,
    a: &Action,
    s2: &State,
    screens: &dyn Screenshots,
    judge: Judge,
) -> Result<Judgment, ValidateError> {
    let subject = Subject::Actuation;
    match judge {
        Judge::Fm(backend) => {
            let text = prompts::VALIDATE_ACTUATION.fill(&[("action", &action_text(a))]);
            let request = FmRequest::new("validate.actuation")
                .user(text, images(screens, &[s, s2])?);
            ask(backend, subject, request)
        }
        Judge::Deterministic => {
            if a.kind == ActionKind::Stop {
                return Ok(Judgment::det(subject, true, "stop has no effect to observe"));
            }
            let identical = s.screenshot_ref == s2.screenshot_ref
                || load(screens, s)? == load(screens, s2)?;
            if identical {
                return Ok(Judgment::det(subject, false, "screen unchanged after the action"));
            }
            let (ok, why) = match a.kind {
                ActionKind::Navigate => {
                    let dest = a.direction_or_url.as_deref().unwrap_or_default();
                    (s2.url_or_screen_id == dest, format!("now on {}", s2.url_or_screen_id))
                }
                ActionKind::Type => {
                    let text = a.text.as_deref().unwrap_or_default();
                    let typed = s2.focused().filter(|e| {
                        e.value.as_deref().is_some_and(|v| v.ends_with(text))
                            && s.element(&e.element_id).map(|b| &b.value) != Some(&e.value)
                    });
                    (typed.is_some(), "focused field value after typing".to_string())
                }
                _ => (!same_screen(s, s2), "element snapshot after the action".to_string()),
            };
            let verdict = if ok { "shows the expected effect" } else { "shows no expected effect" };
            Ok(Judgment::det(subject, ok, format!("{why}: {verdict}")))
        }
    }
}

pub fn check_constraint(
    c: &Constraint,
    s: &State,
    screens: &dyn Screenshots,
    judge: Judge,
) -> Result<Judgment, ValidateError> {
    let subject = Subject::Constraint;
    match judge {
        Judge::Fm(backend) => {
            let text = prompts::VALIDATE_CONSTRAINT.fill(&[("constraint", &c.to_string())]);
            let request = FmRequest::new("validate.constraint").user(text, images(screens, &[s])?);
            ask(backend, subject, request)
        }
        Judge::Deterministic => {
            let e = c.evaluate(s);
            let mut why = format!("{c} {}", if e.verdict { "holds" } else { "does not hold" });
            if !e.unresolved.is_empty() {
                why.push_str(&format!("; unresolved: {}", e.unresolved.join(", ")));
            }
            Ok(Judgment::det(subject, e.verdict, why))
        }
    }
}

pub fn check_completion(
    trace: &Trace,
    description: &str,
    screens: &dyn Screenshots,
    judge: Judge,
    site: Option<&Arc<SiteSpec>>,
) -> Result<Judgment, ValidateError> {
    let subject = Subject::Completion;
    if trace.items.is_empty() {
        return Err(ValidateError::EmptyTrace);
    }
    match judge {
        Judge::Fm(backend) => {
            let (frames, elided) = judge_frames(trace);
            let text = prompts::VALIDATE_COMPLETION.fill(&[
                ("description", description),
                ("elided", &elided),
                ("actions", &action_list(trace)),
            ]);
            let request = FmRequest::new("validate.completion").user(text, images(screens, &frames)?);
            ask(backend, subject, request)
        }
        Judge::Deterministic => {
            let site = site.ok_or(ValidateError::NoSite(subject))?;
            let done = oracle_trace_complete(trace, site)?;
            Ok(Judgment::det(
                subject,
                done,
                if done { "replay reaches the goal" } else { "replay misses the goal" },
            ))
        }
    }
}

/// `(kind, element, text, arg)` of an action; clicks by point resolve to the
/// element under the point in the preceding state.
pub type Signature = (ActionKind, Option<String>, Option<String>, Option<String>);

pub fn signature(before: &State, a: &Action) -> Signature {
    let element = a.target.clone().or_else(|| {
        a.coordinates
            .and_then(|p| before.element_at(p))
            .map(|e: &Element| e.element_id.clone())
    });
    (a.kind, element, a.text.clone(), a.direction_or_url.clone())
}

/// Signatures of a trace's actions, stops left out.
pub fn trace_signatures(trace: &Trace) -> Vec<Signature> {
    trace
        .steps()
        .into_iter()
        .filter(|(_, a, _)| a.kind != ActionKind::Stop)
        .map(|(s, a, _)| signature(s, a))
        .collect()
}

pub fn check_trajectory(
    trace: &Trace,
    sop: &Sop,
    description: &str,
    screens: &dyn Screenshots,
    judge: Judge,
    site: Option<&Arc<SiteSpec>>,
) -> Result<Judgment, ValidateError> {
    let subject = Subject::Trajectory;
    if trace.items.is_empty() {
        return Err(ValidateError::EmptyTrace);
    }
    match judge {
        Judge::Fm(backend) => {
            let (frames, elided) = judge_frames(trace);
            let text = prompts::VALIDATE_TRAJECTORY.fill(&[
                ("description", description),
                ("sop", &sop.to_markdown()),
                ("elided", &elided),
                ("actions", &action_list(trace)),
            ]);
            let request = FmRequest::new("validate.trajectory").user(text, images(screens, &frames)?);
            ask(backend, subject, request)
        }
        Judge::Deterministic => {
            let site = site.ok_or(ValidateError::NoSite(subject))?;
            let w = site
                .workflow(&trace.workflow_id)
                .ok_or_else(|| SimError::UnknownWorkflow(trace.workflow_id.clone()))?;
            let expected: Vec<Signature> = w
                .oracle
                .iter()
                .map(|o| (o.kind, o.target.clone(), o.text.clone(), o.arg.clone()))
                .collect();
            let got = trace_signatures(trace);
            let same = got == expected;
            Ok(Judgment::det(
                subject,
                same,
                if same {
                    "actions match the reference sequence".to_string()
                } else {
                    format!("{} actions differ from the {}-action reference", got.len(), expected.len())
                },
            ))
        }
    }
}

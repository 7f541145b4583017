use super::events::{
    Decision, DecisionKind, DecisionSource, ElementInfo, Event, EventBody, EventSink, Interrupt,
    InterruptReason, RunStatus,
};
use super::policy::{whitelisted, RunPolicy};
use super::rundir::RunDir;
use super::suggest::{suggest_next_action, ActionSuggestion, HistoryEntry, SuggestError};
use crate::fm::{Backend, FmError};
use crate::ground::{ground_action, GroundError, GroundStrategy, GroundedAction};
use crate::model::{Action, ActionKind, Element, MemScreens, Sop, State, Trace, Workflow};
use crate::sim::{Environment, Observation};
use crate::validate::{check_actuation, check_constraint, Constraint, Judge, Judgment};
use serde::{Deserialize, Serialize};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    /// Trace index of the faulted action.
    pub action_index: usize,
    pub action: Action,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run_id: String,
    pub trace: Trace,
    pub status: RunStatus,
    pub suggestions: Vec<ActionSuggestion>,
    /// `(action index, judgment)` pairs from step checks.
    pub judgments: Vec<(usize, Judgment)>,
    pub faults: Vec<FaultRecord>,
    /// Ground-truth goal check, when the environment offers one.
    pub oracle_goal: Option<bool>,
    pub detail: Option<String>,
    pub screens: MemScreens,
}

/// What `result.json` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub workflow_id: String,
    pub status: RunStatus,
    pub actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_goal: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub faults: Vec<FaultRecord>,
    pub flagged_actions: Vec<usize>,
}

impl RunResult {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            run_id: self.run_id.clone(),
            workflow_id: self.trace.workflow_id.clone(),
            status: self.status,
            actions: self.trace.action_count(),
            oracle_goal: self.oracle_goal,
            detail: self.detail.clone(),
            faults: self.faults.clone(),
            flagged_actions: self.flagged_actions(),
        }
    }

    /// Actions a step check judged ineffective.
    pub fn flagged_actions(&self) -> Vec<usize> {
        self.judgments
            .iter()
            .filter(|(_, j)| j.subject == crate::validate::Subject::Actuation && !j.verdict)
            .map(|(i, _)| *i)
            .collect()
    }

    /// Completed with the goal reached.
    pub fn succeeded(&self) -> bool {
        self.status == RunStatus::Completed && self.oracle_goal == Some(true)
    }
}

pub struct RunInputs<'a> {
    pub run_id: &'a str,
    pub workflow: &'a Workflow,
    pub sop: Option<&'a Sop>,
    /// Integrity constraint per SOP step, checked before actions that cite the step.
    pub constraints: &'a [Constraint],
}

pub struct RunHooks<'a> {
    pub events: &'a mut dyn EventSink,
    pub decisions: &'a mut dyn DecisionSource,
    pub dir: Option<&'a mut RunDir>,
}

/// Applies an action. Stops never reach the environment; a fault leaves the
/// observation as it was.
pub fn actuate(action: &Action, env: &mut dyn Environment, current: &Observation) -> (Observation, Option<String>) {
    if action.kind == ActionKind::Stop {
        return (current.clone(), None);
    }
    match env.apply(action) {
        Ok(obs) => (obs, None),
        Err(f) => (current.clone(), Some(f.reason)),
    }
}

pub fn element_info(e: &Element) -> ElementInfo {
    ElementInfo {
        id: e.element_id.clone(),
        role: e.role,
        label: e.label.clone(),
    }
}

enum StepError {
    /// The model's answer cannot be acted on; worth one more try.
    Unusable(String),
    Fatal(String),
}

impl From<FmError> for StepError {
    fn from(e: FmError) -> Self {
        StepError::Fatal(e.to_string())
    }
}

/// Turns a suggestion into a concrete action on the current screen.
pub fn concretize(
    s: &ActionSuggestion,
    state: &State,
    screenshot: &[u8],
    backend: &dyn Backend,
    strategy: GroundStrategy,
) -> Result<(Action, Option<GroundedAction>, Option<ElementInfo>), String> {
    concretize_inner(s, state, screenshot, backend, strategy).map_err(|e| match e {
        StepError::Unusable(m) | StepError::Fatal(m) => m,
    })
}

fn concretize_inner(
    s: &ActionSuggestion,
    state: &State,
    screenshot: &[u8],
    backend: &dyn Backend,
    strategy: GroundStrategy,
) -> Result<(Action, Option<GroundedAction>, Option<ElementInfo>), StepError> {
    let focused = state.focused().map(element_info);
    let need = |what: &str| StepError::Unusable(format!("{} suggestion names no {what} in quotes", s.proposed_kind));
    Ok(match s.proposed_kind {
        ActionKind::Click => {
            let g = match ground_action(&s.intent_text, state, screenshot, backend, strategy, None) {
                Ok(g) => g,
                Err(e @ (GroundError::UngroundableResponse(_) | GroundError::UnknownLabel(_))) => {
                    return Err(StepError::Unusable(e.to_string()))
                }
                Err(GroundError::Fm(e)) => return Err(e.into()),
                Err(e) => return Err(StepError::Fatal(e.to_string())),
            };
            let element = g.element_id.as_deref().and_then(|id| state.element(id)).map(element_info);
            (Action::click_at(g.point), Some(g), element)
        }
        ActionKind::Type => (Action::type_text(s.payload().ok_or_else(|| need("text"))?), None, focused),
        ActionKind::Keypress => (Action::keypress(s.payload().ok_or_else(|| need("key"))?), None, focused),
        ActionKind::Scroll => {
            let lower = s.intent_text.to_lowercase();
            let dir = s
                .payload()
                .map(str::to_string)
                .or_else(|| ["down", "up"].iter().find(|d| lower.contains(*d)).map(|d| d.to_string()))
                .ok_or_else(|| need("direction"))?;
            (Action::scroll(dir), None, None)
        }
        ActionKind::Navigate => (Action::navigate(s.payload().ok_or_else(|| need("page"))?), None, None),
        ActionKind::Stop => (Action::stop(), None, None),
    })
}

struct Emitter<'h, 'a> {
    run_id: String,
    seq: u64,
    hooks: &'h mut RunHooks<'a>,
    io_error: Option<String>,
}

impl Emitter<'_, '_> {
    fn emit(&mut self, ts_ms: u64, body: EventBody) {
        self.seq += 1;
        let e = Event {
            seq: self.seq,
            run_id: self.run_id.clone(),
            ts_ms,
            body,
        };
        if let Some(d) = self.hooks.dir.as_deref_mut() {
            if let Err(err) = d.event(&e) {
                self.io_error.get_or_insert(err.to_string());
            }
        }
        self.hooks.events.emit(&e);
    }

    fn dir<F: FnOnce(&mut RunDir) -> std::io::Result<()>>(&mut self, f: F) {
        if let Some(d) = self.hooks.dir.as_deref_mut() {
            if let Err(err) = f(d) {
                self.io_error.get_or_insert(err.to_string());
            }
        }
    }
}

/// The agent loop: observe, suggest, ground, gate on interrupts, actuate.
///
/// Every failure ends up in the returned status; the trace stays well-formed
/// after each iteration and never holds more than the policy's budget of actions.
pub fn run_workflow(
    inputs: &RunInputs,
    env: &mut dyn Environment,
    backend: &dyn Backend,
    policy: &RunPolicy,
    hooks: &mut RunHooks,
) -> RunResult {
    let budget = policy.budget(inputs.sop).max(1);
    let timeout = policy.decision_timeout_ms.map(Duration::from_millis);
    let mut out = Emitter {
        run_id: inputs.run_id.to_string(),
        seq: 0,
        hooks,
        io_error: None,
    };
    let mut screens = MemScreens::new();
    let mut current = env.observe();
    current.state.index = 0;
    screens.insert(current.state.screenshot_ref.clone(), current.screenshot.clone());
    let mut trace = Trace::new(&inputs.workflow.id, current.state.clone());
    out.emit(0, EventBody::Status { status: RunStatus::Running, detail: None });
    out.dir(|d| {
        d.screenshot(&current.state, &current.screenshot)?;
        d.trace_item(&trace.items[0])
    });
    out.emit(current.state.ts_ms, EventBody::State(current.state.clone()));

    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut suggestions = Vec::new();
    let mut judgments = Vec::new();
    let mut faults = Vec::new();
    let mut feedback: Option<String> = None;
    let mut retried = false;
    let mut interrupts = 0;

    let (status, detail) = loop {
        let now = current.state.ts_ms;
        if trace.action_count() >= budget {
            break (RunStatus::BudgetExhausted, Some(format!("{budget} actions without finishing")));
        }
        let suggestion = match suggest_next_action(
            &inputs.workflow.description,
            &history,
            &current.state,
            &current.screenshot,
            inputs.sop,
            feedback.as_deref(),
            backend,
        ) {
            Ok(s) => s,
            Err(SuggestError::Fm(e)) => break (RunStatus::Failed, Some(e.to_string())),
            Err(e) => {
                if retried {
                    break (RunStatus::Failed, Some(e.to_string()));
                }
                retried = true;
                feedback = Some(e.to_string());
                continue;
            }
        };
        let action_index = trace.action_count();
        out.dir(|d| d.suggestion(action_index, &suggestion));
        out.emit(now, EventBody::Suggestion(suggestion.clone()));
        suggestions.push(suggestion.clone());

        let (action, grounded, element) =
            match concretize_inner(&suggestion, &current.state, &current.screenshot, backend, policy.strategy) {
                Ok(v) => v,
                Err(StepError::Fatal(m)) => break (RunStatus::Failed, Some(m)),
                Err(StepError::Unusable(m)) => {
                    if retried {
                        break (RunStatus::Failed, Some(m));
                    }
                    retried = true;
                    feedback = Some(m);
                    continue;
                }
            };
        if let Some(g) = grounded {
            out.emit(now, EventBody::Grounded(g));
        }

        let step = suggestion.sop_step_ref.and_then(|k| inputs.sop.and_then(|s| s.step(k)));
        if policy.step_checks {
            if let Some(c) = suggestion.sop_step_ref.and_then(|k| inputs.constraints.get(k.wrapping_sub(1))) {
                if let Ok(j) = check_constraint(c, &current.state, &screens, Judge::Deterministic) {
                    out.emit(now, EventBody::Judgment { judgment: j.clone(), action_index });
                    judgments.push((action_index, j));
                }
            }
        }

        let reason = if step.is_some_and(|s| s.handoff) {
            Some(InterruptReason::SopHandoff)
        } else if whitelisted(&policy.whitelist, action.kind, element.as_ref()) {
            Some(InterruptReason::Whitelist)
        } else {
            None
        };
        if let Some(reason) = reason {
            interrupts += 1;
            let interrupt = Interrupt {
                interrupt_id: format!("{}-i{interrupts}", inputs.run_id),
                run_id: inputs.run_id.to_string(),
                reason,
                action: format!("{} ({})", suggestion.intent_text, crate::validate::action_text(&action)),
                raised_at_ms: now,
            };
            out.emit(now, EventBody::Interrupt(interrupt.clone()));
            out.emit(now, EventBody::Status { status: RunStatus::PendingDecision, detail: None });
            match out.hooks.decisions.decide(&interrupt, timeout) {
                None => break (RunStatus::AbortedByHuman, Some("no decision before the timeout".into())),
                Some(d) => {
                    let d = Decision {
                        interrupt_id: interrupt.interrupt_id.clone(),
                        ..d
                    };
                    let approved = d.decision == DecisionKind::Approve;
                    out.emit(now, EventBody::Decision(d));
                    if !approved {
                        break (RunStatus::AbortedByHuman, Some("denied".into()));
                    }
                    out.emit(now, EventBody::Status { status: RunStatus::Running, detail: None });
                }
            }
        }

        let t0 = current.state.ts_ms;
        let (mut next, fault) = actuate(&action, env, &current);
        next.state.index = trace.state_count();
        let action = action.at((t0 + next.state.ts_ms) / 2);
        screens.insert(next.state.screenshot_ref.clone(), next.screenshot.clone());
        trace.push(action.clone(), next.state.clone());
        let n = trace.items.len();
        out.dir(|d| {
            d.screenshot(&next.state, &next.screenshot)?;
            d.trace_item(&trace.items[n - 2])?;
            d.trace_item(&trace.items[n - 1])
        });
        out.emit(
            next.state.ts_ms,
            EventBody::Actuated {
                action: action.clone(),
                intent: suggestion.intent_text.clone(),
                element,
                fault: fault.clone(),
                state_index: next.state.index,
            },
        );
        out.emit(next.state.ts_ms, EventBody::State(next.state.clone()));
        if policy.step_checks && action.kind != ActionKind::Stop {
            if let Ok(j) = check_actuation(&current.state, &action, &next.state, &screens, Judge::Deterministic) {
                out.emit(next.state.ts_ms, EventBody::Judgment { judgment: j.clone(), action_index });
                judgments.push((action_index, j));
            }
        }
        current = next;
        if action.kind == ActionKind::Stop {
            break (RunStatus::Completed, None);
        }
        history.push(HistoryEntry {
            intent: suggestion.intent_text.clone(),
            kind: action.kind,
            fault: fault.clone(),
        });
        match fault {
            None => {
                feedback = None;
                retried = false;
            }
            Some(reason) => {
                faults.push(FaultRecord {
                    action_index,
                    action,
                    reason: reason.clone(),
                });
                if retried {
                    break (RunStatus::Faulted, Some(reason));
                }
                retried = true;
                feedback = Some(reason);
            }
        }
    };
    let detail = match (detail, out.io_error.take()) {
        (d, None) => d,
        (Some(d), Some(io)) => Some(format!("{d}; run directory: {io}")),
        (None, Some(io)) => Some(format!("run directory: {io}")),
    };
    let oracle_goal = env.goal_reached(&inputs.workflow.id);
    let result = RunResult {
        run_id: inputs.run_id.to_string(),
        trace,
        status,
        suggestions,
        judgments,
        faults,
        oracle_goal,
        detail: detail.clone(),
        screens,
    };
    let summary = result.summary();
    out.dir(|d| d.result(&summary));
    out.emit(current.state.ts_ms, EventBody::Status { status, detail });
    result
}


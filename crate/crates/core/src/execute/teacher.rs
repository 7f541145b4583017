use super::run::concretize;
use super::suggest::{suggest_next_action, HistoryEntry};
use crate::fm::Backend;
use crate::ground::GroundStrategy;
use crate::model::{Action, Screenshots, Sop, State};
use crate::validate::signature;
use serde::{Deserialize, Serialize};

/// One ground-truth step: the screen before, what was done and how a person
/// would phrase it.
#[derive(Debug, Clone)]
pub struct ForcedStep {
    pub state: State,
    pub action: Action,
    pub intent: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcedOutcome {
    pub step: usize,
    pub expected: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<String>,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcedReport {
    /// Always `teacher_forced`: every step sees the true history and screen.
    pub mode: String,
    pub steps: Vec<ForcedOutcome>,
    pub correct: usize,
    pub accuracy: f64,
}

/// Next-action accuracy with the true history fed back at every step.
/// A prediction counts when its kind, element and payload match.
pub fn teacher_forced(
    description: &str,
    sop: Option<&Sop>,
    steps: &[ForcedStep],
    screens: &dyn Screenshots,
    backend: &dyn Backend,
    strategy: GroundStrategy,
) -> ForcedReport {
    let mut history = Vec::new();
    let mut out = Vec::new();
    for (i, step) in steps.iter().enumerate() {
        let expected = signature(&step.state, &step.action);
        let mut outcome = ForcedOutcome {
            step: i + 1,
            expected: crate::validate::action_text(&step.action),
            predicted: None,
            correct: false,
            error: None,
        };
        let attempt = screens
            .load(&step.state.screenshot_ref)
            .ok_or_else(|| format!("missing screenshot {}", step.state.screenshot_ref))
            .and_then(|png| {
                let s = suggest_next_action(description, &history, &step.state, &png, sop, None, backend)
                    .map_err(|e| e.to_string())?;
                concretize(&s, &step.state, &png, backend, strategy)
            });
        match attempt {
            Ok((action, _, _)) => {
                outcome.correct = signature(&step.state, &action) == expected;
                outcome.predicted = Some(crate::validate::action_text(&action));
            }
            Err(e) => outcome.error = Some(e),
        }
        out.push(outcome);
        history.push(HistoryEntry {
            intent: step.intent.clone(),
            kind: step.action.kind,
            fault: None,
        });
    }
    let correct = out.iter().filter(|o| o.correct).count();
    ForcedReport {
        mode: "teacher_forced".into(),
        accuracy: if out.is_empty() { 0.0 } else { correct as f64 / out.len() as f64 },
        steps: out,
        correct,
    }
}

use super::suggest::ActionSuggestion;
use crate::ground::GroundedAction;
use crate::model::{Action, ElementRole, State};
use crate::validate::Judgment;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    PendingDecision,
    Completed,
    Failed,
    BudgetExhausted,
    AbortedByHuman,
    Faulted,
}

impl RunStatus {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, RunStatus::Running | RunStatus::PendingDecision)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Running => "running",
            RunStatus::PendingDecision => "pending_decision",
            RunStatus::Completed => "completed",
            RunStatus::Failed => "failed",
            RunStatus::BudgetExhausted => "budget_exhausted",
            RunStatus::AbortedByHuman => "aborted_by_human",
            RunStatus::Faulted => "faulted",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterruptReason {
    SopHandoff,
    Whitelist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interrupt {
    pub interrupt_id: String,
    pub run_id: String,
    pub reason: InterruptReason,
    /// What would run on approval.
    pub action: String,
    pub raised_at_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    Approve,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub interrupt_id: String,
    pub decision: DecisionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Element an action was aimed at, as recorded for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementInfo {
    pub id: String,
    pub role: ElementRole,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum EventBody {
    State(State),
    Suggestion(ActionSuggestion),
    Grounded(GroundedAction),
    Actuated {
        action: Action,
        intent: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        element: Option<ElementInfo>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fault: Option<String>,
        /// Index of the state that followed.
        state_index: usize,
    },
    Judgment {
        judgment: Judgment,
        /// Trace action index the judgment concerns.
        action_index: usize,
    },
    Interrupt(Interrupt),
    Decision(Decision),
    Status {
        status: RunStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::State(_) => "state",
            EventBody::Suggestion(_) => "suggestion",
            EventBody::Grounded(_) => "grounded",
            EventBody::Actuated { .. } => "actuated",
            EventBody::Judgment { .. } => "judgment",
            EventBody::Interrupt(_) => "interrupt",
            EventBody::Decision(_) => "decision",
            EventBody::Status { .. } => "status",
        }
    }
}

/// One entry of a run's event log. `seq` starts at 1 and has no gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub run_id: String,
    /// Environment clock when the event was emitted.
    pub ts_ms: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

pub trait EventSink: Send {
    fn emit(&mut self, event: &Event);
}

impl EventSink for Vec<Event> {
    fn emit(&mut self, event: &Event) {
        self.push(event.clone());
    }
}

/// Discards events.
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&mut self, _event: &Event) {}
}

impl<A: EventSink, B: EventSink> EventSink for (A, B) {
    fn emit(&mut self, event: &Event) {
        self.0.emit(event);
        self.1.emit(event);
    }
}

impl<S: EventSink + ?Sized> EventSink for &mut S {
    fn emit(&mut self, event: &Event) {
        (**self).emit(event)
    }
}

/// Answers interrupts. `None` means no decision arrived within `timeout`.
pub trait DecisionSource: Send {
    fn decide(&mut self, interrupt: &Interrupt, timeout: Option<Duration>) -> Option<Decision>;
}

/// Gives the same answer to every interrupt.
pub struct AutoDecision(pub DecisionKind);

impl DecisionSource for AutoDecision {
    fn decide(&mut self, interrupt: &Interrupt, _timeout: Option<Duration>) -> Option<Decision> {
        Some(Decision {
            interrupt_id: interrupt.interrupt_id.clone(),
            decision: self.0,
            note: Some("automatic".into()),
        })
    }
}

/// Answers from a fixed list in order; runs out as a timeout.
pub struct ScriptedDecisions(pub std::collections::VecDeque<DecisionKind>);

impl DecisionSource for ScriptedDecisions {
    fn decide(&mut self, interrupt: &Interrupt, _timeout: Option<Duration>) -> Option<Decision> {
        self.0.pop_front().map(|d| Decision {
            interrupt_id: interrupt.interrupt_id.clone(),
            decision: d,
            note: None,
        })
    }
}

/// Decisions delivered from another thread. Decisions for other interrupts are
/// dropped.
pub struct ChannelDecisions(pub Receiver<Decision>);

impl DecisionSource for ChannelDecisions {
    fn decide(&mut self, interrupt: &Interrupt, timeout: Option<Duration>) -> Option<Decision> {
        let deadline = timeout.map(|t| std::time::Instant::now() + t);
        loop {
            let next = match deadline {
                None => self.0.recv().ok(),
                Some(d) => match self.0.recv_timeout(d.saturating_duration_since(std::time::Instant::now())) {
                    Ok(v) => Some(v),
                    Err(RecvTimeoutError::Timeout | RecvTimeoutError::Disconnected) => None,
                },
            };
            match next {
                Some(d) if d.interrupt_id == interrupt.interrupt_id => return Some(d),
                Some(_) => continue,
                None => return None,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_wire_shape() {
        let e = Event {
            seq: 3,
            run_id: "r1".into(),
            ts_ms: 1600,
            body: EventBody::Status {
                status: RunStatus::AbortedByHuman,
                detail: None,
            },
        };
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(
            json,
            r#"{"seq":3,"run_id":"r1","ts_ms":1600,"kind":"status","data":{"status":"aborted_by_human"}}"#
        );
        assert_eq!(serde_json::from_str::<Event>(&json).unwrap(), e);
    }
}

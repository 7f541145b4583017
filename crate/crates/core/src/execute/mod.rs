//! Runs a workflow: the model suggests the next action in words, grounding
//! turns it into a click point or payload, and the environment applies it.
//!
//! Actions cited by an SOP step marked for handoff, or matching the run's
//! whitelist, wait for a human decision first.

mod events;
mod policy;
mod run;
mod rundir;
mod suggest;
mod teacher;

pub use events::{
    AutoDecision, ChannelDecisions, Decision, DecisionKind, DecisionSource, ElementInfo, Event, EventBody,
    EventSink, Interrupt, InterruptReason, NullSink, RunStatus, ScriptedDecisions,
};
pub use policy::{load_whitelist, whitelisted, RunPolicy, WhitelistEntry, WhitelistError, NO_SOP_BUDGET};
pub use run::{
    actuate, concretize, element_info, run_workflow, FaultRecord, RunHooks, RunInputs, RunResult, RunSummary,
};
pub use rundir::{read_events, RunDir, EVENTS_FILE, RESULT_FILE, SUGGESTIONS_FILE, TRACE_FILE};
pub use suggest::{
    decompose_step, history_text, next_action_request, parse_suggestion, parse_suggestion_line, quoted, sop_block,
    suggest_next_action, ActionSuggestion, HistoryEntry, SuggestError,
};
pub use teacher::{teacher_forced, ForcedOutcome, ForcedReport, ForcedStep};

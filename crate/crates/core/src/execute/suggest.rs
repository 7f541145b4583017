use crate::fm::{Backend, FmError, FmRequest, Image};
use crate::model::{ActionKind, Sop, State};
use crate::prompts;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// A proposed next action in words, before grounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSuggestion {
    pub intent_text: String,
    pub proposed_kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sop_step_ref: Option<usize>,
    pub raw_response: String,
}

impl ActionSuggestion {
    /// First double-quoted span of the intent: typed text, key, direction or page.
    pub fn payload(&self) -> Option<&str> {
        quoted(&self.intent_text)
    }
}

pub fn quoted(text: &str) -> Option<&str> {
    let start = text.find('"')? + 1;
    let len = text[start..].find('"')?;
    Some(&text[start..start + len])
}

#[derive(Debug, thiserror::Error)]
pub enum SuggestError {
    #[error("unparsable suggestion: {0:?}")]
    UnparsableSuggestion(String),
    #[error("empty SOP step")]
    EmptyStep,
    #[error(transparent)]
    Fm(#[from] FmError),
}

/// Outcome of an earlier action as shown to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub intent: String,
    pub kind: ActionKind,
    /// `None` when the action took effect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

pub fn history_text(history: &[HistoryEntry]) -> String {
    if history.is_empty() {
        return "(none)\n".to_string();
    }
    history
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let outcome = match &h.fault {
                None => "ok".to_string(),
                Some(f) => format!("failed: {f}"),
            };
            format!("{}. {}: {} -> {outcome}\n", i + 1, h.kind.as_str().to_uppercase(), h.intent)
        })
        .collect()
}

fn line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\s*(?:[-*]\s*|\d+[.)]\s*)?(click|type|keypress|scroll|navigate)\s*:\s*(.+?)\s*(?:\[step\s*(\d+)\])?\s*$")
            .expect("static regex")
    })
}

/// Parses one `KIND: intent [step N]` line.
pub fn parse_suggestion_line(line: &str, raw: &str) -> Option<ActionSuggestion> {
    let c = line_re().captures(line)?;
    let intent = c[2].trim().to_string();
    if intent.is_empty() {
        return None;
    }
    Some(ActionSuggestion {
        intent_text: intent,
        proposed_kind: ActionKind::parse(&c[1])?,
        sop_step_ref: c.get(3).and_then(|m| m.as_str().parse().ok()),
        raw_response: raw.to_string(),
    })
}

/// First action line of a reply, or `stop` when the reply opens with DONE.
pub fn parse_suggestion(raw: &str) -> Result<ActionSuggestion, SuggestError> {
    for line in raw.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if line.to_ascii_uppercase().starts_with("DONE") {
            return Ok(ActionSuggestion {
                intent_text: "Task complete".into(),
                proposed_kind: ActionKind::Stop,
                sop_step_ref: None,
                raw_response: raw.to_string(),
            });
        }
        if let Some(s) = parse_suggestion_line(line, raw) {
            return Ok(s);
        }
    }
    Err(SuggestError::UnparsableSuggestion(raw.to_string()))
}

pub fn sop_block(sop: Option<&Sop>) -> String {
    match sop {
        Some(s) => format!("SOP:\n{}", s.to_markdown()),
        None => String::new(),
    }
}

pub fn next_action_request(
    description: &str,
    history: &[HistoryEntry],
    state: &State,
    screenshot: &[u8],
    sop: Option<&Sop>,
    feedback: Option<&str>,
) -> FmRequest {
    let feedback = match feedback {
        Some(f) => format!("The previous attempt failed: {f}. Suggest a different action.\n"),
        None => String::new(),
    };
    let text = prompts::EXECUTE_NEXT_ACTION.fill(&[
        ("description", description),
        ("screen", &state.url_or_screen_id),
        ("sop", &sop_block(sop)),
        ("history", &history_text(history)),
        ("feedback", &feedback),
    ]);
    FmRequest::new("execute.next_action")
        .system(prompts::EXECUTE_SYSTEM.text)
        .user(text, vec![Image::new("screen.png", screenshot.to_vec())])
}

pub fn suggest_next_action(
    description: &str,
    history: &[HistoryEntry],
    state: &State,
    screenshot: &[u8],
    sop: Option<&Sop>,
    feedback: Option<&str>,
    backend: &dyn Backend,
) -> Result<ActionSuggestion, SuggestError> {
    let request = next_action_request(description, history, state, screenshot, sop, feedback);
    parse_suggestion(&backend.complete(&request)?.text)
}

/// Splits one SOP step into primitive actions.
pub fn decompose_step(
    step: &str,
    state: &State,
    screenshot: &[u8],
    backend: &dyn Backend,
) -> Result<Vec<ActionSuggestion>, SuggestError> {
    if step.trim().is_empty() {
        return Err(SuggestError::EmptyStep);
    }
    let text = prompts::EXECUTE_DECOMPOSE.fill(&[("screen", &state.url_or_screen_id), ("step", step.trim())]);
    let request = FmRequest::new("execute.decompose")
        .system(prompts::EXECUTE_SYSTEM.text)
        .user(text, vec![Image::new("screen.png", screenshot.to_vec())]);
    let raw = backend.complete(&request)?.text;
    let out: Vec<ActionSuggestion> = raw.lines().filter_map(|l| parse_suggestion_line(l, &raw)).collect();
    if out.is_empty() {
        return Err(SuggestError::UnparsableSuggestion(raw));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_kind_intent_and_step() {
        let s = parse_suggestion("CLICK: Click the Username field [step 1]").unwrap();
        assert_eq!(s.proposed_kind, ActionKind::Click);
        assert_eq!(s.intent_text, "Click the Username field");
        assert_eq!(s.sop_step_ref, Some(1));
        let s = parse_suggestion("Sure.\nTYPE: Type \"alice\" into the Username field").unwrap();
        assert_eq!(s.payload(), Some("alice"));
        assert_eq!(s.sop_step_ref, None);
        assert_eq!(parse_suggestion("DONE").unwrap().proposed_kind, ActionKind::Stop);
        assert_eq!(parse_suggestion("done.").unwrap().proposed_kind, ActionKind::Stop);
        assert!(parse_suggestion("I would click the button").is_err());
        assert!(parse_suggestion("").is_err());
    }

    #[test]
    fn history_lines() {
        let h = vec![
            HistoryEntry { intent: "Click A".into(), kind: ActionKind::Click, fault: None },
            HistoryEntry { intent: "Type \"x\"".into(), kind: ActionKind::Type, fault: Some("no focused textfield".into()) },
        ];
        assert_eq!(
            history_text(&h),
            "1. CLICK: Click A -> ok\n2. TYPE: Type \"x\" -> failed: no focused textfield\n"
        );
        assert_eq!(history_text(&[]), "(none)\n");
    }
}

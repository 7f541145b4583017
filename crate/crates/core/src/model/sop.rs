use serde::{Deserialize, Serialize};
use std::fmt;

pub const HANDOFF_TOKEN: &str = "[HANDOFF]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SopSource {
    Human,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SopStep {
    pub ordinal: usize,
    pub text: String,
    /// Control passes to a human before this step runs.
    #[serde(default)]
    pub handoff: bool,
}

/// Standard operating procedure: ordered natural-language steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sop {
    pub steps: Vec<SopStep>,
    pub source: SopSource,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SopError {
    #[error("no numbered steps found")]
    EmptySop,
    #[error("step numbering skips: expected {expected}, found {found}")]
    NonContiguousNumbering { expected: usize, found: usize },
    #[error("step {0} has no text")]
    EmptyStep(usize),
}

impl Sop {
    pub fn step(&self, ordinal: usize) -> Option<&SopStep> {
        ordinal
            .checked_sub(1)
            .and_then(|i| self.steps.get(i))
            .filter(|s| s.ordinal == ordinal)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn to_markdown(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Sop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            if s.handoff {
                writeln!(f, "{}. {} {}", s.ordinal, HANDOFF_TOKEN, s.text)?;
            } else {
                writeln!(f, "{}. {}", s.ordinal, s.text)?;
            }
        }
        Ok(())
    }
}

/// Parses a numbered markdown list (`1. Click Login`) into an SOP.
///
/// Lines that are not numbered items are ignored, so prose around the list
/// (as models tend to produce) is tolerated.
pub fn parse_sop(text: &str) -> Result<Sop, SopError> {
    let mut steps = Vec::new();
    for line in text.lines() {
        let Some((ordinal, rest)) = numbered_item(line) else {
            continue;
        };
        let expected = steps.len() + 1;
        if ordinal != expected {
            return Err(SopError::NonContiguousNumbering {
                expected,
                found: ordinal,
            });
        }
        let handoff = rest.contains(HANDOFF_TOKEN);
        let text = rest
            .replace(HANDOFF_TOKEN, " ")
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        if text.is_empty() {
            return Err(SopError::EmptyStep(ordinal));
        }
        steps.push(SopStep {
            ordinal,
            text,
            handoff,
        });
    }
    if steps.is_empty() {
        return Err(SopError::EmptySop);
    }
    Ok(Sop {
        steps,
        source: SopSource::Human,
    })
}

fn numbered_item(line: &str) -> Option<(usize, &str)> {
    let line = line.trim_start();
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits > 6 {
        return None;
    }
    let rest = &line[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    if !rest.starts_with(char::is_whitespace) && !rest.is_empty() {
        return None;
    }
    Some((line[..digits].parse().ok()?, rest.trim()))
}

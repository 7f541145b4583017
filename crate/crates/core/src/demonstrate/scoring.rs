use super::matching::best_matching;
use crate::fm::{parse_verdict, Backend, FmError, FmRequest};
use crate::model::Sop;
use crate::prompts;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Token-F1 a candidate/reference step pair needs to count as a match.
pub const MATCH_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SopScore {
    /// Reference steps with no matching candidate step.
    pub n_missing: usize,
    /// Candidate steps with no matching reference step.
    pub n_incorrect: usize,
    /// Candidate step count.
    pub n_total: usize,
    pub n_reference: usize,
    pub precision: f64,
    pub recall: f64,
    pub correct: bool,
    /// Matched `(candidate, reference)` ordinals.
    pub matches: Vec<(usize, usize)>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("reference SOP is empty")]
    EmptyReference,
    #[error(transparent)]
    Fm(#[from] FmError),
    #[error("judge answered neither yes nor no: {0:?}")]
    NoVerdict(String),
}

pub enum SopJudge<'a> {
    Deterministic,
    /// Pairwise equivalence and overall correctness asked of a model.
    Fm {
        backend: &'a dyn Backend,
        description: &'a str,
    },
}

/// Lowercased alphanumeric tokens.
pub fn normalize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Multiset token overlap F1.
pub fn token_f1(a: &str, b: &str) -> f64 {
    let (a, b) = (normalize(a), normalize(b));
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in &a {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0;
    for t in &b {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / a.len() as f64;
    let r = common as f64 / b.len() as f64;
    2.0 * p * r / (p + r)
}

/// Token-F1 weight of every eligible `(candidate, reference)` pair.
pub fn overlap_matrix(candidate: &Sop, reference: &Sop) -> Vec<Vec<Option<f64>>> {
    candidate
        .steps
        .iter()
        .map(|c| {
            reference
                .steps
                .iter()
                .map(|r| {
                    let f = token_f1(&c.text, &r.text);
                    (f >= MATCH_THRESHOLD).then_some(f)
                })
                .collect()
        })
        .collect()
}

fn ask(backend: &dyn Backend, tag: &str, text: String) -> Result<bool, ScoreError> {
    let request = FmRequest::new(tag)
        .system(prompts::DEMONSTRATE_SYSTEM.text)
        .user(text, Vec::new());
    let reply = backend.complete(&request)?.text;
    parse_verdict(&reply).ok_or(ScoreError::NoVerdict(reply))
}

pub fn score_sop(candidate: &Sop, reference: &Sop, judge: &SopJudge) -> Result<SopScore, ScoreError> {
    if reference.is_empty() {
        return Err(ScoreError::EmptyReference);
    }
    let weights = match judge {
        SopJudge::Deterministic => overlap_matrix(candidate, reference),
        SopJudge::Fm { backend, .. } => {
            let mut rows = Vec::with_capacity(candidate.len());
            for c in &candidate.steps {
                let mut row = Vec::with_capacity(reference.len());
                for r in &reference.steps {
                    let text = prompts::DEMONSTRATE_STEP_MATCH
                        .fill(&[("candidate", &c.text), ("reference", &r.text)]);
                    row.push(ask(*backend, "demonstrate.step_match", text)?.then_some(0.0));
                }
                rows.push(row);
            }
            rows
        }
    };
    let pairs = best_matching(&weights);
    let n_total = candidate.len();
    let n_reference = reference.len();
    let n_missing = n_reference - pairs.len();
    let n_incorrect = n_total - pairs.len();
    let correct = match judge {
        SopJudge::Deterministic => n_missing == 0,
        SopJudge::Fm {
            backend,
            description,
        } => {
            let text = prompts::DEMONSTRATE_CORRECTNESS.fill(&[
                ("description", description),
                ("reference", &reference.to_markdown()),
                ("candidate", &candidate.to_markdown()),
            ]);
            ask(*backend, "demonstrate.correctness", text)?
        }
    };
    Ok(SopScore {
        n_missing,
        n_incorrect,
        n_total,
        n_reference,
        precision: if n_total == 0 {
            0.0
        } else {
            (n_total - n_incorrect) as f64 / n_total as f64
        },
        recall: (n_reference - n_missing) as f64 / n_reference as f64,
        correct,
        matches: pairs
            .into_iter()
            .map(|(c, r)| (candidate.steps[c].ordinal, reference.steps[r].ordinal))
            .collect(),
    })
}

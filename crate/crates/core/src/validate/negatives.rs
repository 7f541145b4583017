use super::checks::Subject;
use super::Constraint;
use crate::model::{Action, State, Trace, TraceItem};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Negatives per positive for completion, trajectory and constraint sets.
pub const DEFAULT_RATIO: usize = 1;
/// Negatives per positive for actuation sets.
pub const ACTUATION_RATIO: usize = 3;

pub fn default_ratio(task: Subject) -> usize {
    match task {
        Subject::Actuation => ACTUATION_RATIO,
        _ => DEFAULT_RATIO,
    }
}

/// A trace plus what judges need to know about its workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTrace {
    pub trace: Trace,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sop: Option<String>,
    /// Site reference for deterministic judges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<String>,
}

/// One labeled evaluation item. Actuation items are three-item traces
/// `(s, a, s')`; constraint items are single-state traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub task: Subject,
    pub trace: Trace,
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

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NegativeError {
    #[error("trace {index} ({workflow_id}) has {states} states; too short for {task} negatives")]
    TooShort {
        index: usize,
        workflow_id: String,
        states: usize,
        task: Subject,
    },
    #[error("ratio must be at least 1")]
    Ratio,
    #[error("constraint items come from gen_constraint_set")]
    ConstraintTask,
}

fn item(src: &SourceTrace, id: String, task: Subject, trace: Trace, label: bool, provenance: String) -> EvalItem {
    EvalItem {
        id,
        task,
        trace,
        label,
        provenance,
        description: src.description.clone(),
        sop: src.sop.clone(),
        constraint: None,
        site: src.site.clone(),
    }
}

fn pairs(t: &Trace) -> (State, Vec<(Action, State)>) {
    let mut it = t.items.iter();
    let Some(TraceItem::State(first)) = it.next() else {
        panic!("trace must start with a state");
    };
    let mut out = Vec::new();
    while let (Some(TraceItem::Action(a)), Some(TraceItem::State(s))) = (it.next(), it.next()) {
        out.push((a.clone(), s.clone()));
    }
    (first.clone(), out)
}

fn same_action(a: &Action, b: &Action) -> bool {
    Action { ts_ms: 0, ..a.clone() } == Action { ts_ms: 0, ..b.clone() }
}

/// Rebuilds a trace from steps, reusing `stamps` (item timestamps by position)
/// and renumbering states.
fn rebuild(workflow_id: &str, first: State, steps: Vec<(Action, State)>, stamps: Option<&[u64]>) -> Trace {
    let mut t = Trace::new(workflow_id, first);
    for (a, s) in steps {
        t.push(a, s);
    }
    for (i, it) in t.items.iter_mut().enumerate() {
        match it {
            TraceItem::State(s) => {
                s.index = i / 2;
                if let Some(ts) = stamps {
                    s.ts_ms = ts[i];
                }
            }
            TraceItem::Action(a) => {
                if let Some(ts) = stamps {
                    a.ts_ms = ts[i];
                }
            }
        }
    }
    t
}

fn distinct_actions(steps: &[(Action, State)]) -> bool {
    steps.iter().any(|(a, _)| !same_action(a, &steps[0].0))
}

/// Shuffled steps; the action order always differs from the original.
pub fn shuffle_negative(trace: &Trace, rng: &mut ChaCha8Rng) -> Option<Trace> {
    let (first, steps) = pairs(trace);
    if steps.len() < 2 || !distinct_actions(&steps) {
        return None;
    }
    let original: Vec<Action> = steps.iter().map(|(a, _)| a.clone()).collect();
    let mut shuffled = steps;
    for i in (1..shuffled.len()).rev() {
        let j = rng.random_range(0..=i);
        shuffled.swap(i, j);
    }
    let unchanged = shuffled.iter().zip(&original).all(|((a, _), b)| same_action(a, b));
    if unchanged {
        let i = (0..shuffled.len() - 1)
            .find(|&i| !same_action(&shuffled[i].0, &shuffled[i + 1].0))
            .expect("two distinct actions imply a distinct adjacent pair");
        shuffled.swap(i, i + 1);
    }
    let stamps: Vec<u64> = trace.items.iter().map(TraceItem::ts_ms).collect();
    Some(rebuild(&trace.workflow_id, first, shuffled, Some(&stamps)))
}

/// Drops between one and all interior `(action, state)` pairs; the first and
/// last states survive.
pub fn deletion_negative(trace: &Trace, rng: &mut ChaCha8Rng) -> Option<Trace> {
    let (first, steps) = pairs(trace);
    let interior = steps.len().checked_sub(1).filter(|&n| n > 0)?;
    let d = rng.random_range(1..=interior);
    let mut drop = sample(rng, interior, d).into_vec();
    drop.sort_unstable();
    let kept = steps
        .into_iter()
        .enumerate()
        .filter(|(i, _)| drop.binary_search(i).is_err())
        .map(|(_, p)| p)
        .collect();
    Some(rebuild(&trace.workflow_id, first, kept, None))
}

/// Labeled positives and seeded negatives for one task.
///
/// * actuation: every non-stop `(s, a, s')` is a positive; each negative copies a
///   uniformly drawn positive with `s'` replaced by `s`,
/// * completion: full traces against prefixes of `k` states, `1 <= k < n`,
/// * trajectory: full traces against shuffled or thinned copies.
pub fn gen_negatives(
    sources: &[SourceTrace],
    task: Subject,
    seed: u64,
    ratio: usize,
) -> Result<Vec<EvalItem>, NegativeError> {
    if ratio == 0 {
        return Err(NegativeError::Ratio);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let too_short = |index: usize, t: &Trace| NegativeError::TooShort {
        index,
        workflow_id: t.workflow_id.clone(),
        states: t.state_count(),
        task,
    };
    match task {
        Subject::Constraint => return Err(NegativeError::ConstraintTask),
        Subject::Actuation => {
            let mut positives = Vec::new();
            for (i, src) in sources.iter().enumerate() {
                for (k, (s, a, s2)) in src.trace.steps().into_iter().enumerate() {
                    if a.kind == crate::model::ActionKind::Stop {
                        continue;
                    }
                    let mut t = Trace::new(&src.trace.workflow_id, s.clone());
                    t.push(a.clone(), s2.clone());
                    positives.push((i, k, t));
                }
            }
            let mut negatives = Vec::new();
            for j in 0..positives.len() * ratio {
                let (i, k, p) = &positives[rng.random_range(0..positives.len())];
                let (s, a, s2) = p.steps()[0];
                let mut same = s.clone();
                same.index = s2.index;
                same.ts_ms = s2.ts_ms;
                let mut t = Trace::new(&p.workflow_id, s.clone());
                t.push(a.clone(), same);
                negatives.push(item(
                    &sources[*i],
                    format!("actuation-{i:03}-{k:02}-n{j:04}"),
                    task,
                    t,
                    false,
                    format!("negative: after-state replaced by before-state of step {}", k + 1),
                ));
            }
            for (i, k, t) in positives {
                out.push(item(&sources[i], format!("actuation-{i:03}-{k:02}-p"), task, t, true, "positive".into()));
            }
            out.extend(negatives);
        }
        Subject::Completion => {
            for (i, src) in sources.iter().enumerate() {
                let n = src.trace.state_count();
                if n < 2 {
                    return Err(too_short(i, &src.trace));
                }
                out.push(item(src, format!("completion-{i:03}-p"), task, src.trace.clone(), true, "positive".into()));
                for j in 0..ratio {
                    let k = rng.random_range(1..n);
                    out.push(item(
                        src,
                        format!("completion-{i:03}-n{j}"),
                        task,
                        src.trace.truncated(k),
                        false,
                        format!("negative: truncated to {k} of {n} states"),
                    ));
                }
            }
        }
        Subject::Trajectory => {
            for (i, src) in sources.iter().enumerate() {
                out.push(item(src, format!("trajectory-{i:03}-p"), task, src.trace.clone(), true, "positive".into()));
                for j in 0..ratio {
                    let prefer_shuffle = rng.random_bool(0.5);
                    let attempt = |shuffle: bool, rng: &mut ChaCha8Rng| {
                        if shuffle {
                            shuffle_negative(&src.trace, rng).map(|t| (t, "shuffled".to_string()))
                        } else {
                            deletion_negative(&src.trace, rng).map(|t| {
                                let d = (src.trace.items.len() - t.items.len()) / 2;
                                (t, format!("deleted {d} step(s)"))
                            })
                        }
                    };
                    let (t, how) = attempt(prefer_shuffle, &mut rng)
                        .or_else(|| attempt(!prefer_shuffle, &mut rng))
                        .ok_or_else(|| too_short(i, &src.trace))?;
                    out.push(item(src, format!("trajectory-{i:03}-n{j}"), task, t, false, format!("negative: {how}")));
                }
            }
        }
    }
    Ok(out)
}

/// A trace with the constraint for each SOP step and the index of the state
/// where that step begins.
#[derive(Debug, Clone)]
pub struct ConstraintSource {
    pub source: SourceTrace,
    pub constraints: Vec<Constraint>,
    pub step_starts: Vec<usize>,
}

/// Positives pair each step's constraint with the state where the step begins;
/// negatives pair it with an earlier state, drawn uniformly among those where
/// the constraint fails. Steps that begin at the first state, or that have no
/// such earlier state, yield no items.
pub fn gen_constraint_set(
    sources: &[ConstraintSource],
    seed: u64,
    ratio: usize,
) -> Result<Vec<EvalItem>, NegativeError> {
    if ratio == 0 {
        return Err(NegativeError::Ratio);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (i, cs) in sources.iter().enumerate() {
        let states: Vec<&State> = cs.source.trace.states().collect();
        for (k, (c, &start)) in cs.constraints.iter().zip(&cs.step_starts).enumerate() {
            if start == 0 || start >= states.len() {
                continue;
            }
            let single = |s: &State, id: String, label: bool, provenance: String| {
                let mut e = item(
                    &cs.source,
                    id,
                    Subject::Constraint,
                    Trace::new(&cs.source.trace.workflow_id, s.clone()),
                    label,
                    provenance,
                );
                e.constraint = Some(c.to_string());
                e
            };
            out.push(single(
                states[start],
                format!("constraint-{i:03}-{k:02}-p"),
                true,
                format!("positive: step {} at state {start}", k + 1),
            ));
            let violating: Vec<usize> = (0..start).filter(|&e| !c.evaluate(states[e]).verdict).collect();
            if violating.is_empty() {
                continue;
            }
            for j in 0..ratio {
                let earlier = violating[rng.random_range(0..violating.len())];
                out.push(single(
                    states[earlier],
                    format!("constraint-{i:03}-{k:02}-n{j}"),
                    false,
                    format!("negative: step {} at earlier state {earlier}", k + 1),
                ));
            }
        }
    }
    Ok(out)
}

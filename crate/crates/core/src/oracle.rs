//! Scripted stand-ins for the model that answer from the fixture sites'
//! ground truth, plus dataset builders over the same fixtures.
//!
//! An [`Oracle`] reads the prompt, recovers the workflow from its task line
//! and the screen from image digests, and answers as a perfect model would.
//! Recording it through a [`RecordBackend`] produces the shipped cassettes.

use crate::demonstrate::{score_sop, token_f1, SopJudge, MATCH_THRESHOLD};
use crate::fm::{Backend, FmError, FmRequest, RecordBackend, ScriptedProvider};
use crate::ground::{BoxSource, GroundingSample};
use crate::model::{parse_sop, ActionKind, ElementRole, MemScreens, Screenshots, Sop, State, Trace};
use crate::raster::digest;
use crate::sim::{fixtures, oracle_trace, Environment, SimEnv, SiteSpec, WorkflowSpec};
use crate::validate::{
    check_completion, check_trajectory, gen_constraint_set, gen_negatives, parse_action_text, ConstraintSource,
    EvalItem, Judge, NegativeError, SourceTrace, Subject, ACTUATION_RATIO, DEFAULT_RATIO,
};
use regex::Regex;
use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

/// States by screenshot digest.
#[derive(Debug, Clone, Default)]
pub struct ScreenIndex {
    states: HashMap<String, State>,
}

impl ScreenIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, state: &State, png: &[u8]) {
        self.states.entry(digest(png)).or_insert_with(|| state.clone());
    }

    pub fn add_trace(&mut self, trace: &Trace, screens: &dyn Screenshots) {
        for s in trace.states() {
            if let Some(png) = screens.load(&s.screenshot_ref) {
                self.add(s, &png);
            }
        }
    }

    pub fn get(&self, digest: &str) -> Option<&State> {
        self.states.get(digest)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Every screen the fixture workflows reach, with or without their SOPs.
    pub fn fixtures() -> Self {
        let mut index = Self::new();
        for (spec, wf) in fixtures::workflows() {
            let w = spec.workflow(&wf).expect("listed workflow");
            for steps in [agent_steps(w, true), agent_steps(w, false)] {
                let mut env = SimEnv::new(spec.clone());
                let first = env.observe();
                index.add(&first.state, &first.screenshot);
                for s in steps {
                    match env.apply(&s.to_action()) {
                        Ok(obs) => index.add(&obs.state, &obs.screenshot),
                        Err(_) => break,
                    }
                }
            }
        }
        index
    }
}

/// How the scripted model behaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Always right.
    Faithful,
    /// Never suggests a workflow's final step; clicks static content instead.
    OmitFinal,
}

#[derive(Clone)]
pub struct Oracle {
    index: Arc<ScreenIndex>,
    mode: OracleMode,
}

/// Oracle steps an agent would take. Without an SOP the step it cannot
/// infer from the description is missing.
pub fn agent_steps(w: &WorkflowSpec, with_sop: bool) -> Vec<&crate::sim::OracleStep> {
    w.oracle
        .iter()
        .enumerate()
        .filter(|(i, _)| with_sop || w.needs_sop_at != Some(*i))
        .map(|(_, s)| s)
        .collect()
}

fn after<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(prefix)).map(str::trim)
}

/// Lines between `start` (exclusive) and the next blank line.
fn block<'a>(text: &'a str, start: &str) -> Vec<&'a str> {
    text.split_once(start)
        .map(|(_, rest)| {
            rest.trim_start_matches('\n')
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .collect()
        })
        .unwrap_or_default()
}

fn by_description(description: &str) -> Option<(Arc<SiteSpec>, WorkflowSpec)> {
    fixtures::workflows().into_iter().find_map(|(spec, id)| {
        let w = spec.workflow(&id)?.clone();
        (w.description == description).then_some((spec, w))
    })
}

fn legend_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"^\[(\d+)\]\s+(\w+)?(?:\s*"(.*)")?"#).expect("static regex"))
}

fn verdict(yes: bool, why: &str) -> String {
    format!("{}\n{why}", if yes { "YES" } else { "NO" })
}

fn fail(message: impl Into<String>) -> FmError {
    FmError::Scripted(message.into())
}

impl Oracle {
    pub fn new(index: Arc<ScreenIndex>, mode: OracleMode) -> Self {
        Self { index, mode }
    }

    pub fn fixtures(mode: OracleMode) -> Self {
        static INDEX: OnceLock<Arc<ScreenIndex>> = OnceLock::new();
        Self::new(INDEX.get_or_init(|| Arc::new(ScreenIndex::fixtures())).clone(), mode)
    }

    pub fn provider(&self) -> ScriptedProvider {
        let me = self.clone();
        let id = match self.mode {
            OracleMode::Faithful => "oracle",
            OracleMode::OmitFinal => "oracle-omit-final",
        };
        ScriptedProvider::new(id, move |r| me.answer(r))
    }

    fn screen(&self, request: &FmRequest, n: usize) -> Result<&State, FmError> {
        let img = request.images().nth(n).ok_or_else(|| fail("request has too few images"))?;
        self.index
            .get(&img.digest())
            .ok_or_else(|| fail(format!("unknown screen {}", &img.digest()[..16])))
    }

    pub fn answer(&self, request: &FmRequest) -> Result<String, FmError> {
        let text = request.full_text();
        let tag = request.tag.as_str();
        match tag {
            "execute.next_action" => self.next_action(request, &text),
            "execute.decompose" => decompose(&text),
            "ground.som" => ground_som(&text),
            "ground.direct" => self.ground_direct(request, &text),
            "validate.actuation" => {
                let same = request.images().nth(0).map(|i| i.digest()) == request.images().nth(1).map(|i| i.digest());
                Ok(verdict(
                    !same,
                    if same { "The screen did not change." } else { "The screen changed as the action intended." },
                ))
            }
            "validate.constraint" => {
                let state = self.screen(request, 0)?;
                let c: crate::validate::Constraint = after(&text, "Condition: ")
                    .ok_or_else(|| fail("no condition"))?
                    .parse()
                    .map_err(|e| fail(format!("condition: {e}")))?;
                let holds = c.evaluate(state).verdict;
                Ok(verdict(holds, if holds { "The condition holds." } else { "The condition does not hold." }))
            }
            "validate.completion" | "validate.trajectory" => judge_replay(tag, &text),
            "demonstrate.step_match" => {
                let a = after(&text, "Step A: ").unwrap_or("");
                let b = after(&text, "Step B: ").unwrap_or("");
                let same = token_f1(a, b) >= MATCH_THRESHOLD;
                Ok(verdict(same, if same { "Same interaction." } else { "Different interactions." }))
            }
            "demonstrate.correctness" => {
                let reference = parse_sop(&block(&text, "Reference SOP:").join("\n")).map_err(|e| fail(e.to_string()))?;
                let candidate = parse_sop(&block(&text, "Generated SOP:").join("\n")).map_err(|e| fail(e.to_string()))?;
                let s = score_sop(&candidate, &reference, &SopJudge::Deterministic).map_err(|e| fail(e.to_string()))?;
                Ok(verdict(s.correct, if s.correct { "Every step is covered." } else { "Steps are missing." }))
            }
            t if t.starts_with("demonstrate.sop.") => synthetic_sop(&t["demonstrate.sop.".len()..], &text),
            other => Err(fail(format!("no oracle answer for {other}"))),
        }
    }

    fn next_action(&self, request: &FmRequest, text: &str) -> Result<String, FmError> {
        let description = after(text, "Task: ").ok_or_else(|| fail("no task line"))?;
        let (_, w) = by_description(description).ok_or_else(|| fail(format!("unknown task {description:?}")))?;
        let with_sop = text.contains("\nSOP:\n");
        let mut steps = agent_steps(&w, with_sop);
        if self.mode == OracleMode::OmitFinal {
            steps.pop();
        }
        let done = text.lines().filter(|l| l.ends_with("-> ok")).count();
        match steps.get(done) {
            Some(s) => {
                let mut line = format!("{}: {}", s.kind.as_str().to_uppercase(), s.intent);
                if let (true, Some(k)) = (with_sop, s.sop_step) {
                    line.push_str(&format!(" [step {k}]"));
                }
                Ok(line)
            }
            None if self.mode == OracleMode::OmitFinal => {
                let state = self.screen(request, 0)?;
                let visible = |role| state.elements.iter().find(|e| e.role == role && e.visible);
                let (e, noun) = visible(ElementRole::Text)
                    .map(|e| (e, "text"))
                    .or_else(|| visible(ElementRole::Other).map(|e| (e, "panel")))
                    .ok_or_else(|| fail(format!("no static content on {}", state.url_or_screen_id)))?;
                Ok(format!("CLICK: Click the \"{}\" {noun}", e.label))
            }
            None => Ok("DONE".into()),
        }
    }

    fn ground_direct(&self, request: &FmRequest, text: &str) -> Result<String, FmError> {
        let state = self.screen(request, 0)?;
        let intent = after(text, "Action: ").ok_or_else(|| fail("no action line"))?;
        let element = intent_target(intent)
            .and_then(|id| state.element(&id))
            .or_else(|| {
                crate::execute::quoted(intent).and_then(|q| state.elements.iter().find(|e| e.visible && e.label == q))
            });
        Ok(match element {
            Some(e) => format!("({},{},{},{})", e.bbox.x, e.bbox.y, e.bbox.width, e.bbox.height),
            None => "I cannot find that element on the screen.".into(),
        })
    }
}

/// Element id an intent refers to in some fixture workflow.
fn intent_target(intent: &str) -> Option<String> {
    fixtures::workflows().into_iter().find_map(|(spec, id)| {
        spec.workflow(&id)?
            .oracle
            .iter()
            .find(|s| s.intent == intent && s.target.is_some())
            .and_then(|s| s.target.clone())
    })
}

fn template_of(id: &str) -> Option<(ElementRole, String)> {
    fixtures::SITE_NAMES
        .iter()
        .filter_map(|n| fixtures::site(n))
        .find_map(|s| s.element_template(id).map(|(_, t)| (t.role, t.label.clone())))
}

fn ground_som(text: &str) -> Result<String, FmError> {
    let intent = after(text, "Action: ").ok_or_else(|| fail("no action line"))?;
    let legend: Vec<(u32, Option<String>, Option<String>)> = block(text, "Labels:")
        .into_iter()
        .filter_map(|l| {
            let c = legend_re().captures(l)?;
            Some((
                c[1].parse().ok()?,
                c.get(2).map(|m| m.as_str().to_string()),
                c.get(3).map(|m| m.as_str().to_string()),
            ))
        })
        .collect();
    let by_template = intent_target(intent).and_then(|id| template_of(&id)).and_then(|(role, label)| {
        legend
            .iter()
            .find(|(_, r, l)| r.as_deref() == Some(role.as_str()) && l.as_deref() == Some(label.as_str()))
    });
    let found = by_template.or_else(|| {
        let q = crate::execute::quoted(intent)?;
        legend.iter().find(|(_, _, l)| l.as_deref() == Some(q))
    });
    Ok(match found {
        Some((n, _, _)) => n.to_string(),
        None => "None of the labeled elements matches.".into(),
    })
}

fn decompose(text: &str) -> Result<String, FmError> {
    let step = after(text, "SOP step: ").ok_or_else(|| fail("no step line"))?;
    for (spec, id) in fixtures::workflows() {
        let w = spec.workflow(&id).expect("listed workflow");
        let Some(sop) = w.sop.as_deref().and_then(|t| parse_sop(t).ok()) else {
            continue;
        };
        if let Some(s) = sop.steps.iter().find(|s| s.text == step) {
            let lines: Vec<String> = w
                .oracle
                .iter()
                .filter(|o| o.sop_step == Some(s.ordinal))
                .map(|o| format!("{}: {}", o.kind.as_str().to_uppercase(), o.intent))
                .collect();
            return Ok(lines.join("\n"));
        }
    }
    let kind = step.split_whitespace().next().and_then(ActionKind::parse).unwrap_or(ActionKind::Click);
    Ok(format!("{}: {step}", kind.as_str().to_uppercase()))
}

/// Replays the listed actions on the fixture site and applies the
/// deterministic completion or trajectory rule.
fn judge_replay(tag: &str, text: &str) -> Result<String, FmError> {
    let description = after(text, "Task: ").ok_or_else(|| fail("no task line"))?;
    let (spec, w) = by_description(description).ok_or_else(|| fail(format!("unknown task {description:?}")))?;
    let actions = block(text, "The agent took these actions:")
        .into_iter()
        .filter(|l| l.trim() != "(none)")
        .map(|l| {
            let body = l.split_once(". ").map(|(_, b)| b).unwrap_or(l);
            parse_action_text(body).ok_or_else(|| fail(format!("unreadable action line {l:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let trace = replay(&spec, &w.id, &actions);
    let screens = MemScreens::new();
    let j = if tag == "validate.completion" {
        check_completion(&trace, description, &screens, Judge::Deterministic, Some(&spec))
    } else {
        let sop = w.sop.as_deref().and_then(|t| parse_sop(t).ok()).ok_or_else(|| fail("workflow has no SOP"))?;
        check_trajectory(&trace, &sop, description, &screens, Judge::Deterministic, Some(&spec))
    }
    .map_err(|e| fail(e.to_string()))?;
    Ok(verdict(j.verdict, &format!("{}.", j.rationale)))
}

/// Applies actions from the entry page; faults leave the state as it was.
pub fn replay(spec: &Arc<SiteSpec>, workflow_id: &str, actions: &[crate::model::Action]) -> Trace {
    let mut env = SimEnv::new(spec.clone());
    let mut current = env.observe().state;
    let mut trace = Trace::new(workflow_id, current.clone());
    for a in actions {
        if a.kind == ActionKind::Stop {
            trace.push(a.clone().at(current.ts_ms), current.clone());
            continue;
        }
        if let Ok(obs) = env.apply(a) {
            current = obs.state;
        }
        let mut s = current.clone();
        s.index = trace.state_count();
        trace.push(a.clone().at(s.ts_ms), s);
    }
    trace
}

fn synthetic_sop(mode: &str, text: &str) -> Result<String, FmError> {
    let description = after(text, "Task: ").ok_or_else(|| fail("no task line"))?;
    let (_, w) = by_description(description).ok_or_else(|| fail(format!("unknown task {description:?}")))?;
    let reference: Sop = w
        .sop
        .as_deref()
        .and_then(|t| parse_sop(t).ok())
        .ok_or_else(|| fail("workflow has no SOP"))?;
    let lines: Vec<String> = match mode {
        "wd+kf+act" => reference.steps.iter().map(|s| s.text.clone()).collect(),
        "wd+kf" => {
            let keep = reference.len().saturating_sub(1).max(1);
            reference.steps.iter().take(keep).map(|s| s.text.clone()).collect()
        }
        _ => vec![description.trim_end_matches('.').to_string()],
    };
    Ok(lines.iter().enumerate().map(|(i, l)| format!("{}. {l}\n", i + 1)).collect())
}

/// Runs `work` against a backend that records the oracle's answers to `path`.
pub fn record_with<T>(
    oracle: &Oracle,
    path: &Path,
    work: impl FnOnce(&dyn Backend) -> T,
) -> Result<T, FmError> {
    let backend = RecordBackend::open(oracle.provider(), path)?;
    Ok(work(&backend))
}

/// Oracle traces of every fixture workflow, without a closing stop, once per
/// jitter seed.
pub fn fixture_sources(jitter_seeds: &[u64]) -> (Vec<SourceTrace>, MemScreens) {
    let mut screens = MemScreens::new();
    let mut out = Vec::new();
    for &seed in jitter_seeds {
        for (spec, id) in fixtures::workflows() {
            let w = spec.workflow(&id).expect("listed workflow");
            let (trace, s) = oracle_trace(&spec, &id, Some(seed), false).expect("fixture oracle runs");
            screens.extend(&s);
            out.push(SourceTrace {
                trace,
                description: w.description.clone(),
                sop: w.sop.clone(),
                site: Some(spec.name.clone()),
            });
        }
    }
    (out, screens)
}

/// Constraint sources for fixture traces: each SOP step begins at the state
/// before its first oracle action.
pub fn constraint_sources(sources: &[SourceTrace]) -> Vec<ConstraintSource> {
    sources
        .iter()
        .filter_map(|src| {
            let spec = fixtures::site_of(&src.trace.workflow_id)?;
            let w = spec.workflow(&src.trace.workflow_id)?;
            let constraints = fixtures::constraints(&w.id)?;
            let step_starts = (1..=constraints.len())
                .map(|k| w.oracle.iter().position(|o| o.sop_step == Some(k)).unwrap_or(usize::MAX))
                .collect();
            Some(ConstraintSource {
                source: src.clone(),
                constraints,
                step_starts,
            })
        })
        .collect()
}

/// The fixture evaluation set: every subject, positives from oracle traces
/// and seeded negatives.
pub fn fixture_evalset(seed: u64, jitter_seeds: &[u64]) -> Result<(Vec<EvalItem>, MemScreens), NegativeError> {
    let (sources, screens) = fixture_sources(jitter_seeds);
    let mut items = gen_negatives(&sources, Subject::Actuation, seed, ACTUATION_RATIO)?;
    items.extend(gen_constraint_set(&constraint_sources(&sources), seed, DEFAULT_RATIO)?);
    items.extend(gen_negatives(&sources, Subject::Completion, seed, DEFAULT_RATIO)?);
    items.extend(gen_negatives(&sources, Subject::Trajectory, seed, DEFAULT_RATIO)?);
    Ok((items, screens))
}

/// One grounding case per click in the fixture oracle traces, deduplicated
/// by screen and target.
pub fn grounding_samples() -> Vec<GroundingSample> {
    let mut out: Vec<GroundingSample> = Vec::new();
    for (spec, id) in fixtures::workflows() {
        let w = spec.workflow(&id).expect("listed workflow");
        let (trace, screens) = oracle_trace(&spec, &id, None, false).expect("fixture oracle runs");
        for ((before, action, _), step) in trace.steps().into_iter().zip(&w.oracle) {
            let Some(target) = action.target.as_deref().filter(|_| action.kind == ActionKind::Click) else {
                continue;
            };
            let Some(el) = before.element(target) else {
                continue;
            };
            let png = screens.load(&before.screenshot_ref).expect("oracle screens are stored");
            let case = format!("{}-{}", &digest(&png)[..8], target);
            if out.iter().any(|s| s.id.ends_with(&case)) {
                continue;
            }
            out.push(GroundingSample {
                id: format!("{:03}-{case}", out.len() + 1),
                screenshot: png,
                boxes: BoxSource::from_state(before),
                target: el.bbox,
                target_id: Some(target.to_string()),
                query: step.intent.clone(),
            });
        }
    }
    out
}

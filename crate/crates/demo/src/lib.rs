//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every function takes and returns plain strings or bytes so the page needs
//! no bundler. JSON results are returned as strings.

use eclair_core::demonstrate::{score_sop, SopJudge};
use eclair_core::execute::{
    run_workflow, AutoDecision, DecisionKind, Event, EventSink, RunHooks, RunInputs, RunPolicy,
};
use eclair_core::fm::{BackendKind, FmConfig};
use eclair_core::ground::{render_set_of_marks, BoxSource};
use eclair_core::model::{parse_sop, Workflow};
use eclair_core::oracle::{Oracle, OracleMode};
use eclair_core::sim::{fixtures, Environment, SimEnv};
use serde_json::json;
use std::sync::Arc;
use wasm_bindgen::prelude::*;

fn fail(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Fixture workflows as a JSON array of `{id, site, description, steps}`.
#[wasm_bindgen]
pub fn workflows() -> String {
    let list: Vec<_> = fixtures::workflows()
        .into_iter()
        .map(|(site, id)| {
            let w = site.workflow(&id).expect("listed workflow exists");
            json!({"id": id, "site": site.name, "description": w.description, "steps": w.oracle.len()})
        })
        .collect();
    serde_json::Value::Array(list).to_string()
}

/// A screenshot annotated with numbered marks.
#[wasm_bindgen]
pub struct MarkedScreen {
    png: Vec<u8>,
    legend: String,
}

#[wasm_bindgen]
impl MarkedScreen {
    #[wasm_bindgen(getter)]
    pub fn png(&self) -> Vec<u8> {
        self.png.clone()
    }

    /// JSON array of `{label, element_id, role, text, bbox}`.
    #[wasm_bindgen(getter)]
    pub fn legend(&self) -> String {
        self.legend.clone()
    }
}

/// Renders set-of-marks over the screen reached after the first `step`
/// oracle actions of a fixture workflow.
#[wasm_bindgen]
pub fn mark_screen(workflow_id: &str, step: usize) -> Result<MarkedScreen, JsError> {
    let spec = fixtures::site_of(workflow_id).ok_or_else(|| fail(format!("unknown workflow {workflow_id:?}")))?;
    let oracle = spec.workflow(workflow_id).map(|w| w.oracle.clone()).unwrap_or_default();
    let mut env = SimEnv::new(spec);
    for s in oracle.iter().take(step) {
        env.apply(&s.to_action()).map_err(fail)?;
    }
    let obs = env.observe();
    let boxes = BoxSource::from_state(&obs.state);
    let map = render_set_of_marks(&obs.screenshot, &boxes).map_err(fail)?;
    let legend: Vec<_> = map
        .entries
        .iter()
        .zip(&boxes.boxes)
        .map(|(e, b)| {
            json!({"label": e.label, "element_id": b.element_id, "role": b.role, "text": b.label, "bbox": e.bbox})
        })
        .collect();
    Ok(MarkedScreen { png: map.image.to_vec(), legend: serde_json::Value::Array(legend).to_string() })
}

/// Scores a candidate SOP against a reference, both in markdown.
#[wasm_bindgen]
pub fn score_sops(candidate: &str, reference: &str) -> Result<String, JsError> {
    let cand = parse_sop(candidate).map_err(fail)?;
    let refr = parse_sop(reference).map_err(fail)?;
    let score = score_sop(&cand, &refr, &SopJudge::Deterministic).map_err(fail)?;
    serde_json::to_string(&score).map_err(fail)
}

/// The reference SOP of a fixture workflow, or an empty string.
#[wasm_bindgen]
pub fn reference_sop(workflow_id: &str) -> String {
    fixtures::site_of(workflow_id)
        .and_then(|s| s.workflow(workflow_id).and_then(|w| w.sop.clone()))
        .unwrap_or_default()
}

/// Runs a fixture workflow against the simulator with the in-process
/// oracle model. `mode` is `faithful` or `omit-final`. Handoffs are approved.
/// Returns `{summary, flagged, events}` as JSON.
#[wasm_bindgen]
pub fn simulate_run(workflow_id: &str, mode: &str, with_sop: bool) -> Result<String, JsError> {
    let mode = match mode {
        "faithful" => OracleMode::Faithful,
        "omit-final" => OracleMode::OmitFinal,
        other => return Err(fail(format!("unknown mode {other:?}"))),
    };
    let spec = fixtures::site_of(workflow_id).ok_or_else(|| fail(format!("unknown workflow {workflow_id:?}")))?;
    let w = spec.workflow(workflow_id).ok_or_else(|| fail("unknown workflow"))?;
    let sop = match (&w.sop, with_sop) {
        (Some(text), true) => Some(parse_sop(text).map_err(fail)?),
        _ => None,
    };
    let constraints = match sop {
        Some(_) => fixtures::constraints(workflow_id).unwrap_or_default(),
        None => Vec::new(),
    };
    let workflow = Workflow::new(&w.id, &w.description, &spec.name);
    let mut config = FmConfig::replay("unused");
    config.backend = BackendKind::Live;
    let backend = config.build(Some(Arc::new(Oracle::fixtures(mode).provider()))).map_err(fail)?;

    let mut events: Vec<Event> = Vec::new();
    let mut decisions = AutoDecision(DecisionKind::Approve);
    let mut env = SimEnv::new(spec.clone());
    let result = run_workflow(
        &RunInputs { run_id: "demo", workflow: &workflow, sop: sop.as_ref(), constraints: &constraints },
        &mut env,
        backend.as_ref(),
        &RunPolicy::default(),
        &mut RunHooks { events: &mut events as &mut dyn EventSink, decisions: &mut decisions, dir: None },
    );
    Ok(json!({"summary": result.summary(), "flagged": result.flagged_actions(), "events": events}).to_string())
}

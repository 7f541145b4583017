use super::render::render_state;
use super::spec::{Effect, ElementTarget, Flag, GoalCondition, SiteSpec, SpecError};
use super::{ActuationFault, Environment, Observation, SimError};
use crate::model::{
    Action, ActionKind, DemonstrationBundle, Element, ElementRole, Frame, MemScreens, State, Trace,
    Workflow,
};
use crate::raster::digest;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

type Key = (String, String);

#[derive(Debug, Clone, PartialEq)]
struct Dyn {
    visible: bool,
    enabled: bool,
    value: Option<String>,
    label: String,
}

#[derive(Debug, Clone, PartialEq)]
struct Live {
    page: String,
    scroll: u32,
    elements: BTreeMap<Key, Dyn>,
    focus: Option<Key>,
}

impl Live {
    fn dyn_mut(&mut self, page: &str, element: &str) -> &mut Dyn {
        self.elements
            .get_mut(&(page.to_string(), element.to_string()))
            .expect("spec validation guarantees effect targets exist")
    }

    fn go(&mut self, page: &str) {
        self.page = page.to_string();
        self.scroll = 0;
        self.focus = None;
    }
}

/// Rendered screens shared by every environment in the process, keyed by
/// viewport and elements. Cleared when it reaches [`RENDER_CACHE_LIMIT`].
fn rendered(key: String, state: &State) -> (String, Arc<Vec<u8>>) {
    static CACHE: OnceLock<Mutex<HashMap<String, (String, Arc<Vec<u8>>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.lock().expect("render cache").get(&key) {
        return hit.clone();
    }
    let png = render_state(state).to_png();
    let value = (digest(&png), Arc::new(png));
    let mut map = cache.lock().expect("render cache");
    if map.len() >= RENDER_CACHE_LIMIT {
        map.clear();
    }
    map.insert(key, value.clone());
    value
}

pub const RENDER_CACHE_LIMIT: usize = 4096;

/// Milliseconds between frames of a simulated screen recording.
pub const RECORDING_FRAME_MS: u64 = 250;

/// Running instance of a [`SiteSpec`].
///
/// Elements scrolled out of the viewport report `visible = false`; their bbox
/// is shifted into viewport coordinates and clamped at the top edge.
pub struct SimEnv {
    spec: Arc<SiteSpec>,
    live: Live,
    clock: u64,
    steps: usize,
    jitter: Option<ChaCha8Rng>,
}

impl SimEnv {
    pub fn new(spec: Arc<SiteSpec>) -> Self {
        let mut elements = BTreeMap::new();
        let mut focus = None;
        for (pid, page) in &spec.pages {
            for t in &page.elements {
                let key = (pid.clone(), t.id.clone());
                if t.focused {
                    focus = Some(key.clone());
                }
                elements.insert(
                    key,
                    Dyn {
                        visible: t.visible,
                        enabled: t.enabled,
                        value: t.value.clone(),
                        label: t.label.clone(),
                    },
                );
            }
        }
        let live = Live {
            page: spec.entry_page.clone(),
            scroll: 0,
            elements,
            focus,
        };
        Self {
            spec,
            live,
            clock: 0,
            steps: 0,
            jitter: None,
        }
    }

    /// Adds seeded 0-200 ms jitter to every action's duration.
    pub fn with_jitter(mut self, seed: Option<u64>) -> Self {
        self.jitter = seed.map(ChaCha8Rng::seed_from_u64);
        self
    }

    pub fn spec(&self) -> &Arc<SiteSpec> {
        &self.spec
    }

    pub fn page(&self) -> &str {
        &self.live.page
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock
    }

    /// Element snapshot of the current page, without rendering.
    pub fn snapshot(&self) -> State {
        self.snapshot_of(&self.live)
    }

    fn snapshot_of(&self, live: &Live) -> State {
        let vp = self.spec.viewport;
        let page = &self.spec.pages[&live.page];
        let elements = page
            .elements
            .iter()
            .map(|t| {
                let key = (live.page.clone(), t.id.clone());
                let d = &live.elements[&key];
                let mut bbox = t.bbox;
                bbox.y -= live.scroll as f64;
                let in_view = bbox.y >= 0.0 && bbox.bottom() <= vp.height as f64;
                bbox.y = bbox.y.max(0.0);
                Element {
                    element_id: t.id.clone(),
                    role: t.role,
                    label: d.label.clone(),
                    bbox,
                    visible: d.visible && in_view,
                    enabled: d.enabled,
                    focused: live.focus.as_ref() == Some(&key),
                    value: d.value.clone(),
                }
            })
            .collect();
        State {
            index: self.steps,
            ts_ms: self.clock,
            screenshot_ref: String::new(),
            viewport: vp,
            elements,
            url_or_screen_id: live.page.clone(),
        }
    }

    fn duration(&mut self, action: &Action) -> u64 {
        let base = match action.kind {
            ActionKind::Click | ActionKind::Keypress => 800,
            ActionKind::Type => {
                (800 + 20 * action.text.as_deref().unwrap_or("").chars().count() as u64).min(1200)
            }
            ActionKind::Scroll => 900,
            ActionKind::Navigate => 1200,
            ActionKind::Stop => 0,
        };
        base + self
            .jitter
            .as_mut()
            .map(|r| r.random_range(0..=200u64))
            .unwrap_or(0)
    }

    fn click_target(&self, before: &State, action: &Action) -> Result<Option<String>, ActuationFault> {
        if let Some(id) = &action.target {
            let e = before
                .element(id)
                .ok_or_else(|| ActuationFault::new(format!("element {id} is not on the page")))?;
            if !e.visible {
                return Err(ActuationFault::new(format!("element {id} is not visible")));
            }
            if !e.enabled {
                return Err(ActuationFault::new(format!("element {id} is disabled")));
            }
            return Ok(Some(id.clone()));
        }
        let p = action.coordinates.expect("click carries a target or a point");
        let vp = before.viewport;
        if p.x < 0.0 || p.y < 0.0 || p.x > vp.width as f64 || p.y > vp.height as f64 {
            return Err(ActuationFault::new("click outside the viewport"));
        }
        match before.element_at(p) {
            Some(e) if !e.enabled => Err(ActuationFault::new(format!(
                "element {} is disabled",
                e.element_id
            ))),
            Some(e) => Ok(Some(e.element_id.clone())),
            None => Ok(None),
        }
    }

    fn apply_effect(&self, live: &mut Live, rule_page: &str, effect: &Effect) {
        let key = |t: &ElementTarget| {
            let (p, e) = t.resolve(rule_page);
            (p.to_string(), e.to_string())
        };
        match effect {
            Effect::Show(t) => live.dyn_mut(&key(t).0, &key(t).1).visible = true,
            Effect::Hide(t) => live.dyn_mut(&key(t).0, &key(t).1).visible = false,
            Effect::Enable(t) => live.dyn_mut(&key(t).0, &key(t).1).enabled = true,
            Effect::Disable(t) => live.dyn_mut(&key(t).0, &key(t).1).enabled = false,
            Effect::Focus(t) => live.focus = Some(key(t)),
            Effect::SetValue(v) => {
                let (p, e) = key(&v.target());
                live.dyn_mut(&p, &e).value = Some(v.value.clone());
            }
            Effect::SetLabel(v) => {
                let (p, e) = key(&v.target());
                live.dyn_mut(&p, &e).label = v.value.clone();
            }
            Effect::Navigate(p) => live.go(p),
        }
    }

    fn step(&mut self, action: &Action) -> Result<(), ActuationFault> {
        if let Some(p) = action.problems().first() {
            return Err(ActuationFault::new(format!("malformed action: {p}")));
        }
        let before = self.snapshot();
        let page = self.live.page.clone();
        let mut next = self.live.clone();
        let mut trigger: Option<String> = None;
        match action.kind {
            ActionKind::Stop => return Ok(()),
            ActionKind::Click => {
                trigger = self.click_target(&before, action)?;
                let role = trigger
                    .as_deref()
                    .and_then(|id| before.element(id))
                    .map(|e| e.role);
                match (role, &trigger) {
                    (Some(ElementRole::Textfield), Some(id)) => {
                        next.focus = Some((page.clone(), id.clone()))
                    }
                    (Some(ElementRole::Checkbox), Some(id)) => {
                        let d = next.dyn_mut(&page, id);
                        d.value = match d.value.as_deref() {
                            Some("checked") => None,
                            _ => Some("checked".into()),
                        };
                        next.focus = None;
                    }
                    (Some(ElementRole::Text | ElementRole::Image | ElementRole::Other), _) => {}
                    _ => next.focus = None,
                }
            }
            ActionKind::Type => {
                let focused = before
                    .focused()
                    .filter(|e| e.role == ElementRole::Textfield && e.visible && e.enabled)
                    .ok_or_else(|| ActuationFault::new("no focused textfield"))?;
                let id = focused.element_id.clone();
                let d = next.dyn_mut(&page, &id);
                let mut v = d.value.take().unwrap_or_default();
                v.push_str(action.text.as_deref().unwrap_or(""));
                d.value = Some(v);
                trigger = Some(id);
            }
            ActionKind::Keypress => {
                trigger = before.focused().map(|e| e.element_id.clone());
            }
            ActionKind::Scroll => {
                let half = self.spec.viewport.height / 2;
                let max = self.spec.page_height(&page) - self.spec.viewport.height;
                next.scroll = match action.direction_or_url.as_deref().unwrap_or("down") {
                    "down" => (next.scroll + half).min(max),
                    "up" => next.scroll.saturating_sub(half),
                    other => {
                        return Err(ActuationFault::new(format!(
                            "unknown scroll direction {other:?}"
                        )))
                    }
                };
            }
            ActionKind::Navigate => {
                let to = action.direction_or_url.as_deref().unwrap_or("");
                if !self.spec.pages.contains_key(to) {
                    return Err(ActuationFault::new(format!("unknown page {to:?}")));
                }
                next.go(to);
            }
        }
        let implicit = self.snapshot_of(&next);
        let key = action.text.as_deref();
        let firing: Vec<_> = self.spec.pages[&page]
            .transitions
            .iter()
            .filter(|r| {
                r.on.kind == action.kind
                    && (r.on.element.is_none() || r.on.element == trigger)
                    && (r.on.key.is_none()
                        || r.on.key.as_deref().map(str::to_ascii_lowercase)
                            == key.map(str::to_ascii_lowercase))
                    && r
                        .guard
                        .as_ref()
                        .is_none_or(|g| g.0.evaluate(&implicit).verdict)
            })
            .collect();
        for rule in firing {
            for effect in &rule.effects {
                self.apply_effect(&mut next, &page, effect);
            }
        }
        let d = self.duration(action);
        self.live = next;
        self.clock += d;
        self.steps += 1;
        Ok(())
    }

    pub fn goal_holds(&self, goal: &GoalCondition) -> bool {
        let get = |p: &str, e: &str| self.live.elements.get(&(p.to_string(), e.to_string()));
        match goal {
            GoalCondition::Page(p) => self.live.page == *p,
            GoalCondition::Value {
                page,
                element,
                equals,
            } => get(page, element).is_some_and(|d| d.value.as_deref().unwrap_or("") == equals),
            GoalCondition::Flag {
                page,
                element,
                flag,
                equals,
            } => {
                let actual = match flag {
                    Flag::Visible => get(page, element).is_some_and(|d| d.visible),
                    Flag::Enabled => get(page, element).is_some_and(|d| d.enabled),
                    Flag::Focused => {
                        self.live.focus == Some((page.to_string(), element.to_string()))
                    }
                };
                actual == *equals
            }
        }
    }

    /// Whether every goal of `workflow_id` holds in the current state.
    pub fn oracle_goal(&self, workflow_id: &str) -> Result<bool, SimError> {
        let w = self
            .spec
            .workflow(workflow_id)
            .ok_or_else(|| SimError::UnknownWorkflow(workflow_id.to_string()))?;
        Ok(w.goals.iter().all(|g| self.goal_holds(g)))
    }
}

impl Environment for SimEnv {
    fn environment_id(&self) -> &str {
        &self.spec.name
    }

    fn goal_reached(&self, workflow_id: &str) -> Option<bool> {
        self.oracle_goal(workflow_id).ok()
    }

    fn observe(&mut self) -> Observation {
        let mut state = self.snapshot();
        let key = serde_json::to_string(&(&state.viewport, &state.elements))
            .expect("snapshots serialize");
        let (hash, png) = rendered(key, &state);
        state.screenshot_ref = format!("screenshots/{}.png", &hash[..16]);
        Observation {
            state,
            screenshot: png,
        }
    }

    fn apply(&mut self, action: &Action) -> Result<Observation, ActuationFault> {
        self.step(action)?;
        Ok(self.observe())
    }
}

/// Replays a trace's actions from the entry page and checks the workflow goal.
pub fn oracle_trace_complete(trace: &Trace, spec: &Arc<SiteSpec>) -> Result<bool, SimError> {
    let mut env = SimEnv::new(spec.clone());
    env.oracle_goal(&trace.workflow_id)?;
    for a in trace.actions() {
        let _ = env.step(a);
    }
    env.oracle_goal(&trace.workflow_id)
}

/// Executes a workflow's oracle actions, optionally closing with `stop`.
///
/// Each action is stamped midway between the states around it.
pub fn oracle_trace(
    spec: &Arc<SiteSpec>,
    workflow_id: &str,
    jitter_seed: Option<u64>,
    with_stop: bool,
) -> Result<(Trace, MemScreens), SimError> {
    let w = spec
        .workflow(workflow_id)
        .ok_or_else(|| SimError::UnknownWorkflow(workflow_id.to_string()))?;
    let mut env = SimEnv::new(spec.clone()).with_jitter(jitter_seed);
    let mut screens = MemScreens::new();
    let first = env.observe();
    screens.insert(first.state.screenshot_ref.clone(), first.screenshot);
    let mut trace = Trace::new(workflow_id, first.state);
    let mut actions: Vec<Action> = w.oracle.iter().map(|s| s.to_action()).collect();
    if with_stop {
        actions.push(Action::stop());
    }
    for (i, a) in actions.into_iter().enumerate() {
        let t0 = env.clock_ms();
        let obs = env.apply(&a).map_err(|f| SpecError {
            location: format!("workflow {workflow_id} oracle[{i}]"),
            message: f.reason,
        })?;
        let mut state = obs.state;
        state.index = trace.state_count();
        screens.insert(state.screenshot_ref.clone(), obs.screenshot);
        trace.push(a.at((t0 + state.ts_ms) / 2), state);
    }
    Ok((trace, screens))
}

/// Simulated screen recording of a workflow's oracle actions: frames every
/// 250 ms from the start until one second after the last state.
pub fn record_demonstration(
    spec: &Arc<SiteSpec>,
    workflow_id: &str,
    jitter_seed: Option<u64>,
) -> Result<DemonstrationBundle, SimError> {
    let (trace, screens) = oracle_trace(spec, workflow_id, jitter_seed, false)?;
    let w = spec.workflow(workflow_id).expect("oracle_trace checked the id");
    let states: Vec<&State> = trace.states().collect();
    let end = states.last().map(|s| s.ts_ms).unwrap_or(0) + 1000;
    let mut frames = Vec::new();
    let mut t = 0;
    while t <= end {
        let s = states
            .iter()
            .rev()
            .find(|s| s.ts_ms <= t)
            .expect("first state is at 0 ms");
        let png = crate::model::Screenshots::load(&screens, &s.screenshot_ref)
            .expect("every state has a screenshot");
        frames.push(Frame {
            ts_ms: t,
            png: png.as_ref().clone(),
        });
        t += RECORDING_FRAME_MS;
    }
    let sop = match &w.sop {
        Some(text) => Some(crate::model::parse_sop(text).map_err(|e| SpecError {
            location: format!("workflow {workflow_id} sop"),
            message: e.to_string(),
        })?),
        None => None,
    };
    Ok(DemonstrationBundle {
        workflow: Workflow::new(&w.id, &w.description, &spec.name),
        frames,
        action_log: trace.actions().cloned().collect(),
        sop,
    })
}

//! Declarative site descriptions, loaded from YAML.
//!
//! ```yaml
//! viewport: {width: 1280, height: 720}
//! entry_page: login
//! pages:
//!   login:
//!     title: Sign in
//!     elements:
//!       - {id: username, role: textfield, label: Username, bbox: {x: 100, y: 120, width: 320, height: 40}}
//!       - {id: login_btn, role: button, label: Log in, enabled: false, bbox: {...}}
//!     transitions:
//!       - on: {kind: type, element: username}
//!         effects: [{enable: login_btn}]
//!       - on: {kind: click, element: login_btn}
//!         guard: '(text_equals username "alice")'
//!         effects: [{navigate: dashboard}]
//! workflows:
//!   - id: login_basic
//!     description: Log in as alice
//!     goals: [{page: dashboard}]
//!     sop: |
//!       1. Click the username field
//!     oracle:
//!       - {kind: click, target: username, intent: Click the username field, sop_step: 1}
//! ```

use crate::model::{Action, ActionKind, BoundingBox, ElementRole, Viewport};
use crate::validate::Constraint;
use serde::{Deserialize, Deserializer, Serialize};
use std::collections::{BTreeMap, HashSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSpec {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub viewport: Viewport,
    pub entry_page: String,
    pub pages: BTreeMap<String, PageSpec>,
    #[serde(default)]
    pub workflows: Vec<WorkflowSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PageSpec {
    #[serde(default)]
    pub title: String,
    /// Scrollable height; defaults to the viewport height.
    #[serde(default)]
    pub height: Option<u32>,
    #[serde(default)]
    pub elements: Vec<ElementTemplate>,
    #[serde(default)]
    pub transitions: Vec<TransitionRule>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementTemplate {
    pub id: String,
    pub role: ElementRole,
    #[serde(default)]
    pub label: String,
    /// Page coordinates.
    pub bbox: BoundingBox,
    #[serde(default = "yes")]
    pub visible: bool,
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub focused: bool,
    #[serde(default)]
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trigger {
    pub kind: ActionKind,
    /// Clicked element, or the focused element for `type`/`keypress`.
    #[serde(default)]
    pub element: Option<String>,
    /// Key name for `keypress` rules.
    #[serde(default)]
    pub key: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Guard(pub Constraint);

impl Serialize for Guard {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for Guard {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map(Guard).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionRule {
    pub on: Trigger,
    #[serde(default)]
    pub guard: Option<Guard>,
    pub effects: Vec<Effect>,
}

/// An element on the rule's own page (bare id) or on a named page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ElementTarget {
    Here(String),
    On { page: String, element: String },
}

impl ElementTarget {
    pub fn resolve<'a>(&'a self, current_page: &'a str) -> (&'a str, &'a str) {
        match self {
            ElementTarget::Here(e) => (current_page, e),
            ElementTarget::On { page, element } => (page, element),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetValue {
    /// Defaults to the rule's own page.
    #[serde(default)]
    pub page: Option<String>,
    pub element: String,
    pub value: String,
}

impl SetValue {
    pub fn target(&self) -> ElementTarget {
        match &self.page {
            Some(page) => ElementTarget::On {
                page: page.clone(),
                element: self.element.clone(),
            },
            None => ElementTarget::Here(self.element.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Show(ElementTarget),
    Hide(ElementTarget),
    Enable(ElementTarget),
    Disable(ElementTarget),
    Focus(ElementTarget),
    SetValue(SetValue),
    SetLabel(SetValue),
    Navigate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    Visible,
    Enabled,
    Focused,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GoalCondition {
    /// The current page.
    Page(String),
    Value {
        page: String,
        element: String,
        equals: String,
    },
    Flag {
        page: String,
        element: String,
        flag: Flag,
        equals: bool,
    },
}

/// One ground-truth step of a workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleStep {
    pub kind: ActionKind,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub arg: Option<String>,
    /// How a person would phrase the action.
    pub intent: String,
    #[serde(default)]
    pub sop_step: Option<usize>,
}

impl OracleStep {
    pub fn to_action(&self) -> Action {
        Action {
            kind: self.kind,
            target: self.target.clone(),
            coordinates: None,
            text: self.text.clone(),
            direction_or_url: self.arg.clone(),
            ts_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowSpec {
    pub id: String,
    pub description: String,
    pub goals: Vec<GoalCondition>,
    #[serde(default)]
    pub sop: Option<String>,
    #[serde(default)]
    pub oracle: Vec<OracleStep>,
    /// Oracle step an agent cannot infer from the description alone; without
    /// the SOP it is skipped.
    #[serde(default)]
    pub needs_sop_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{location}: {message}")]
pub struct SpecError {
    pub location: String,
    pub message: String,
}

impl SiteSpec {
    pub fn from_yaml(text: &str) -> Result<Self, SpecError> {
        let de = serde_yaml::Deserializer::from_str(text);
        let spec: SiteSpec =
            serde_yaml::with::singleton_map_recursive::deserialize(de).map_err(|e| SpecError {
            location: e
                .location()
                .map(|l| format!("line {} column {}", l.line(), l.column()))
                .unwrap_or_else(|| "document".into()),
            message: e.to_string(),
        })?;
        let problems = spec.problems();
        if let Some(p) = problems.into_iter().next() {
            return Err(p);
        }
        Ok(spec)
    }

    pub fn page_height(&self, page: &str) -> u32 {
        self.pages
            .get(page)
            .and_then(|p| p.height)
            .unwrap_or(self.viewport.height)
            .max(self.viewport.height)
    }

    pub fn workflow(&self, id: &str) -> Option<&WorkflowSpec> {
        self.workflows.iter().find(|w| w.id == id)
    }

    /// Label of an element id, searching all pages.
    pub fn element_template(&self, id: &str) -> Option<(&str, &ElementTemplate)> {
        self.pages.iter().find_map(|(pid, p)| {
            p.elements
                .iter()
                .find(|e| e.id == id)
                .map(|e| (pid.as_str(), e))
        })
    }

    fn has_element(&self, page: &str, element: &str) -> bool {
        self.pages
            .get(page)
            .is_some_and(|p| p.elements.iter().any(|e| e.id == element))
    }

    /// Every structural problem: missing pages, dangling references, duplicates.
    pub fn problems(&self) -> Vec<SpecError> {
        let mut out = Vec::new();
        let mut err = |location: String, message: String| out.push(SpecError { location, message });
        if !self.pages.contains_key(&self.entry_page) {
            err(
                "entry_page".into(),
                format!("entry page {:?} does not exist", self.entry_page),
            );
        }
        for (pid, page) in &self.pages {
            let mut ids = HashSet::new();
            let mut focused = 0;
            for (i, e) in page.elements.iter().enumerate() {
                let loc = format!("pages.{pid}.elements[{i}]");
                if !ids.insert(e.id.as_str()) {
                    err(loc.clone(), format!("duplicate element id {:?}", e.id));
                }
                if !e.bbox.is_valid() {
                    err(loc.clone(), "invalid bbox".into());
                }
                if e.bbox.right() > self.viewport.width as f64
                    || e.bbox.bottom() > self.page_height(pid) as f64
                {
                    err(loc.clone(), "bbox extends past the page".into());
                }
                focused += e.focused as usize;
            }
            if focused > 1 {
                err(format!("pages.{pid}"), "more than one element focused".into());
            }
            for (i, rule) in page.transitions.iter().enumerate() {
                let loc = format!("pages.{pid}.transitions[{i}]");
                if rule.effects.is_empty() {
                    err(loc.clone(), "transition has no effects".into());
                }
                if let Some(e) = &rule.on.element {
                    if !ids.contains(e.as_str()) {
                        err(loc.clone(), format!("trigger element {e:?} not on page"));
                    }
                }
                for effect in &rule.effects {
                    let target = match effect {
                        Effect::Navigate(to) => {
                            if !self.pages.contains_key(to) {
                                err(loc.clone(), format!("transition target page {to:?} does not exist"));
                            }
                            continue;
                        }
                        Effect::Show(t)
                        | Effect::Hide(t)
                        | Effect::Enable(t)
                        | Effect::Disable(t)
                        | Effect::Focus(t) => t,
                        Effect::SetValue(v) | Effect::SetLabel(v) => &v.target(),
                    };
                    let (tp, te) = target.resolve(pid);
                    if !self.has_element(tp, te) {
                        err(loc.clone(), format!("effect references missing element {tp}.{te}"));
                    }
                }
            }
        }
        let mut wf_ids = HashSet::new();
        for (i, w) in self.workflows.iter().enumerate() {
            let loc = format!("workflows[{i}]");
            if w.id.trim().is_empty() || !wf_ids.insert(w.id.as_str()) {
                err(loc.clone(), format!("workflow id {:?} is empty or duplicated", w.id));
            }
            if w.description.trim().is_empty() {
                err(loc.clone(), "empty description".into());
            }
            for g in &w.goals {
                let ok = match g {
                    GoalCondition::Page(p) => self.pages.contains_key(p),
                    GoalCondition::Value { page, element, .. }
                    | GoalCondition::Flag { page, element, .. } => self.has_element(page, element),
                };
                if !ok {
                    err(loc.clone(), format!("goal {g:?} references a missing page or element"));
                }
            }
            if let Some(sop) = &w.sop {
                if let Err(e) = crate::model::parse_sop(sop) {
                    err(loc.clone(), format!("sop: {e}"));
                }
            }
            for (j, step) in w.oracle.iter().enumerate() {
                let problems = step.to_action().problems();
                if let Some(p) = problems.first() {
                    err(format!("{loc}.oracle[{j}]"), p.clone());
                }
                if let Some(t) = &step.target {
                    if self.element_template(t).is_none() {
                        err(format!("{loc}.oracle[{j}]"), format!("unknown target {t:?}"));
                    }
                }
            }
        }
        out
    }
}

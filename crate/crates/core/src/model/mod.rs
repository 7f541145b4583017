//! Shared domain types: workflows, GUI snapshots, actions, traces and SOPs.
//!
//! Everything here is a plain value object. Types that carry invariants expose
//! a checking method rather than enforcing them at construction, because traces
//! and bundles are routinely loaded from disk in a possibly-broken state and the
//! caller wants the full list of problems, not the first one.

mod bundle;
mod metrics;
mod screens;
mod sop;
mod trace;

pub use bundle::{read_bundle, write_bundle, BundleError, DemonstrationBundle, Frame};
pub use metrics::{harmonic_mean, score_binary, BinaryReport, LabeledPrediction, MetricError};
pub use screens::{DirScreens, MemScreens, Screenshots};
pub use sop::{parse_sop, Sop, SopError, SopSource, SopStep};
pub use trace::{
    read_trace, validate_trace, write_trace, Trace, TraceError, TraceItem, Violation, ViolationKind,
};

use serde::{Deserialize, Serialize};
use std::fmt;

/// A unit of work to automate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workflow {
    pub id: String,
    pub description: String,
    /// Site or environment the workflow runs against.
    #[serde(rename = "env")]
    pub environment_ref: String,
}

impl Workflow {
    pub fn new(
        id: impl Into<String>,
        description: impl Into<String>,
        environment_ref: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
            environment_ref: environment_ref.into(),
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.trim().is_empty() {
            out.push("workflow id is empty".to_string());
        }
        if self.description.trim().is_empty() {
            out.push("workflow description is empty".to_string());
        }
        out
    }
}

/// Axis-aligned pixel rectangle, origin at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid bounding box ({x}, {y}, {width}, {height})")]
pub struct InvalidBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Result<Self, InvalidBox> {
        let b = Self {
            x,
            y,
            width,
            height,
        };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(InvalidBox {
                x,
                y,
                width,
                height,
            })
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.width, self.height]
            .iter()
            .all(|v| v.is_finite())
            && self.x >= 0.0
            && self.y >= 0.0
            && self.width > 0.0
            && self.height > 0.0
    }

    pub fn right(&self) -> f64 {
        self.x + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> Point {
        Point {
            x: self.x + self.width / 2.0,
            y: self.y + self.height / 2.0,
        }
    }

    /// Boundary-inclusive containment.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.x <= self.right() && p.y >= self.y && p.y <= self.bottom()
    }

    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.right() <= width && self.bottom() <= height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementRole {
    Button,
    Link,
    Textfield,
    Checkbox,
    Select,
    Image,
    Text,
    Other,
}

impl ElementRole {
    pub const ALL: [ElementRole; 8] = [
        ElementRole::Button,
        ElementRole::Link,
        ElementRole::Textfield,
        ElementRole::Checkbox,
        ElementRole::Select,
        ElementRole::Image,
        ElementRole::Text,
        ElementRole::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ElementRole::Button => "button",
            ElementRole::Link => "link",
            ElementRole::Textfield => "textfield",
            ElementRole::Checkbox => "checkbox",
            ElementRole::Select => "select",
            ElementRole::Image => "image",
            ElementRole::Text => "text",
            ElementRole::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for ElementRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Snapshot of one GUI element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    #[serde(rename = "id")]
    pub element_id: String,
    pub role: ElementRole,
    #[serde(default)]
    pub label: String,
    pub bbox: BoundingBox,
    pub visible: bool,
    pub enabled: bool,
    #[serde(default)]
    pub focused: bool,
    /// Current contents for text fields, `"checked"`/`""` for checkboxes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Viewport {
    pub width: u32,
    pub height: u32,
}

impl Default for Viewport {
    fn default() -> Self {
        Self {
            width: 1280,
            height: 720,
        }
    }
}

/// One observation of the GUI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub index: usize,
    pub ts_ms: u64,
    /// Screenshot path, relative to the run or dataset directory.
    #[serde(rename = "screenshot")]
    pub screenshot_ref: String,
    pub viewport: Viewport,
    #[serde(default)]
    pub elements: Vec<Element>,
    #[serde(rename = "screen")]
    pub url_or_screen_id: String,
}

impl State {
    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.element_id == id)
    }

    pub fn focused(&self) -> Option<&Element> {
        self.elements.iter().find(|e| e.focused)
    }

    /// Topmost visible element under `p`; later elements draw over earlier ones.
    pub fn element_at(&self, p: Point) -> Option<&Element> {
        self.elements
            .iter()
            .rev()
            .find(|e| e.visible && e.bbox.contains(p))
    }

    /// Violations of the per-state invariants (single focus, unique ids, geometry).
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let focused = self.elements.iter().filter(|e| e.focused).count();
        if focused > 1 {
            out.push(format!("{focused} elements are focused"));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.elements {
            if !seen.insert(e.element_id.as_str()) {
                out.push(format!("duplicate element id {:?}", e.element_id));
            }
            if !e.bbox.is_valid() {
                out.push(format!("element {:?} has an invalid bbox", e.element_id));
            } else if e.visible
                && !e
                    .bbox
                    .within(self.viewport.width as f64, self.viewport.height as f64)
            {
                out.push(format!(
                    "visible element {:?} lies outside the viewport",
                    e.element_id
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Click,
    Type,
    Keypress,
    Scroll,
    Navigate,
    Stop,
}

impl ActionKind {
    pub const ALL: [ActionKind; 6] = [
        ActionKind::Click,
        ActionKind::Type,
        ActionKind::Keypress,
        ActionKind::Scroll,
        ActionKind::Navigate,
        ActionKind::Stop,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::Type => "type",
            ActionKind::Keypress => "keypress",
            ActionKind::Scroll => "scroll",
            ActionKind::Navigate => "navigate",
            ActionKind::Stop => "stop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL.iter().copied().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A primitive GUI action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, rename = "point", skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Point>,
    /// Typed text, or the key name for keypresses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Scroll direction or navigation target.
    #[serde(default, rename = "arg", skip_serializing_if = "Option::is_none")]
    pub direction_or_url: Option<String>,
    #[serde(default)]
    pub ts_ms: u64,
}

impl Action {
    fn bare(kind: ActionKind) -> Self {
        Self {
            kind,
            target: None,
            coordinates: None,
            text: None,
            direction_or_url: None,
            ts_ms: 0,
        }
    }

    pub fn click_element(target: impl Into<String>) -> Self {
        Self {
            target: Some(target.into()),
            ..Self::bare(ActionKind::Click)
        }
    }

    pub fn click_at(p: Point) -> Self {
        Self {
            coordinates: Some(p),
            ..Self::bare(ActionKind::Click)
        }
    }

    pub fn type_text(text: impl Into<String>) -> Self {
        Self {
            text: Some(text.into()),
            ..Self::bare(ActionKind::Type)
        }
    }

    pub fn keypress(key: impl Into<String>) -> Self {
        Self {
            text: Some(key.into()),
            ..Self::bare(ActionKind::Keypress)
        }
    }

    pub fn scroll(direction: impl Into<String>) -> Self {
        Self {
            direction_or_url: Some(direction.into()),
            ..Self::bare(ActionKind::Scroll)
        }
    }

    pub fn navigate(url: impl Into<String>) -> Self {
        Self {
            direction_or_url: Some(url.into()),
            ..Self::bare(ActionKind::Navigate)
        }
    }

    pub fn stop() -> Self {
        Self::bare(ActionKind::Stop)
    }

    pub fn at(mut self, ts_ms: u64) -> Self {
        self.ts_ms = ts_ms;
        self
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.kind {
            ActionKind::Type | ActionKind::Keypress if self.text.is_none() => {
                out.push(format!("{} action without text", self.kind));
            }
            ActionKind::Click if self.target.is_none() && self.coordinates.is_none() => {
                out.push("click action without target or coordinates".to_string());
            }
            ActionKind::Navigate if self.direction_or_url.is_none() => {
                out.push("navigate action without destination".to_string());
            }
            ActionKind::Stop
                if self.target.is_some()
                    || self.coordinates.is_some()
                    || self.text.is_some()
                    || self.direction_or_url.is_some() =>
            {
                out.push("stop action carries extra fields".to_string());
            }
            _ => {}
        }
        if let Some(p) = self.coordinates {
            if !(p.x.is_finite() && p.y.is_finite()) {
                out.push("non-finite click coordinates".to_string());
            }
        }
        out
    }

    /// Short human-readable rendering used in prompts and logs.
    pub fn describe(&self) -> String {
        let mut s = self.kind.to_string();
        if let Some(t) = &self.target {
            s.push_str(&format!(" {t}"));
        }
        if let Some(p) = self.coordinates {
            s.push_str(&format!(" at ({:.0},{:.0})", p.x, p.y));
        }
        if let Some(t) = &self.text {
            s.push_str(&format!(" {t:?}"));
        }
        if let Some(a) = &self.direction_or_url {
            s.push_str(&format!(" {a}"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bbox_rejects_degenerate() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 5.0).is_err());
        assert!(BoundingBox::new(-1.0, 0.0, 1.0, 5.0).is_err());
        assert!(BoundingBox::new(0.0, f64::NAN, 1.0, 5.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn action_invariants() {
        assert!(Action::type_text("x").problems().is_empty());
        let mut t = Action::type_text("x");
        t.text = None;
        assert_eq!(t.problems().len(), 1);
        let mut c = Action::click_element("b");
        c.target = None;
        assert_eq!(c.problems().len(), 1);
        let mut s = Action::stop();
        assert!(s.problems().is_empty());
        s.target = Some("x".into());
        assert_eq!(s.problems().len(), 1);
    }

    #[test]
    fn state_single_focus() {
        let el = |id: &str, focused| Element {
            element_id: id.into(),
            role: ElementRole::Textfield,
            label: String::new(),
            bbox: BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            visible: true,
            enabled: true,
            focused,
            value: None,
        };
        let mut s = State {
            index: 0,
            ts_ms: 0,
            screenshot_ref: "a.png".into(),
            viewport: Viewport::default(),
            elements: vec![el("a", true), el("b", false)],
            url_or_screen_id: "p".into(),
        };
        assert!(s.problems().is_empty());
        s.elements[1].focused = true;
        assert_eq!(s.problems().len(), 1);
    }
}

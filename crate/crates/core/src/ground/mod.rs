//! Mapping action intents to screen targets.
//!
//! Set-of-marks grounding draws a numbered badge on every candidate box and
//! asks the model for a number; direct grounding asks for a box outright.
//! [`center_hit`] and [`grounding_report`] score predictions against targets.

mod dataset;
mod metrics;
mod som;

pub use dataset::{
    evaluate_grounding, load_dataset, rows_report, write_case, DatasetError, GroundingRow,
    GroundingSample,
};
pub use metrics::{
    bucket, center_hit, format_accuracy, grounding_report, BucketThresholds, EmptyInput,
    GroundingCase, GroundingReport, HitCount, SizeBucket,
};
pub use som::{clip_box, render_set_of_marks, resolve_label, LabelEntry, LabelMap, PixelRect, NUDGE_PX};

use crate::fm::{Backend, FmError, FmRequest, Image};
use crate::model::{BoundingBox, ElementRole, Point, State};
use crate::prompts;
use crate::raster::RasterError;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxSourceKind {
    Snapshot,
    DetectorFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCandidate {
    #[serde(flatten)]
    pub bbox: BoundingBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<ElementRole>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, rename = "id", skip_serializing_if = "Option::is_none")]
    pub element_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSource {
    pub kind: BoxSourceKind,
    pub boxes: Vec<BoxCandidate>,
}

impl BoxSource {
    /// Visible elements of a snapshot, in snapshot order.
    pub fn from_state(state: &State) -> Self {
        Self {
            kind: BoxSourceKind::Snapshot,
            boxes: state
                .elements
                .iter()
                .filter(|e| e.visible)
                .map(|e| BoxCandidate {
                    bbox: e.bbox,
                    role: Some(e.role),
                    label: Some(e.label.clone()),
                    element_id: Some(e.element_id.clone()),
                })
                .collect(),
        }
    }

    /// Detector output, one box per line, taken verbatim.
    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let mut boxes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let b: BoxCandidate =
                serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            if !b.bbox.is_valid() {
                return Err(format!("line {}: invalid bbox", i + 1));
            }
            boxes.push(b);
        }
        Ok(Self {
            kind: BoxSourceKind::DetectorFile,
            boxes,
        })
    }

    pub fn to_jsonl(&self) -> String {
        self.boxes
            .iter()
            .map(|b| serde_json::to_string(b).expect("boxes serialize") + "\n")
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundStrategy {
    Som,
    Direct,
}

impl fmt::Display for GroundStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroundStrategy::Som => "som",
            GroundStrategy::Direct => "direct",
        })
    }
}

impl FromStr for GroundStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "som" => Ok(GroundStrategy::Som),
            "direct" | "direct_bbox" => Ok(GroundStrategy::Direct),
            _ => Err(format!("unknown strategy {s:?}; expected som or direct")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedAction {
    pub element_id: Option<String>,
    pub point: Point,
    /// Box whose center is `point`.
    pub bbox: BoundingBox,
    pub label: Option<u32>,
    pub response: String,
}

#[derive(Debug, thiserror::Error)]
pub enum GroundError {
    #[error("no label or box in model response {0:?}")]
    UngroundableResponse(String),
    #[error("unknown label {0}")]
    UnknownLabel(u32),
    #[error(transparent)]
    Fm(#[from] FmError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Legend line per badge: `[3] button "Save"`.
pub fn legend(map: &LabelMap, boxes: &BoxSource) -> String {
    map.entries
        .iter()
        .zip(&boxes.boxes)
        .map(|(e, b)| {
            let mut line = format!("[{}]", e.label);
            match (&b.role, &b.label) {
                (None, None) => line.push_str(" element"),
                (role, label) => {
                    if let Some(r) = role {
                        line.push_str(&format!(" {r}"));
                    }
                    if let Some(l) = label {
                        line.push_str(&format!(" \"{l}\""));
                    }
                }
            }
            line.push('\n');
            line
        })
        .collect()
}

/// First integer in a response.
pub fn parse_label(text: &str) -> Option<u32> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\d+").expect("static regex"));
    re.find(text).and_then(|m| m.as_str().parse().ok())
}

/// First `(x,y,w,h)` tuple in a response.
pub fn parse_box(text: &str) -> Option<BoundingBox> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let n = r"\s*(\d+(?:\.\d+)?)\s*";
    let re = RE.get_or_init(|| Regex::new(&format!(r"\({n},{n},{n},{n}\)")).expect("static regex"));
    let c = re.captures(text)?;
    let v: Vec<f64> = (1..=4).map(|i| c[i].parse().expect("regex matched digits")).collect();
    BoundingBox::new(v[0], v[1], v[2], v[3]).ok()
}

/// Grounds one intent on a screen.
///
/// `boxes` defaults to the state's visible elements for set-of-marks.
pub fn ground_action(
    intent: &str,
    state: &State,
    screenshot: &[u8],
    backend: &dyn Backend,
    strategy: GroundStrategy,
    boxes: Option<&BoxSource>,
) -> Result<GroundedAction, GroundError> {
    match strategy {
        GroundStrategy::Som => {
            let owned;
            let boxes = match boxes {
                Some(b) => b,
                None => {
                    owned = BoxSource::from_state(state);
                    &owned
                }
            };
            let map = render_set_of_marks(screenshot, boxes)?;
            let text = prompts::GROUND_SOM.fill(&[("legend", &legend(&map, boxes)), ("intent", intent)]);
            let request = FmRequest::new("ground.som")
                .user(text, vec![Image::new("marked.png", map.image.clone())]);
            let reply = backend.complete(&request)?.text;
            let label =
                parse_label(&reply).ok_or_else(|| GroundError::UngroundableResponse(reply.clone()))?;
            let entry = map.resolve(label)?;
            Ok(GroundedAction {
                element_id: entry.element_id.clone(),
                point: entry.bbox.center(),
                bbox: entry.bbox,
                label: Some(label),
                response: reply,
            })
        }
        GroundStrategy::Direct => {
            let text = prompts::GROUND_DIRECT.fill(&[
                ("width", &state.viewport.width.to_string()),
                ("height", &state.viewport.height.to_string()),
                ("intent", intent),
            ]);
            let request = FmRequest::new("ground.direct")
                .user(text, vec![Image::new("screen.png", screenshot.to_vec())]);
            let reply = backend.complete(&request)?.text;
            let bbox =
                parse_box(&reply).ok_or_else(|| GroundError::UngroundableResponse(reply.clone()))?;
            let point = bbox.center();
            let element_id = state.element_at(point).map(|e| e.element_id.clone());
            Ok(GroundedAction {
                element_id,
                point,
                bbox,
                label: None,
                response: reply,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_parsers() {
        assert_eq!(parse_label("label: 2"), Some(2));
        assert_eq!(parse_label("[7] then 3"), Some(7));
        assert_eq!(parse_label("the blue button"), None);
        let b = parse_box("The box is (10,10,20,20).").unwrap();
        assert_eq!(b.center(), Point::new(20.0, 20.0));
        assert_eq!(parse_box("( 1.5 , 2 , 3 , 4 )").unwrap().x, 1.5);
        assert!(parse_box("(1,2,0,4)").is_none());
        assert!(parse_box("nothing").is_none());
    }

    #[test]
    fn detector_boxes_keep_duplicates() {
        let line = r#"{"x":1,"y":2,"width":3,"height":4}"#;
        let s = BoxSource::from_jsonl(&format!("{line}\n{line}\n")).unwrap();
        assert_eq!(s.boxes.len(), 2);
        assert_eq!(s.kind, BoxSourceKind::DetectorFile);
        assert_eq!(BoxSource::from_jsonl(&s.to_jsonl()).unwrap(), s);
        assert!(BoxSource::from_jsonl(r#"{"x":1,"y":2,"width":0,"height":4}"#).is_err());
    }
}

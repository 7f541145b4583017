//! Grounding cases on disk: `cases/NNNN/{screenshot.png, boxes.jsonl, target.json, query.txt}`.

use super::{
    center_hit, ground_action, BoxSource, BucketThresholds, EmptyInput, GroundError, GroundStrategy,
    GroundingReport, HitCount, SizeBucket,
};
use crate::fm::Backend;
use crate::model::{BoundingBox, State, Viewport};
use crate::raster::decode_png;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TargetFile {
    #[serde(flatten)]
    bbox: BoundingBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundingSample {
    pub id: String,
    pub screenshot: Arc<Vec<u8>>,
    pub boxes: BoxSource,
    pub target: BoundingBox,
    pub target_id: Option<String>,
    pub query: String,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no cases under {0}")]
    Empty(PathBuf),
}

fn read(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn invalid(path: &Path, message: impl ToString) -> DatasetError {
    DatasetError::Invalid {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn load_case(dir: &Path, id: String) -> Result<GroundingSample, DatasetError> {
    let screenshot = read(&dir.join("screenshot.png"))?;
    let boxes_path = dir.join("boxes.jsonl");
    let boxes_text = String::from_utf8(read(&boxes_path)?).map_err(|e| invalid(&boxes_path, e))?;
    let boxes = BoxSource::from_jsonl(&boxes_text).map_err(|e| invalid(&boxes_path, e))?;
    let target_path = dir.join("target.json");
    let target: TargetFile =
        serde_json::from_slice(&read(&target_path)?).map_err(|e| invalid(&target_path, e))?;
    if !target.bbox.is_valid() {
        return Err(invalid(&target_path, "invalid bbox"));
    }
    let query_path = dir.join("query.txt");
    let query = String::from_utf8(read(&query_path)?).map_err(|e| invalid(&query_path, e))?;
    let query = query.trim().to_string();
    if query.is_empty() {
        return Err(invalid(&query_path, "empty query"));
    }
    Ok(GroundingSample {
        id,
        screenshot: Arc::new(screenshot),
        boxes,
        target: target.bbox,
        target_id: target.id,
        query,
    })
}

/// Reads every case directory under `root/cases` (or `root` itself), sorted by name.
pub fn load_dataset(root: &Path) -> Result<Vec<GroundingSample>, DatasetError> {
    let cases = if root.join("cases").is_dir() {
        root.join("cases")
    } else {
        root.to_path_buf()
    };
    let entries = fs::read_dir(&cases).map_err(|source| DatasetError::Io {
        path: cases.clone(),
        source,
    })?;
    let mut dirs: Vec<(String, PathBuf)> = entries
        .filter_map(Result::ok)
        .filter(|e| e.path().is_dir())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(DatasetError::Empty(cases));
    }
    dirs.into_iter().map(|(id, dir)| load_case(&dir, id)).collect()
}

pub fn write_case(root: &Path, sample: &GroundingSample) -> std::io::Result<()> {
    let dir = root.join("cases").join(&sample.id);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("screenshot.png"), sample.screenshot.as_slice())?;
    fs::write(dir.join("boxes.jsonl"), sample.boxes.to_jsonl())?;
    let target = TargetFile {
        bbox: sample.target,
        id: sample.target_id.clone(),
    };
    fs::write(
        dir.join("target.json"),
        serde_json::to_string_pretty(&target).expect("target serializes") + "\n",
    )?;
    fs::write(dir.join("query.txt"), format!("{}\n", sample.query))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingRow {
    pub id: String,
    pub bucket: SizeBucket,
    pub predicted: Option<BoundingBox>,
    pub hit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Grounds every sample's query. Ungroundable answers and unknown labels
/// count as misses; backend failures abort with the case id.
pub fn evaluate_grounding(
    samples: &[GroundingSample],
    backend: &dyn Backend,
    strategy: GroundStrategy,
    thresholds: &BucketThresholds,
) -> Result<Vec<GroundingRow>, (String, GroundError)> {
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let canvas = decode_png(&s.screenshot).map_err(|e| (s.id.clone(), e.into()))?;
        // Detector-file cases carry no element snapshot; the state only sizes the prompt.
        let state = State {
            index: 0,
            ts_ms: 0,
            screenshot_ref: "screenshot.png".into(),
            viewport: Viewport {
                width: canvas.width(),
                height: canvas.height(),
            },
            elements: Vec::new(),
            url_or_screen_id: s.id.clone(),
        };
        let bucket = thresholds.bucket(&s.target);
        let row = match ground_action(&s.query, &state, &s.screenshot, backend, strategy, Some(&s.boxes)) {
            Ok(g) => GroundingRow {
                id: s.id.clone(),
                bucket,
                predicted: Some(g.bbox),
                hit: center_hit(&g.bbox, &s.target),
                error: None,
            },
            Err(e @ (GroundError::UngroundableResponse(_) | GroundError::UnknownLabel(_))) => GroundingRow {
                id: s.id.clone(),
                bucket,
                predicted: None,
                hit: false,
                error: Some(e.to_string()),
            },
            Err(e) => return Err((s.id.clone(), e)),
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Table of hit rates over evaluated rows, misses without a prediction included.
pub fn rows_report(rows: &[GroundingRow]) -> Result<GroundingReport, EmptyInput> {
    if rows.is_empty() {
        return Err(EmptyInput);
    }
    let mut r = GroundingReport {
        small: HitCount::default(),
        medium: HitCount::default(),
        large: HitCount::default(),
        overall: HitCount::default(),
    };
    for row in rows {
        let slot = match row.bucket {
            SizeBucket::S => &mut r.small,
            SizeBucket::M => &mut r.medium,
            SizeBucket::L => &mut r.large,
        };
        for c in [slot, &mut r.overall] {
            c.cases += 1;
            c.hits += row.hit as usize;
        }
    }
    Ok(r)
}

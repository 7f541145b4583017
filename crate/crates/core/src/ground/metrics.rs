use crate::model::BoundingBox;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeBucket {
    S,
    M,
    L,
}

impl SizeBucket {
    pub const ALL: [SizeBucket; 3] = [SizeBucket::S, SizeBucket::M, SizeBucket::L];
}

impl fmt::Display for SizeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SizeBucket::S => "S",
            SizeBucket::M => "M",
            SizeBucket::L => "L",
        })
    }
}

/// Area thresholds in square pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketThresholds {
    /// Areas below this are small.
    pub medium_from: f64,
    /// Areas at or above this are large.
    pub large_from: f64,
}

impl Default for BucketThresholds {
    fn default() -> Self {
        Self {
            medium_from: 1024.0,
            large_from: 16384.0,
        }
    }
}

impl BucketThresholds {
    pub fn bucket(&self, b: &BoundingBox) -> SizeBucket {
        let area = b.area();
        if area < self.medium_from {
            SizeBucket::S
        } else if area < self.large_from {
            SizeBucket::M
        } else {
            SizeBucket::L
        }
    }
}

pub fn bucket(b: &BoundingBox) -> SizeBucket {
    BucketThresholds::default().bucket(b)
}

/// Whether the predicted box's center lies in the target, edges included.
pub fn center_hit(predicted: &BoundingBox, target: &BoundingBox) -> bool {
    target.contains(predicted.center())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundingCase {
    pub predicted: BoundingBox,
    pub target: BoundingBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HitCount {
    pub cases: usize,
    pub hits: usize,
}

impl HitCount {
    /// `None` when there are no cases.
    pub fn accuracy(&self) -> Option<f64> {
        (self.cases > 0).then(|| self.hits as f64 / self.cases as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub small: HitCount,
    pub medium: HitCount,
    pub large: HitCount,
    pub overall: HitCount,
}

impl GroundingReport {
    pub fn get(&self, b: SizeBucket) -> &HitCount {
        match b {
            SizeBucket::S => &self.small,
            SizeBucket::M => &self.medium,
            SizeBucket::L => &self.large,
        }
    }
}

/// Accuracy as `0.70`, or `n/a` without cases.
pub fn format_accuracy(a: Option<f64>) -> String {
    a.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no grounding cases")]
pub struct EmptyInput;

/// Hit rates per bucket of the target box and overall.
pub fn grounding_report(
    cases: &[GroundingCase],
    thresholds: &BucketThresholds,
) -> Result<GroundingReport, EmptyInput> {
    if cases.is_empty() {
        return Err(EmptyInput);
    }
    let mut r = GroundingReport {
        small: HitCount::default(),
        medium: HitCount::default(),
        large: HitCount::default(),
        overall: HitCount::default(),
    };
    for c in cases {
        let hit = center_hit(&c.predicted, &c.target) as usize;
        let slot = match thresholds.bucket(&c.target) {
            SizeBucket::S => &mut r.small,
            SizeBucket::M => &mut r.medium,
            SizeBucket::L => &mut r.large,
        };
        slot.cases += 1;
        slot.hits += hit;
        r.overall.cases += 1;
        r.overall.hits += hit;
    }
    Ok(r)
}

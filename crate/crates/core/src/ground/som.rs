use super::{BoxSource, GroundError};
use crate::model::{BoundingBox, Point};
use crate::raster::{decode_png, text_width, Canvas, RasterError, Rgb, GLYPH, WHITE};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Step between candidate badge positions.
pub const NUDGE_PX: i64 = 4;
const PAD: i64 = 2;

const PALETTE: [Rgb; 6] = [
    [214, 39, 40],
    [31, 119, 180],
    [44, 160, 44],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
];

/// Pixel rectangle `[x, x+w) × [y, y+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl PixelRect {
    pub fn intersects(&self, o: &PixelRect) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub label: u32,
    pub element_id: Option<String>,
    /// Input box clipped to the image.
    pub bbox: BoundingBox,
    /// Badge top-left corner; inside `bbox`.
    pub anchor: Point,
    pub badge: PixelRect,
    /// No badge position inside the box avoided every earlier badge.
    pub crowded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub entries: Vec<LabelEntry>,
    /// Annotated screenshot (PNG).
    pub image: Arc<Vec<u8>>,
}

impl LabelMap {
    pub fn resolve(&self, label: u32) -> Result<&LabelEntry, GroundError> {
        label
            .checked_sub(1)
            .and_then(|i| self.entries.get(i as usize))
            .ok_or(GroundError::UnknownLabel(label))
    }
}

pub fn resolve_label(label: u32, map: &LabelMap) -> Result<&LabelEntry, GroundError> {
    map.resolve(label)
}

/// Clamps a box into a `width × height` image, keeping at least one pixel.
pub fn clip_box(b: &BoundingBox, width: u32, height: u32) -> BoundingBox {
    let (w, h) = (width as f64, height as f64);
    let x0 = b.x.clamp(0.0, w - 1.0);
    let y0 = b.y.clamp(0.0, h - 1.0);
    let x1 = b.right().clamp(x0 + 1.0, w);
    let y1 = b.bottom().clamp(y0 + 1.0, h);
    BoundingBox {
        x: x0,
        y: y0,
        width: x1 - x0,
        height: y1 - y0,
    }
}

fn badge_size(label: u32) -> (i64, i64) {
    (
        text_width(&label.to_string(), 1) as i64 + 2 * PAD,
        GLYPH as i64 + 2 * PAD,
    )
}

fn place(
    b: &BoundingBox,
    size: (i64, i64),
    placed: &[PixelRect],
    image: (i64, i64),
) -> (PixelRect, bool) {
    let left = b.x.ceil() as i64;
    let top = b.y.ceil() as i64;
    let right = b.right().floor() as i64;
    let bottom = b.bottom().floor() as i64;
    let (left, top) = (left.min(right), top.min(bottom));
    let rect = |x, y| PixelRect {
        x,
        y,
        w: size.0,
        h: size.1,
    };
    let free = |r: &PixelRect| {
        r.x + r.w <= image.0 && r.y + r.h <= image.1 && !placed.iter().any(|p| p.intersects(r))
    };
    let mut k = 0;
    while left + k <= right && top + k <= bottom {
        let r = rect(left + k, top + k);
        if free(&r) {
            return (r, false);
        }
        k += NUDGE_PX;
    }
    let mut y = top;
    while y <= bottom {
        let mut x = left;
        while x <= right {
            let r = rect(x, y);
            if free(&r) {
                return (r, false);
            }
            x += NUDGE_PX;
        }
        y += NUDGE_PX;
    }
    (rect(left, top), true)
}

/// Draws numbered badges over each box, in box order, starting at the box's
/// top-left corner and moving down-right until the badge clears every
/// earlier badge.
pub fn render_set_of_marks(screenshot: &[u8], boxes: &BoxSource) -> Result<LabelMap, RasterError> {
    if boxes.boxes.is_empty() {
        return Ok(LabelMap {
            entries: Vec::new(),
            image: Arc::new(screenshot.to_vec()),
        });
    }
    let mut canvas: Canvas = decode_png(screenshot)?;
    let dims = (canvas.width() as i64, canvas.height() as i64);
    let mut entries: Vec<LabelEntry> = Vec::with_capacity(boxes.boxes.len());
    let mut placed = Vec::with_capacity(boxes.boxes.len());
    for (i, candidate) in boxes.boxes.iter().enumerate() {
        let label = i as u32 + 1;
        let bbox = clip_box(&candidate.bbox, canvas.width(), canvas.height());
        let (badge, crowded) = place(&bbox, badge_size(label), &placed, dims);
        placed.push(badge);
        entries.push(LabelEntry {
            label,
            element_id: candidate.element_id.clone(),
            bbox,
            anchor: Point::new(badge.x as f64, badge.y as f64),
            badge,
            crowded,
        });
    }
    for e in &entries {
        let c = PALETTE[(e.label as usize - 1) % PALETTE.len()];
        let b = &e.bbox;
        canvas.stroke_rect(
            b.x.round() as i64,
            b.y.round() as i64,
            b.width.round().max(1.0) as i64,
            b.height.round().max(1.0) as i64,
            1,
            c,
        );
    }
    for e in &entries {
        let c = PALETTE[(e.label as usize - 1) % PALETTE.len()];
        let r = e.badge;
        canvas.fill_rect(r.x, r.y, r.w, r.h, c);
        canvas.draw_text(r.x + PAD, r.y + PAD, &e.label.to_string(), 1, WHITE);
    }
    Ok(LabelMap {
        entries,
        image: Arc::new(canvas.to_png()),
    })
}

use crate::model::{Element, ElementRole, State};
use crate::raster::{text_width, Canvas, Rgb, BLACK, GLYPH, WHITE};

const BACKGROUND: Rgb = [245, 246, 248];
const BORDER: Rgb = [120, 124, 130];
const PLACEHOLDER: Rgb = [150, 150, 150];
const PRIMARY: Rgb = [52, 101, 164];
const MUTED: Rgb = [176, 184, 196];
const LINK: Rgb = [24, 64, 196];
const FOCUS: Rgb = [255, 140, 0];

/// Rasterizes the visible elements of a snapshot.
pub fn render_state(state: &State) -> Canvas {
    let mut c = Canvas::new(state.viewport.width, state.viewport.height, BACKGROUND);
    for e in state.elements.iter().filter(|e| e.visible) {
        draw_element(&mut c, e);
    }
    c
}

fn fit(text: &str, width: i64, scale: u32) -> String {
    let max = (width.max(0) as u32 / (GLYPH * scale)) as usize;
    text.chars().take(max).collect()
}

fn label(c: &mut Canvas, x: i64, y: i64, w: i64, h: i64, text: &str, color: Rgb) {
    let scale = if h >= 28 && text_width(text, 2) as i64 <= w - 12 {
        2
    } else {
        1
    };
    let shown = fit(text, w - 12, scale);
    let ty = y + (h - (GLYPH * scale) as i64) / 2;
    c.draw_text(x + 6, ty, &shown, scale, color);
}

fn draw_element(c: &mut Canvas, e: &Element) {
    let (x, y) = (e.bbox.x.round() as i64, e.bbox.y.round() as i64);
    let (w, h) = (e.bbox.width.round() as i64, e.bbox.height.round() as i64);
    let text = e.value.as_deref().unwrap_or("");
    match e.role {
        ElementRole::Button => {
            let fill = if e.enabled { PRIMARY } else { MUTED };
            c.fill_rect(x, y, w, h, fill);
            label(c, x, y, w, h, &e.label, WHITE);
        }
        ElementRole::Link => {
            label(c, x, y, w, h, &e.label, if e.enabled { LINK } else { MUTED });
            c.fill_rect(x + 6, y + h - 4, w - 12, 1, LINK);
        }
        ElementRole::Textfield => {
            c.fill_rect(x, y, w, h, WHITE);
            c.stroke_rect(x, y, w, h, 1, BORDER);
            if text.is_empty() {
                label(c, x, y, w, h, &e.label, PLACEHOLDER);
            } else {
                label(c, x, y, w, h, text, BLACK);
            }
        }
        ElementRole::Checkbox => {
            let s = (h - 8).clamp(8, 20);
            let by = y + (h - s) / 2;
            c.fill_rect(x + 4, by, s, s, WHITE);
            c.stroke_rect(x + 4, by, s, s, 2, BORDER);
            if text == "checked" {
                c.fill_rect(x + 8, by + 4, s - 8, s - 8, PRIMARY);
            }
            label(c, x + s + 4, y, w - s - 4, h, &e.label, BLACK);
        }
        ElementRole::Select => {
            c.fill_rect(x, y, w, h, [232, 234, 238]);
            c.stroke_rect(x, y, w, h, 1, BORDER);
            let shown = if text.is_empty() { &e.label } else { text };
            label(c, x, y, w - 16, h, shown, BLACK);
            c.draw_text(x + w - 14, y + (h - GLYPH as i64) / 2, "v", 1, BLACK);
        }
        ElementRole::Image => {
            c.fill_rect(x, y, w, h, [196, 204, 214]);
            c.stroke_rect(x, y, w, h, 1, BORDER);
        }
        ElementRole::Text => label(c, x, y, w, h, &e.label, BLACK),
        ElementRole::Other => {
            c.fill_rect(x, y, w, h, [226, 228, 232]);
            label(c, x, y, w, h, &e.label, BLACK);
        }
    }
    if e.focused {
        c.stroke_rect(x - 3, y - 3, w + 6, h + 6, 2, FOCUS);
    }
}

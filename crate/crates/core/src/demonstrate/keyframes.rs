use crate::model::{Action, Frame};
use crate::raster::digest;
use serde::{Deserialize, Serialize};

/// Delay after an input event before its effect is assumed visible.
pub const DEFAULT_SETTLE_MS: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyframeCause {
    Initial,
    PreEvent,
    PostEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keyframe {
    /// Index into the recording's frames.
    pub frame: usize,
    pub ts_ms: u64,
    pub cause: KeyframeCause,
    /// Index into the action log.
    pub event: Option<usize>,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KeyframeError {
    #[error("recording has no frames")]
    EmptyRecording,
}

/// Selects the initial frame plus, per event, the last frame at or before it
/// and the first frame at least `settle_ms` after it (the final frame if the
/// recording ends sooner). Runs of identical images keep their earliest frame.
pub fn extract_keyframes(
    frames: &[Frame],
    events: &[Action],
    settle_ms: u64,
) -> Result<Vec<Keyframe>, KeyframeError> {
    if frames.is_empty() {
        return Err(KeyframeError::EmptyRecording);
    }
    let digests: Vec<String> = frames.iter().map(|f| digest(&f.png)).collect();
    let pick = |frame: usize, cause, event| Keyframe {
        frame,
        ts_ms: frames[frame].ts_ms,
        cause,
        event,
        digest: digests[frame].clone(),
    };
    let mut out = vec![pick(0, KeyframeCause::Initial, None)];
    for (i, a) in events.iter().enumerate() {
        let pre = frames
            .iter()
            .rposition(|f| f.ts_ms <= a.ts_ms)
            .unwrap_or(0);
        let post = frames
            .iter()
            .position(|f| f.ts_ms >= a.ts_ms + settle_ms)
            .unwrap_or(frames.len() - 1);
        out.push(pick(pre, KeyframeCause::PreEvent, Some(i)));
        out.push(pick(post, KeyframeCause::PostEvent, Some(i)));
    }
    out.sort_by_key(|k| (k.ts_ms, k.frame, k.cause, k.event));
    out.dedup_by(|later, earlier| later.digest == earlier.digest);
    Ok(out)
}

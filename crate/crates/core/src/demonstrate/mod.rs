//! SOP induction from demonstrations.
//!
//! A recording is reduced to keyframes aligned with its input events, turned
//! into a prompt at one of three context levels, and the model's answer is
//! parsed as an SOP. [`score_sop`] compares a generated SOP to a reference.

mod context;
mod keyframes;
pub mod matching;
mod scoring;

pub use context::{action_line, build_demo_context, ContextOptions, DemoError, DemoMode};
pub use keyframes::{extract_keyframes, Keyframe, KeyframeCause, KeyframeError, DEFAULT_SETTLE_MS};
pub use scoring::{
    normalize, overlap_matrix, score_sop, token_f1, ScoreError, SopJudge, SopScore,
    MATCH_THRESHOLD,
};

use crate::fm::Backend;
use crate::model::{parse_sop, DemonstrationBundle, Sop, SopSource};

pub fn generate_sop(
    bundle: &DemonstrationBundle,
    mode: DemoMode,
    options: &ContextOptions,
    backend: &dyn Backend,
) -> Result<Sop, DemoError> {
    let request = build_demo_context(bundle, mode, options)?;
    let reply = backend.complete(&request)?;
    let mut sop = parse_sop(&reply.text)?;
    sop.source = SopSource::Generated;
    Ok(sop)
}

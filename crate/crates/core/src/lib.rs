//! Workflow-automation agent runtime.
//!
//! The pipeline has three stages, each usable on its own:
//!
//! * [`demonstrate`]: keyframes from recordings, SOP generation and SOP scoring,
//! * [`execute`] with [`ground`]: next-action suggestion, set-of-marks grounding
//!   and the run loop with human handoff,
//! * [`validate`]: step- and workflow-level checks, negative generators and
//!   judge evaluation.
//!
//! Model access goes through [`fm`], whose replay backend makes every stage
//! deterministic offline. [`sim`] provides a scripted GUI environment with
//! ground-truth oracles.

pub mod demonstrate;
pub mod execute;
pub mod fm;
pub mod ground;
pub mod model;
pub mod oracle;
pub mod prompts;
pub mod raster;
pub mod sim;
pub mod validate;

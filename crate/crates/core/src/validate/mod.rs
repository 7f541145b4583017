//! Step- and workflow-level self-validation.
//!
//! Four checks, each with a deterministic judge and a model-backed one:
//! actuation (did `a` change anything between `s` and `s'`), integrity
//! constraints, workflow completion and trajectory adherence. The negative
//! generators build labeled sets for scoring judges with [`eval_judges`].

mod checks;
mod constraint;
mod evalset;
mod negatives;

pub use checks::{
    action_list, action_text, check_actuation, check_completion, check_constraint,
    check_trajectory, judge_frames, parse_action_text, signature, trace_signatures, Judge,
    JudgeKind, Judgment, Signature, Subject, ValidateError, JUDGE_EDGE_FRAMES,
};
pub use constraint::{element_text, Constraint, ConstraintParseError, ElementRef, Evaluation};
pub use evalset::{
    eval_judges, judge_item, read_evalset, write_evalset, EvalRecord, EvalsetError, ItemResult,
    ValidateReport, ValidateRow, EVALSET_FILE,
};
pub use negatives::{
    default_ratio, deletion_negative, gen_constraint_set, gen_negatives, shuffle_negative,
    ConstraintSource, EvalItem, NegativeError, SourceTrace, ACTUATION_RATIO, DEFAULT_RATIO,
};

//! Evaluation harness: OTB-layout datasets, one-pass evaluation, metrics, ablation
//! variants and synthetic sequences.

mod dataset;
mod eval;
mod metrics;
mod synthetic;

pub use dataset::{load_dataset, load_sequence, parse_groundtruth, Frames, Sequence};
pub use eval::{
    emit_results, evaluate_ope, format_ablation_table, format_boxes, format_metrics, run_ablation,
    run_sequence, EvalResult, RpcfFactory, RpcfTracker, SequenceResult, SequenceTracker,
    TrackerFactory, Variant,
};
pub use metrics::{
    auc, center_error, dp20, iou, precision_curve, precision_thresholds, success_curve,
    success_thresholds, SequenceMetrics,
};
pub use synthetic::{deformation_sweep, generate, SyntheticSequence, SyntheticSpec};

//! One-pass evaluation, ablation variants and result files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::dataset::Sequence;
use super::metrics::{
    auc, average_curves, dp20, precision_thresholds, success_thresholds, SequenceMetrics,
    PRECISION_STEPS, SUCCESS_STEPS,
};
use crate::error::{Error, Result};
use crate::features::{Frame, MapPooling};
use crate::tracker::{BBox, Tracker, TrackerConfig};

/// A tracker driven frame by frame by the evaluation loop.
pub trait SequenceTracker {
    fn init(&mut self, frame: &Frame, bbox: BBox) -> Result<()>;
    fn track(&mut self, frame: &Frame) -> Result<BBox>;
}

/// Builds a fresh tracker for each sequence.
pub trait TrackerFactory: Sync {
    fn create(&self, sequence: &Sequence) -> Box<dyn SequenceTracker>;
}

/// The constrained correlation-filter tracker.
pub struct RpcfTracker {
    config: TrackerConfig,
    state: Option<Tracker>,
}

impl RpcfTracker {
    pub fn new(config: TrackerConfig) -> Self {
        Self {
            config,
            state: None,
        }
    }
}

impl SequenceTracker for RpcfTracker {
    fn init(&mut self, frame: &Frame, bbox: BBox) -> Result<()> {
        self.state = Some(Tracker::init(frame, bbox, self.config.clone())?);
        Ok(())
    }

    fn track(&mut self, frame: &Frame) -> Result<BBox> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::invalid("tracker used before init"))?;
        Ok(state.step(frame)?.bbox)
    }
}

#[derive(Clone, Debug)]
pub struct RpcfFactory(pub TrackerConfig);

impl TrackerFactory for RpcfFactory {
    fn create(&self, _sequence: &Sequence) -> Box<dyn SequenceTracker> {
        Box::new(RpcfTracker::new(self.0.clone()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceResult {
    pub name: String,
    pub boxes: Vec<BBox>,
    pub metrics: SequenceMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    /// Successful sequences in name order.
    pub sequences: Vec<SequenceResult>,
    /// Sequences that failed, with the error message.
    pub failures: Vec<(String, String)>,
    pub precision: Vec<f64>,
    pub success: Vec<f64>,
    pub dp20: f64,
    pub auc: f64,
}

impl EvalResult {
    fn aggregate(mut sequences: Vec<SequenceResult>, mut failures: Vec<(String, String)>) -> Self {
        sequences.sort_by(|a, b| a.name.cmp(&b.name));
        failures.sort();
        let precision = average_curves(
            sequences.iter().map(|s| s.metrics.precision.as_slice()),
            PRECISION_STEPS,
        );
        let success = average_curves(
            sequences.iter().map(|s| s.metrics.success.as_slice()),
            SUCCESS_STEPS,
        );
        Self {
            dp20: dp20(&precision),
            auc: auc(&success),
            precision,
            success,
            sequences,
            failures,
        }
    }
}

/// Run one sequence from its first ground-truth box without resets. The first emitted box
/// is the initialization box.
pub fn run_sequence(tracker: &mut dyn SequenceTracker, sequence: &Sequence) -> Result<Vec<BBox>> {
    let first = sequence.frames.get(0)?;
    tracker.init(&first, sequence.boxes[0])?;
    let mut boxes = Vec::with_capacity(sequence.len());
    boxes.push(sequence.boxes[0]);
    for i in 1..sequence.len() {
        let frame = sequence.frames.get(i)?;
        boxes.push(tracker.track(&frame)?);
    }
    Ok(boxes)
}

/// One-pass evaluation over all sequences in parallel; failures are reported and left out
/// of the aggregate.
pub fn evaluate_ope(factory: &dyn TrackerFactory, sequences: &[Sequence]) -> Result<EvalResult> {
    if sequences.is_empty() {
        return Err(Error::invalid("no sequences to evaluate"));
    }
    let outcomes: Vec<(String, Result<Vec<BBox>>)> = sequences
        .par_iter()
        .map(|seq| {
            let mut tracker = factory.create(seq);
            (seq.name.clone(), run_sequence(tracker.as_mut(), seq))
        })
        .collect();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for ((name, outcome), seq) in outcomes.into_iter().zip(sequences) {
        match outcome {
            Ok(boxes) => {
                let metrics = SequenceMetrics::compute(&boxes, &seq.boxes);
                results.push(SequenceResult {
                    name,
                    boxes,
                    metrics,
                });
            }
            Err(e) => {
                log::warn!("sequence {name} failed: {e}");
                failures.push((name, e.to_string()));
            }
        }
    }
    Ok(EvalResult::aggregate(results, failures))
}

/// Ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// No pooling constraints (`e = 1`).
    Baseline,
    /// Feature maps average-pooled over 2×2 cells before training.
    FeatureMapAvgPool,
    /// Feature maps max-pooled over 2×2 cells before training.
    FeatureMapMaxPool,
    /// Pooling constraints with `e = 2`.
    Rpcf,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Baseline,
        Variant::FeatureMapAvgPool,
        Variant::FeatureMapMaxPool,
        Variant::Rpcf,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::FeatureMapAvgPool => "feature_map_avg_pool",
            Variant::FeatureMapMaxPool => "feature_map_max_pool",
            Variant::Rpcf => "rpcf",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant {name:?}; expected one of baseline, feature_map_avg_pool, feature_map_max_pool, rpcf"
                ))
            })
    }

    /// Adjust a configuration to this variant. `rpcf` keeps the configured kernel.
    pub fn configure(&self, base: &TrackerConfig) -> TrackerConfig {
        let mut c = base.clone();
        let e = base.kernel.max(2);
        match self {
            Variant::Baseline => c.kernel = 1,
            Variant::FeatureMapAvgPool => {
                c.kernel = 1;
                c.features.pooling = MapPooling::Average(e);
            }
            Variant::FeatureMapMaxPool => {
                c.kernel = 1;
                c.features.pooling = MapPooling::Max(e);
            }
            Variant::Rpcf => {}
        }
        c
    }
}

/// Evaluate each variant on the same sequences.
pub fn run_ablation(
    base: &TrackerConfig,
    variants: &[Variant],
    sequences: &[Sequence],
) -> Result<Vec<(Variant, EvalResult)>> {
    variants
        .iter()
        .map(|v| {
            Ok((
                *v,
                evaluate_ope(&RpcfFactory(v.configure(base)), sequences)?,
            ))
        })
        .collect()
}

/// Plain-text table of DP@20 and AUC per variant.
pub fn format_ablation_table(rows: &[(Variant, EvalResult)]) -> String {
    let mut out = String::from("variant                 dp20      auc\n");
    for (v, r) in rows {
        let _ = writeln!(out, "{:<22} {:>8.4} {:>8.4}", v.name(), r.dp20, r.auc);
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Per-sequence box CSV: header `frame,x,y,w,h`, frames numbered from 1, six decimals.
pub fn format_boxes(boxes: &[BBox]) -> String {
    let mut out = String::from("frame,x,y,w,h\n");
    for (i, b) in boxes.iter().enumerate() {
        let _ = writeln!(out, "{},{:.6},{:.6},{:.6},{:.6}", i + 1, b.x, b.y, b.w, b.h);
    }
    out
}

fn format_curve(thresholds: &[f64], values: &[f64], decimals: usize) -> String {
    let mut out = String::from("threshold,value\n");
    for (t, v) in thresholds.iter().zip(values) {
        let _ = writeln!(out, "{t:.decimals$},{v:.6}");
    }
    out
}

/// `key = value` summary of an evaluation.
pub fn format_metrics(result: &EvalResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "sequences = {}", result.sequences.len());
    let _ = writeln!(out, "failed = {}", result.failures.len());
    let _ = writeln!(out, "dp20 = {:.6}", result.dp20);
    let _ = writeln!(out, "auc = {:.6}", result.auc);
    for s in &result.sequences {
        let _ = writeln!(out, "{}.dp20 = {:.6}", s.name, s.metrics.dp20);
        let _ = writeln!(out, "{}.auc = {:.6}", s.name, s.metrics.auc);
        let _ = writeln!(
            out,
            "{}.mean_center_error = {:.6}",
            s.name,
            s.metrics.mean_center_error()
        );
    }
    for (name, msg) in &result.failures {
        let _ = writeln!(out, "{}.error = {}", name, msg.replace('\n', " "));
    }
    out
}

/// Write `<sequence>.csv` for every sequence plus `metrics.txt`, `precision.csv` and
/// `success.csv` into `out_dir`.
pub fn emit_results(result: &EvalResult, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for s in &result.sequences {
        write_file(
            &out_dir.join(format!("{}.csv", s.name)),
            &format_boxes(&s.boxes),
        )?;
    }
    write_file(&out_dir.join("metrics.txt"), &format_metrics(result))?;
    let (precision, success) = if result.sequences.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        (result.precision.clone(), result.success.clone())
    };
    write_file(
        &out_dir.join("precision.csv"),
        &format_curve(&precision_thresholds(), &precision, 0),
    )?;
    write_file(
        &out_dir.join("success.csv"),
        &format_curve(&success_thresholds(), &success, 2),
    )?;
    Ok(())
}

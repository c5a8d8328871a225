//! One-pass-evaluation metrics: center-error precision and overlap success curves.

use crate::tracker::BBox;

/// Precision thresholds 0, 1, …, 50 pixels.
pub const PRECISION_STEPS: usize = 51;
/// Success thresholds 0, 0.02, …, 1.
pub const SUCCESS_STEPS: usize = 51;

pub fn precision_thresholds() -> Vec<f64> {
    (0..PRECISION_STEPS).map(|t| t as f64).collect()
}

pub fn success_thresholds() -> Vec<f64> {
    (0..SUCCESS_STEPS)
        .map(|t| t as f64 / (SUCCESS_STEPS - 1) as f64)
        .collect()
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.w * a.h + b.w * b.h - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

pub fn center_error(a: &BBox, b: &BBox) -> f64 {
    let (ca, cb) = (a.center(), b.center());
    ((ca.0 - cb.0).powi(2) + (ca.1 - cb.1).powi(2)).sqrt()
}

/// Fraction of frames with center error at most each threshold.
pub fn precision_curve(errors: &[f64]) -> Vec<f64> {
    fraction_curve(&precision_thresholds(), errors, |e, t| e <= t)
}

/// Fraction of frames with overlap at least each threshold.
pub fn success_curve(overlaps: &[f64]) -> Vec<f64> {
    fraction_curve(&success_thresholds(), overlaps, |o, t| o >= t - 1e-12)
}

fn fraction_curve(thresholds: &[f64], values: &[f64], pass: impl Fn(f64, f64) -> bool) -> Vec<f64> {
    thresholds
        .iter()
        .map(|&t| {
            if values.is_empty() {
                0.0
            } else {
                values.iter().filter(|&&v| pass(v, t)).count() as f64 / values.len() as f64
            }
        })
        .collect()
}

/// Precision at 20 pixels.
pub fn dp20(precision: &[f64]) -> f64 {
    precision.get(20).copied().unwrap_or(0.0)
}

/// Mean of the success curve.
pub fn auc(success: &[f64]) -> f64 {
    if success.is_empty() {
        0.0
    } else {
        success.iter().sum::<f64>() / success.len() as f64
    }
}

/// Metrics of one tracked sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceMetrics {
    pub center_errors: Vec<f64>,
    pub overlaps: Vec<f64>,
    pub precision: Vec<f64>,
    pub success: Vec<f64>,
    pub dp20: f64,
    pub auc: f64,
}

impl SequenceMetrics {
    pub fn compute(predicted: &[BBox], truth: &[BBox]) -> Self {
        let center_errors: Vec<f64> = predicted
            .iter()
            .zip(truth)
            .map(|(p, t)| center_error(p, t))
            .collect();
        let overlaps: Vec<f64> = predicted
            .iter()
            .zip(truth)
            .map(|(p, t)| iou(p, t))
            .collect();
        let precision = precision_curve(&center_errors);
        let success = success_curve(&overlaps);
        Self {
            dp20: dp20(&precision),
            auc: auc(&success),
            center_errors,
            overlaps,
            precision,
            success,
        }
    }

    pub fn mean_center_error(&self) -> f64 {
        if self.center_errors.is_empty() {
            return 0.0;
        }
        self.center_errors.iter().sum::<f64>() / self.center_errors.len() as f64
    }
}

/// Equal-weight average of curves.
pub fn average_curves<'a>(curves: impl Iterator<Item = &'a [f64]>, len: usize) -> Vec<f64> {
    let mut sum = vec![0.0; len];
    let mut n = 0usize;
    for c in curves {
        sum.iter_mut().zip(c).for_each(|(s, v)| *s += v);
        n += 1;
    }
    if n > 0 {
        sum.iter_mut().for_each(|s| *s /= n as f64);
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(50.0, 50.0, 10.0, 10.0)), 0.0);
        let b = BBox::new(5.0, 0.0, 10.0, 10.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&a, &b), iou(&b, &a));
    }

    #[test]
    fn perfect_and_far_trackers() {
        let truth: Vec<BBox> = (0..10)
            .map(|i| BBox::new(i as f64, 5.0, 20.0, 30.0))
            .collect();
        let perfect = SequenceMetrics::compute(&truth, &truth);
        assert_eq!(perfect.dp20, 1.0);
        assert_eq!(perfect.auc, 1.0);
        let far: Vec<BBox> = truth
            .iter()
            .map(|_| BBox::new(1000.0, 1000.0, 20.0, 30.0))
            .collect();
        let m = SequenceMetrics::compute(&far, &truth);
        assert_eq!(m.dp20, 0.0);
        assert!(m.auc < 0.03);
    }

    #[test]
    fn curves_monotone_and_sized() {
        let errors = [0.5, 3.0, 19.9, 20.0, 20.1, 60.0];
        let p = precision_curve(&errors);
        assert_eq!(p.len(), 51);
        assert!(p.windows(2).all(|w| w[1] >= w[0]));
        assert!((dp20(&p) - 4.0 / 6.0).abs() < 1e-15);
        let s = success_curve(&[0.0, 0.3, 0.5, 0.9, 1.0]);
        assert_eq!(s.len(), 51);
        assert!(s.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(s[0], 1.0);
        let a = auc(&s);
        assert!((0.0..=1.0).contains(&a));
    }
}

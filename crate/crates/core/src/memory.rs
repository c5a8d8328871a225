//! Weighted training-sample memory and the sparse update schedule.

use crate::error::{Error, Result};
use crate::spectral::Spectrum;

/// One training sample: per-channel spectra of a windowed feature stack.
#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub spectra: Vec<Spectrum>,
    pub weight: f64,
    pub frame_index: usize,
}

/// Bounded set of samples with importance weights that sum to one.
///
/// A new sample enters with weight `ω` while older weights decay by `1 - ω`. When the
/// capacity is exceeded the lowest-weight sample other than the newest is dropped and the
/// weights are renormalized.
#[derive(Clone, Debug)]
pub struct SampleMemory {
    samples: Vec<TrainingSample>,
    capacity: usize,
    learning_rate: f64,
    update_interval: usize,
}

impl SampleMemory {
    pub fn new(capacity: usize, learning_rate: f64, update_interval: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("sample capacity must be at least 1".into()));
        }
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "learning rate {learning_rate} outside (0, 1]"
            )));
        }
        if update_interval == 0 {
            return Err(Error::Config("update interval must be at least 1".into()));
        }
        Ok(Self {
            samples: Vec::with_capacity(capacity + 1),
            capacity,
            learning_rate,
            update_interval,
        })
    }

    pub fn samples(&self) -> &[TrainingSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn update_interval(&self) -> usize {
        self.update_interval
    }

    /// Channel count and grid dims shared by every stored sample.
    pub fn layout(&self) -> Option<(usize, (usize, usize))> {
        self.samples
            .first()
            .map(|s| (s.spectra.len(), s.spectra[0].dims()))
    }

    pub fn weights(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.weight).collect()
    }

    pub fn insert(&mut self, spectra: Vec<Spectrum>, frame_index: usize) -> Result<()> {
        if spectra.is_empty() {
            return Err(Error::invalid("sample has no channels"));
        }
        let dims = spectra[0].dims();
        if spectra.iter().any(|s| s.dims() != dims) {
            return Err(Error::invalid("sample channels disagree on grid dims"));
        }
        if let Some((channels, expected)) = self.layout() {
            if dims != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    actual: dims,
                });
            }
            if channels != spectra.len() {
                return Err(Error::invalid(format!(
                    "sample has {} channels, memory holds {channels}",
                    spectra.len()
                )));
            }
        }

        let weight = if self.samples.is_empty() {
            1.0
        } else {
            let decay = 1.0 - self.learning_rate;
            self.samples.iter_mut().for_each(|s| s.weight *= decay);
            self.learning_rate
        };
        self.samples.push(TrainingSample {
            spectra,
            weight,
            frame_index,
        });

        if self.samples.len() > self.capacity {
            let newest = self.samples.len() - 1;
            let victim = self.samples[..newest]
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.weight.total_cmp(&b.1.weight))
                .map(|(i, _)| i)
                .expect("capacity >= 1 leaves an older sample");
            self.samples.remove(victim);
        }
        let total: f64 = self.samples.iter().map(|s| s.weight).sum();
        self.samples.iter_mut().for_each(|s| s.weight /= total);
        Ok(())
    }

    /// Training happens on the first frame and then every `update_interval` frames.
    pub fn should_update(&self, frame_index: usize) -> bool {
        frame_index == 1 || frame_index.is_multiple_of(self.update_interval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(tag: f64) -> Vec<Spectrum> {
        let mut s = Spectrum::zeros(2, 2);
        s.as_mut_slice()[0].re = tag;
        vec![s]
    }

    fn sum(m: &SampleMemory) -> f64 {
        m.weights().iter().sum()
    }

    #[test]
    fn first_insertion_has_unit_weight() {
        let mut m = SampleMemory::new(50, 0.02, 6).unwrap();
        m.insert(sample(0.0), 1).unwrap();
        assert_eq!(m.weights(), vec![1.0]);
    }

    #[test]
    fn second_insertion_decays() {
        let mut m = SampleMemory::new(50, 0.02, 6).unwrap();
        m.insert(sample(0.0), 1).unwrap();
        m.insert(sample(1.0), 2).unwrap();
        let w = m.weights();
        assert!((w[0] - 0.98).abs() < 1e-12 && (w[1] - 0.02).abs() < 1e-12);
    }

    #[test]
    fn eviction_keeps_newest() {
        let mut m = SampleMemory::new(3, 0.02, 6).unwrap();
        for i in 0..3 {
            m.insert(sample(i as f64), i + 1).unwrap();
        }
        // force the stated starting weights
        for (s, w) in m.samples.iter_mut().zip([0.5, 0.3, 0.2]) {
            s.weight = w;
        }
        m.insert(sample(9.0), 4).unwrap();
        let w = m.weights();
        let total = 0.49 + 0.294 + 0.02;
        let expected = [0.49 / total, 0.294 / total, 0.02 / total];
        assert_eq!(w.len(), 3);
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{w:?}");
        }
        assert_eq!(m.samples().last().unwrap().frame_index, 4);
        assert!((sum(&m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_follow_geometric_decay() {
        let omega = 0.1;
        let mut m = SampleMemory::new(10, omega, 6).unwrap();
        for k in 1..=7 {
            m.insert(sample(k as f64), k).unwrap();
            let w = m.weights();
            assert!((sum(&m) - 1.0).abs() < 1e-9);
            if k > 1 {
                assert!((w[k - 1] - omega).abs() < 1e-12);
                assert!((w[0] - (1.0 - omega).powi(k as i32 - 1)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_mismatched_samples() {
        let mut m = SampleMemory::new(5, 0.02, 6).unwrap();
        m.insert(sample(0.0), 1).unwrap();
        assert!(matches!(
            m.insert(vec![Spectrum::zeros(3, 2)], 2),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(m.insert(vec![Spectrum::zeros(2, 2); 2], 2).is_err());
    }

    #[test]
    fn update_schedule() {
        let m = SampleMemory::new(5, 0.02, 6).unwrap();
        assert!(m.should_update(1));
        assert!(!m.should_update(7));
        assert!(m.should_update(12));
        assert!(!m.should_update(2));
    }
}

//! Fixtures shared by the benchmarks: a solver problem and a tracking sequence sized like
//! the default tracker's (50×50 grid, 13 channels).

use rpcf::bench::{generate, SyntheticSequence, SyntheticSpec};
use rpcf::selftest::{random_problem, RandomProblem};
use rpcf::spectral::{RealGrid, Spectrum};
use rpcf::tracker::{Tracker, TrackerConfig};

pub const GRID: (usize, usize) = (50, 50);
pub const CHANNELS: usize = 13;

/// Six samples in memory, kernel 2.
pub fn solver_problem() -> RandomProblem {
    random_problem(GRID, CHANNELS, 2, 6, 1).expect("solver fixture")
}

/// Per-channel penalties at their cap.
pub fn penalties() -> Vec<f64> {
    vec![1000.0; CHANNELS]
}

/// Smooth real grid on the default filter grid.
pub fn grid() -> RealGrid {
    RealGrid::from_fn(GRID.0, GRID.1, |r, c| ((r * 7 + c * 3) as f64).sin())
}

pub fn spectra(n: usize) -> Vec<Spectrum> {
    (0..n)
        .map(|k| {
            let g = grid().map(|v| v * (k + 1) as f64);
            rpcf::spectral::forward(&g).expect("finite grid")
        })
        .collect()
}

/// Translating sequence of `frames` frames.
pub fn sequence(frames: usize) -> SyntheticSequence {
    generate(&SyntheticSpec {
        frames,
        ..SyntheticSpec::translating(1)
    })
    .expect("sequence")
}

/// Tracker initialized on frame 0 of `seq`.
pub fn tracker(seq: &SyntheticSequence) -> Tracker {
    Tracker::init(&seq.frames[0], seq.boxes[0], TrackerConfig::default()).expect("tracker")
}

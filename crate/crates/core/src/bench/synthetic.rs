//! Procedural test sequences: a textured, colored target moving over a static textured
//! background, with optional non-rigid deformation.

use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{Frames, Sequence};
use crate::error::{Error, Result};
use crate::features::Frame;
use crate::tracker::BBox;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub target_size: (f64, f64),
    /// Target center on the first frame.
    pub start: (f64, f64),
    /// Pixels per frame.
    pub velocity: (f64, f64),
    /// Warp amplitude as a fraction of the target half-size; 0 keeps the target rigid.
    pub deformation: f64,
    /// Warp phase advance per frame in radians.
    pub deformation_rate: f64,
    /// Per-pixel noise amplitude in gray levels.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 100 frames of a 40×40 target moving 2 px per frame.
    pub fn translating(seed: u64) -> Self {
        Self {
            name: "translate".into(),
            width: 320,
            height: 240,
            frames: 100,
            target_size: (40.0, 40.0),
            start: (60.0, 60.0),
            velocity: (1.6, 1.2),
            deformation: 0.0,
            deformation_rate: 0.1,
            noise: 4.0,
            seed,
        }
    }

    /// Translating target whose shape and texture are warped with the given amplitude.
    pub fn deforming(amplitude: f64, seed: u64) -> Self {
        Self {
            name: format!("deform_{:03}", (amplitude * 100.0).round() as i64),
            deformation: amplitude,
            ..Self::translating(seed)
        }
    }

    /// Target that never moves.
    pub fn stationary(frames: usize, seed: u64) -> Self {
        Self {
            name: "static".into(),
            frames,
            start: (160.0, 120.0),
            velocity: (0.0, 0.0),
            ..Self::translating(seed)
        }
    }
}

/// Sum of random plane waves, one set per color channel.
struct Texture {
    waves: Vec<[(f64, f64, f64, f64); 3]>,
    base: [f64; 3],
}

impl Texture {
    fn random(
        rng: &mut ChaCha8Rng,
        waves: usize,
        freq: (f64, f64),
        amp: f64,
        base: [f64; 3],
    ) -> Self {
        let waves = (0..waves)
            .map(|_| {
                let mut w = [(0.0, 0.0, 0.0, 0.0); 3];
                for c in &mut w {
                    let f = rng.random_range(freq.0..freq.1);
                    let theta = rng.random_range(0.0..TAU);
                    *c = (
                        f * theta.cos(),
                        f * theta.sin(),
                        rng.random_range(0.0..TAU),
                        amp,
                    );
                }
                w
            })
            .collect();
        Self { waves, base }
    }

    fn at(&self, x: f64, y: f64) -> [f64; 3] {
        let mut out = self.base;
        for w in &self.waves {
            for (o, &(fx, fy, phase, amp)) in out.iter_mut().zip(w) {
                *o += amp * (fx * x + fy * y + phase).sin();
            }
        }
        out
    }
}

/// Rendered frames with ground-truth boxes.
#[derive(Clone, Debug)]
pub struct SyntheticSequence {
    pub frames: Vec<Frame>,
    pub boxes: Vec<BBox>,
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticSequence> {
    if spec.width == 0 || spec.height == 0 || spec.frames == 0 {
        return Err(Error::invalid("synthetic sequence must be non-empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let background = Texture::random(&mut rng, 6, (0.02, 0.25), 18.0, [100.0, 115.0, 120.0]);
    let target = Texture::random(&mut rng, 5, (0.15, 0.5), 35.0, [190.0, 90.0, 40.0]);
    let accent = Texture::random(&mut rng, 3, (0.05, 0.15), 1.0, [0.0; 3]);
    let (hw, hh) = (spec.target_size.0 / 2.0, spec.target_size.1 / 2.0);
    let backdrop: Vec<[f64; 3]> = (0..spec.height)
        .flat_map(|y| (0..spec.width).map(move |x| (x as f64, y as f64)))
        .map(|(x, y)| background.at(x, y))
        .collect();

    let mut frames = Vec::with_capacity(spec.frames);
    let mut boxes = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let cx = spec.start.0 + spec.velocity.0 * t as f64;
        let cy = spec.start.1 + spec.velocity.1 * t as f64;
        let phase = spec.deformation_rate * t as f64;
        let mut data = Vec::with_capacity(spec.width * spec.height * 3);
        for y in 0..spec.height {
            for x in 0..spec.width {
                let (xf, yf) = (x as f64, y as f64);
                let mut px = backdrop[y * spec.width + x];
                let u = (xf - cx) / hw;
                let v = (yf - cy) / hh;
                if u.abs() < 1.6 && v.abs() < 1.6 {
                    let a = spec.deformation;
                    let uw = u + a * (TAU * 0.5 * v + phase).sin();
                    let vw = v + a * (TAU * 0.5 * u + 1.3 * phase).sin();
                    let r = (uw.powi(4) + vw.powi(4)).powf(0.25);
                    let alpha = (1.0 - r).mul_add(8.0, 0.5).clamp(0.0, 1.0);
                    if alpha > 0.0 {
                        let tex = target.at(uw * hw, vw * hh);
                        let stripe = accent.at(uw * hw, vw * hh)[0];
                        let tex = [tex[0] + 30.0 * stripe, tex[1] + 60.0 * stripe, tex[2]];
                        for (p, q) in px.iter_mut().zip(tex) {
                            *p = *p * (1.0 - alpha) + q * alpha;
                        }
                    }
                }
                for p in px {
                    let n = if spec.noise > 0.0 {
                        rng.random_range(-spec.noise..spec.noise)
                    } else {
                        0.0
                    };
                    data.push((p + n).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        frames.push(Frame::new(spec.width, spec.height, 3, data)?);
        boxes.push(BBox::from_center((cx, cy), spec.target_size));
    }
    Ok(SyntheticSequence { frames, boxes })
}

impl SyntheticSequence {
    pub fn into_sequence(self, name: &str) -> Result<Sequence> {
        Sequence::new(name, Frames::Memory(self.frames), self.boxes)
    }

    /// Write in the OTB layout: `img/0001.png…` and a 1-indexed `groundtruth_rect.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let img = dir.join("img");
        fs::create_dir_all(&img).map_err(|e| Error::io(&img, e))?;
        for (i, frame) in self.frames.iter().enumerate() {
            frame.save_png(&img.join(format!("{:04}.png", i + 1)))?;
        }
        let gt = dir.join("groundtruth_rect.txt");
        let mut file = fs::File::create(&gt).map_err(|e| Error::io(&gt, e))?;
        for b in &self.boxes {
            writeln!(file, "{},{},{},{}", b.x + 1.0, b.y + 1.0, b.w, b.h)
                .map_err(|e| Error::io(&gt, e))?;
        }
        Ok(())
    }
}

/// Sequences of increasing deformation amplitude for the ablation comparison.
pub fn deformation_sweep(amplitudes: &[f64], seed: u64) -> Result<Vec<Sequence>> {
    amplitudes
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let spec = SyntheticSpec::deforming(a, seed + i as u64);
            generate(&spec)?.into_sequence(&spec.name)
        })
        .collect()
}

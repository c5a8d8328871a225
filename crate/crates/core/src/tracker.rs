//! Online tracking loop: first-frame training, multi-scale detection with sub-cell
//! refinement, and scheduled model updates.

use rayon::prelude::*;

use crate::constraints::RegularizerParams;
use crate::error::{Error, Result};
use crate::features::{
    extract_patch, FeatureConfig, FeatureExtractor, FeatureStack, Frame, Patch, PcaProjection,
};
use crate::memory::SampleMemory;
use crate::solver::{
    admm_solve, AdmmReport, AdmmState, CgDirection, SolverConfig, SpectralFilter, TrainingProblem,
    WarmStart,
};
use crate::spectral::{forward, inverse_unchecked, subpixel_peak, Complex64, RealGrid, Spectrum};

/// Axis-aligned box, top-left corner and size in pixels (0-indexed).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_center(center: (f64, f64), size: (f64, f64)) -> Self {
        Self::new(
            center.0 - size.0 / 2.0,
            center.1 - size.1 / 2.0,
            size.0,
            size.1,
        )
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h]
            .iter()
            .all(|v| v.is_finite())
            && self.w > 0.0
            && self.h > 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerConfig {
    pub features: FeatureConfig,
    pub solver: SolverConfig,
    /// Pooling kernel edge `e` in cells; 1 disables the constraints.
    pub kernel: usize,
    /// Search region edge as a multiple of `√(w·h)`.
    pub search_area_scale: f64,
    /// Bounds on the canonical (resampled) patch edge in pixels.
    pub min_patch_side: usize,
    pub max_patch_side: usize,
    pub sigma_factor: f64,
    pub regularizer: RegularizerParams,
    pub num_scales: usize,
    pub scale_step: f64,
    /// Scale bounds relative to the first frame.
    pub min_scale: f64,
    pub max_scale: f64,
    pub memory_capacity: usize,
    pub learning_rate: f64,
    pub update_interval: usize,
    pub upsample: usize,
    pub newton_iters: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            solver: SolverConfig::default(),
            kernel: 2,
            search_area_scale: 5.0,
            min_patch_side: 200,
            max_patch_side: 250,
            sigma_factor: 0.1,
            regularizer: RegularizerParams::default(),
            num_scales: 5,
            scale_step: 1.02,
            min_scale: 0.2,
            max_scale: 5.0,
            memory_capacity: 50,
            learning_rate: 0.02,
            update_interval: 6,
            upsample: 4,
            newton_iters: 5,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        let cfg = |m: &str| Err(Error::Config(m.to_string()));
        if self.kernel == 0 {
            return cfg("kernel must be positive");
        }
        if !(self.search_area_scale > 0.0) {
            return cfg("search_area_scale must be positive");
        }
        if self.min_patch_side == 0 || self.min_patch_side > self.max_patch_side {
            return cfg("need 0 < min_patch_side <= max_patch_side");
        }
        if !(self.sigma_factor > 0.0) {
            return cfg("sigma_factor must be positive");
        }
        if self.num_scales == 0 || !(self.scale_step >= 1.0) {
            return cfg("need num_scales >= 1 and scale_step >= 1");
        }
        if !(self.min_scale > 0.0 && self.min_scale <= 1.0 && self.max_scale >= 1.0) {
            return cfg("need 0 < min_scale <= 1 <= max_scale");
        }
        if self.upsample == 0 {
            return cfg("upsample must be positive");
        }
        Ok(())
    }

    /// Relative scale factors tried at detection, symmetric around 1.
    pub fn scale_factors(&self) -> Vec<f64> {
        let mid = (self.num_scales as f64 - 1.0) / 2.0;
        (0..self.num_scales)
            .map(|k| self.scale_step.powf(k as f64 - mid))
            .collect()
    }
}

/// Fixed patch and grid geometry chosen on the first frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    /// Canonical patch edge in pixels.
    pub patch_side: usize,
    /// Frame pixels per canonical pixel at scale 1.
    pub base_scale: f64,
    /// Canonical pixels per grid cell.
    pub stride: usize,
    pub grid: (usize, usize),
    pub target_cells: (usize, usize),
}

impl Geometry {
    fn new(config: &TrackerConfig, size: (f64, f64), stride: usize) -> Result<Self> {
        let region = config.search_area_scale * (size.0 * size.1).sqrt();
        let clamped = region.clamp(config.min_patch_side as f64, config.max_patch_side as f64);
        let patch_side = ((clamped / stride as f64).round() as usize).max(1) * stride;
        let base_scale = region / patch_side as f64;
        let grid = (patch_side / stride, patch_side / stride);
        let cells =
            |v: f64, n: usize| ((v / (base_scale * stride as f64)).round() as usize).clamp(1, n);
        let target_cells = (cells(size.1, grid.0), cells(size.0, grid.1));
        Ok(Self {
            patch_side,
            base_scale,
            stride,
            grid,
            target_cells,
        })
    }

    /// Frame pixels per grid cell at `scale`.
    pub fn cell_pixels(&self, scale: f64) -> f64 {
        self.stride as f64 * self.base_scale * scale
    }
}

/// Response map of one detection scale.
#[derive(Clone, Debug)]
pub struct ScaleResponse {
    /// Factor relative to the current scale.
    pub factor: f64,
    pub response: RealGrid,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Localization {
    pub center: (f64, f64),
    pub scale: f64,
    /// Index of the selected scale.
    pub scale_index: usize,
    pub peak: f64,
    /// Cell offset of the peak, `(dy, dx)`.
    pub offset: (f64, f64),
    /// All responses were flat; the previous center is kept.
    pub degenerate: bool,
}

/// Per-frame diagnostics.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub bbox: BBox,
    pub localization: Localization,
    /// Solver trace when the model was updated on this frame.
    pub update: Option<AdmmReport>,
}

#[derive(Clone, Debug)]
pub struct Tracker {
    config: TrackerConfig,
    extractor: FeatureExtractor,
    geometry: Geometry,
    problem: TrainingProblem,
    projection: PcaProjection,
    gain: f64,
    memory: SampleMemory,
    filter: SpectralFilter,
    admm: AdmmState,
    direction: Option<CgDirection>,
    center: (f64, f64),
    target_size: (f64, f64),
    scale: f64,
    color: bool,
    frame_index: usize,
    first_report: AdmmReport,
}

fn to_gray(patch: Patch) -> Patch {
    if patch.channels == 1 {
        return patch;
    }
    let data = patch
        .data
        .chunks_exact(patch.channels)
        .map(|px| px.iter().sum::<f64>() / patch.channels as f64)
        .collect();
    Patch {
        channels: 1,
        data,
        ..patch
    }
}

impl Tracker {
    /// Train the first model from `bbox` on `frame`.
    pub fn init(frame: &Frame, bbox: BBox, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        if !bbox.is_valid() {
            return Err(Error::invalid(format!("degenerate box {bbox:?}")));
        }
        if frame.is_empty() {
            return Err(Error::invalid("empty first frame"));
        }
        let (fw, fh) = (frame.width() as f64, frame.height() as f64);
        let center = bbox.center();
        if bbox.w > fw
            || bbox.h > fh
            || !(0.0..fw).contains(&center.0)
            || !(0.0..fh).contains(&center.1)
        {
            return Err(Error::invalid(format!(
                "box {bbox:?} does not fit the {}x{} frame",
                frame.width(),
                frame.height()
            )));
        }
        let extractor = FeatureExtractor::new(config.features.clone())?;
        let geometry = Geometry::new(&config, (bbox.w, bbox.h), extractor.stride())?;
        let color = frame.channels() == 3 && !frame.is_grayscale();

        let patch = Self::patch_for(&geometry, color, frame, center, 1.0)?;
        let raw = extractor.raw_features(&patch)?;
        let projection = extractor.fit_projection(&raw)?;
        let mut stack = extractor.finish(&raw, &projection)?;
        let gain = extractor.normalization_gain(&stack);
        stack.scale(gain);
        if stack.dims() != geometry.grid {
            return Err(Error::DimensionMismatch {
                expected: geometry.grid,
                actual: stack.dims(),
            });
        }
        let problem = TrainingProblem::build(
            geometry.grid,
            geometry.target_cells,
            config.kernel,
            config.sigma_factor,
            config.regularizer,
            stack.channel_penalties(),
        )?;
        let mut memory = SampleMemory::new(
            config.memory_capacity,
            config.learning_rate,
            config.update_interval,
        )?;
        memory.insert(Self::spectra(&geometry, &stack)?, 1)?;
        let report = admm_solve(
            &memory,
            &problem,
            &config.solver,
            &config.solver.first_frame_schedule(),
            WarmStart::default(),
        )?;
        log::debug!(
            "first frame: grid {:?}, target cells {:?}, constraint residual {:.3e}",
            geometry.grid,
            geometry.target_cells,
            report.constraint_residual
        );
        Ok(Self {
            filter: report.filter.clone(),
            admm: report.state.clone(),
            direction: report.direction.clone(),
            first_report: report,
            config,
            extractor,
            geometry,
            problem,
            projection,
            gain,
            memory,
            center,
            target_size: (bbox.w, bbox.h),
            scale: 1.0,
            color,
            frame_index: 1,
        })
    }

    fn patch_for(
        geometry: &Geometry,
        color: bool,
        frame: &Frame,
        center: (f64, f64),
        scale: f64,
    ) -> Result<Patch> {
        let side = geometry.patch_side as f64 * geometry.base_scale;
        let patch = extract_patch(
            frame,
            center,
            (side, side),
            scale,
            (geometry.patch_side, geometry.patch_side),
        )?;
        Ok(if color { patch } else { to_gray(patch) })
    }

    /// Spectra of a stack with the patch-center cell moved to the origin.
    fn spectra(geometry: &Geometry, stack: &FeatureStack) -> Result<Vec<Spectrum>> {
        let (gr, gc) = geometry.grid;
        let shifted = stack.circular_shift(-((gr / 2) as isize), -((gc / 2) as isize));
        shifted.channels.iter().map(forward).collect()
    }

    /// Features of `frame` around `center` at `scale`, as centered spectra.
    pub fn sample_spectra(
        &self,
        frame: &Frame,
        center: (f64, f64),
        scale: f64,
    ) -> Result<Vec<Spectrum>> {
        let patch = Self::patch_for(&self.geometry, self.color, frame, center, scale)?;
        let mut stack = self.extractor.build(&patch, &self.projection)?;
        stack.scale(self.gain);
        Self::spectra(&self.geometry, &stack)
    }

    /// `r = F⁻¹(Σ_d x̂_d ⊙ ŵ_d)`.
    pub fn response(&self, spectra: &[Spectrum]) -> Result<RealGrid> {
        response_map(&self.filter, spectra)
    }

    /// One response map per detection scale around the current state.
    pub fn compute_responses(&self, frame: &Frame) -> Result<Vec<ScaleResponse>> {
        self.config
            .scale_factors()
            .into_par_iter()
            .map(|factor| {
                let spectra = self.sample_spectra(frame, self.center, self.scale * factor)?;
                Ok(ScaleResponse {
                    factor,
                    response: self.response(&spectra)?,
                })
            })
            .collect()
    }

    /// Pick the scale with the highest refined peak and convert its offset to pixels.
    pub fn localize(&self, frame: &Frame, responses: &[ScaleResponse]) -> Result<Localization> {
        localize(
            responses,
            self.center,
            self.scale,
            &self.geometry,
            (self.config.upsample, self.config.newton_iters),
            (self.config.min_scale, self.config.max_scale),
            (frame.width(), frame.height()),
        )
    }

    /// Track one frame and update the model on schedule.
    pub fn step(&mut self, frame: &Frame) -> Result<StepReport> {
        if frame.is_empty() {
            return Err(Error::invalid("empty frame"));
        }
        self.frame_index += 1;
        let responses = self.compute_responses(frame)?;
        let loc = self.localize(frame, &responses)?;
        self.center = loc.center;
        self.scale = loc.scale;

        let sample = self.sample_spectra(frame, self.center, self.scale)?;
        self.memory.insert(sample, self.frame_index)?;
        let update = if self.memory.should_update(self.frame_index) {
            let report = admm_solve(
                &self.memory,
                &self.problem,
                &self.config.solver,
                &self.config.solver.update_schedule(),
                WarmStart {
                    filter: Some(self.filter.clone()),
                    state: Some(self.admm.clone()),
                    direction: self.direction.clone(),
                },
            )?;
            self.filter = report.filter.clone();
            self.admm = report.state.clone();
            self.direction = report.direction.clone();
            Some(report)
        } else {
            None
        };
        Ok(StepReport {
            bbox: self.bbox(),
            localization: loc,
            update,
        })
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_center(
            self.center,
            (
                self.target_size.0 * self.scale,
                self.target_size.1 * self.scale,
            ),
        )
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn filter(&self) -> &SpectralFilter {
        &self.filter
    }

    pub fn admm_state(&self) -> &AdmmState {
        &self.admm
    }

    pub fn memory(&self) -> &SampleMemory {
        &self.memory
    }

    pub fn problem(&self) -> &TrainingProblem {
        &self.problem
    }

    pub fn projection(&self) -> &PcaProjection {
        &self.projection
    }

    pub fn center(&self) -> (f64, f64) {
        self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn is_color(&self) -> bool {
        self.color
    }

    /// Solver trace of the first-frame training.
    pub fn first_frame_report(&self) -> &AdmmReport {
        &self.first_report
    }
}

/// `F⁻¹(Σ_d x̂_d ⊙ ŵ_d)`.
pub fn response_map(filter: &SpectralFilter, spectra: &[Spectrum]) -> Result<RealGrid> {
    if spectra.len() != filter.len() {
        return Err(Error::invalid(format!(
            "{} sample channels for a {}-channel filter",
            spectra.len(),
            filter.len()
        )));
    }
    let (rows, cols) = filter.dims();
    let mut acc = vec![Complex64::new(0.0, 0.0); rows * cols];
    for (x, w) in spectra.iter().zip(&filter.channels) {
        if x.dims() != (rows, cols) {
            return Err(Error::DimensionMismatch {
                expected: (rows, cols),
                actual: x.dims(),
            });
        }
        for ((a, xv), wv) in acc.iter_mut().zip(x.as_slice()).zip(w.as_slice()) {
            *a += xv * wv;
        }
    }
    Ok(inverse_unchecked(&Spectrum::from_vec(rows, cols, acc)?))
}

/// Select the scale with the largest refined peak (ties go to the factor closest to 1),
/// convert the cell offset to pixels and clamp the result.
pub fn localize(
    responses: &[ScaleResponse],
    center: (f64, f64),
    scale: f64,
    geometry: &Geometry,
    refine: (usize, usize),
    scale_bounds: (f64, f64),
    frame_size: (usize, usize),
) -> Result<Localization> {
    if responses.is_empty() {
        return Err(Error::invalid("no responses to localize"));
    }
    let mut best: Option<(usize, crate::spectral::Peak)> = None;
    for (k, r) in responses.iter().enumerate() {
        let peak = subpixel_peak(&r.response, refine.0, refine.1)?;
        if peak.degenerate {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bk, bp)) => {
                peak.value > bp.value
                    || (peak.value == bp.value
                        && r.factor.ln().abs() < responses[*bk].factor.ln().abs())
            }
        };
        if better {
            best = Some((k, peak));
        }
    }
    let Some((k, peak)) = best else {
        return Ok(Localization {
            center,
            scale,
            scale_index: responses.len() / 2,
            peak: 0.0,
            offset: (0.0, 0.0),
            degenerate: true,
        });
    };
    let factor = responses[k].factor;
    let cell = geometry.cell_pixels(scale * factor);
    let clamp_axis = |v: f64, n: usize| v.clamp(0.0, (n.max(1) - 1) as f64);
    let new_center = (
        clamp_axis(center.0 + peak.dx * cell, frame_size.0),
        clamp_axis(center.1 + peak.dy * cell, frame_size.1),
    );
    Ok(Localization {
        center: new_center,
        scale: (scale * factor).clamp(scale_bounds.0, scale_bounds.1),
        scale_index: k,
        peak: peak.value,
        offset: (peak.dy, peak.dx),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry() -> Geometry {
        Geometry {
            patch_side: 80,
            base_scale: 1.0,
            stride: 4,
            grid: (20, 20),
            target_cells: (5, 5),
        }
    }

    fn delta(at: (usize, usize), value: f64) -> RealGrid {
        let mut g = RealGrid::zeros(20, 20);
        g[at] = value;
        g
    }

    #[test]
    fn delta_response_converts_to_pixels() {
        let r = vec![ScaleResponse {
            factor: 1.0,
            response: delta((2, 3), 1.0),
        }];
        let loc = localize(
            &r,
            (100.0, 100.0),
            1.0,
            &geometry(),
            (4, 5),
            (0.2, 5.0),
            (400, 400),
        )
        .unwrap();
        assert!(!loc.degenerate);
        assert!((loc.center.0 - 112.0).abs() < 1e-6 && (loc.center.1 - 108.0).abs() < 1e-6);
    }

    #[test]
    fn flat_responses_hold_position() {
        let r = vec![ScaleResponse {
            factor: 1.0,
            response: RealGrid::filled(20, 20, 0.3),
        }];
        let loc = localize(
            &r,
            (50.0, 60.0),
            1.0,
            &geometry(),
            (4, 5),
            (0.2, 5.0),
            (400, 400),
        )
        .unwrap();
        assert!(loc.degenerate);
        assert_eq!(loc.center, (50.0, 60.0));
    }

    #[test]
    fn strongest_scale_wins() {
        let r = vec![
            ScaleResponse {
                factor: 1.0,
                response: delta((0, 0), 1.0),
            },
            ScaleResponse {
                factor: 1.02,
                response: delta((0, 0), 2.0),
            },
        ];
        let loc = localize(
            &r,
            (50.0, 50.0),
            1.0,
            &geometry(),
            (4, 5),
            (0.2, 5.0),
            (400, 400),
        )
        .unwrap();
        assert_eq!(loc.scale_index, 1);
        assert!((loc.scale - 1.02).abs() < 1e-12);
    }

    #[test]
    fn center_clamped_to_frame() {
        let r = vec![ScaleResponse {
            factor: 1.0,
            response: delta((0, 18), 1.0),
        }];
        let loc = localize(
            &r,
            (2.0, 2.0),
            1.0,
            &geometry(),
            (4, 5),
            (0.2, 5.0),
            (400, 400),
        )
        .unwrap();
        assert_eq!(loc.center.0, 0.0);
    }

    #[test]
    fn scale_factors_symmetric() {
        let f = TrackerConfig::default().scale_factors();
        assert_eq!(f.len(), 5);
        assert!((f[2] - 1.0).abs() < 1e-15);
        assert!((f[0] * f[4] - 1.0).abs() < 1e-12);
    }
}

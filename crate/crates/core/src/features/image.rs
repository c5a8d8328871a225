//! Frames and patch sampling.

use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit raster with one (gray) or three (RGB) interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "frame data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let gray = matches!(
            img.color(),
            image::ColorType::L8
                | image::ColorType::L16
                | image::ColorType::La8
                | image::ColorType::La16
        );
        if gray {
            let buf = img.to_luma8();
            let (w, h) = buf.dimensions();
            Self::new(w as usize, h as usize, 1, buf.into_raw())
        } else {
            let buf = img.to_rgb8();
            let (w, h) = buf.dimensions();
            Self::new(w as usize, h as usize, 3, buf.into_raw())
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    /// True for single-channel frames and for RGB frames whose channels all agree.
    pub fn is_grayscale(&self) -> bool {
        self.channels == 1
            || self
                .data
                .chunks_exact(3)
                .all(|p| p[0] == p[1] && p[1] == p[2])
    }

    fn sample(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c.min(self.channels - 1)] as f64
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            color,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Floating-point patch, values on the 0..=255 scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Patch {
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn is_color(&self) -> bool {
        self.channels == 3
    }

    /// Rotate by 90° counter-clockwise.
    pub fn rotate90(&self) -> Patch {
        let (w, h) = (self.height, self.width);
        let mut data = vec![0.0; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                for c in 0..self.channels {
                    data[(y * w + x) * self.channels + c] = self.get(self.width - 1 - y, x, c);
                }
            }
        }
        Patch {
            width: w,
            height: h,
            channels: self.channels,
            data,
        }
    }
}

/// Crop a `size · scale` region around `center` (pixels, `(x, y)`) and resample it to
/// `out_size` with bilinear interpolation. Corner samples land on the region's corner
/// pixels; out-of-frame samples replicate the nearest edge pixel.
pub fn extract_patch(
    frame: &Frame,
    center: (f64, f64),
    size: (f64, f64),
    scale: f64,
    out_size: (usize, usize),
) -> Result<Patch> {
    if frame.is_empty() {
        return Err(Error::invalid("empty frame"));
    }
    if !(size.0 > 0.0 && size.1 > 0.0 && scale > 0.0) {
        return Err(Error::invalid("patch size and scale must be positive"));
    }
    if out_size.0 == 0 || out_size.1 == 0 {
        return Err(Error::invalid("output patch must be non-empty"));
    }
    let (region_w, region_h) = (size.0 * scale, size.1 * scale);
    let left = center.0 - region_w / 2.0;
    let top = center.1 - region_h / 2.0;
    let coord = |start: f64, region: f64, i: usize, n: usize| {
        if n > 1 {
            start + (region - 1.0) * i as f64 / (n - 1) as f64
        } else {
            start
        }
    };
    let max_x = (frame.width - 1) as f64;
    let max_y = (frame.height - 1) as f64;
    let channels = frame.channels;
    let mut data = Vec::with_capacity(out_size.0 * out_size.1 * channels);
    for j in 0..out_size.1 {
        let y = coord(top, region_h, j, out_size.1).clamp(0.0, max_y);
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(frame.height - 1);
        let fy = y - y0 as f64;
        for i in 0..out_size.0 {
            let x = coord(left, region_w, i, out_size.0).clamp(0.0, max_x);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(frame.width - 1);
            let fx = x - x0 as f64;
            for c in 0..channels {
                let top_row = frame.sample(x0, y0, c) * (1.0 - fx) + frame.sample(x1, y0, c) * fx;
                let bottom = frame.sample(x0, y1, c) * (1.0 - fx) + frame.sample(x1, y1, c) * fx;
                data.push(top_row * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Ok(Patch {
        width: out_size.0,
        height: out_size.1,
        channels,
        data,
    })
}

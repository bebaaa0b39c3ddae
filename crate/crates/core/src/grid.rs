//! Dense scalar fields over the image lattice.
//!
//! A [`SaliencyGrid`] is the common currency between the engine and the
//! metrics: bottom-up saliency, human fixation maps, transition maps and
//! scanpath-based maps are all stored this way. Values are row-major,
//! `values[y * width + x]`.

use std::io::{Read, Write};
use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SGF_MAGIC: &[u8; 4] = b"SGF1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    Raw,
    SumToOne,
    MaxOne,
    ZScored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
    normalization: Normalization,
}

impl SaliencyGrid {
    /// Wraps raw values. Negative or non-finite values are rejected.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_normalization(width, height, values, Normalization::Raw)
    }

    pub fn with_normalization(
        width: usize,
        height: usize,
        values: Vec<f64>,
        normalization: Normalization,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Validation(format!(
                "grid {}x{} needs {} values, got {}",
                width,
                height,
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite value at index {i}")));
        }
        if normalization != Normalization::ZScored {
            if let Some(i) = values.iter().position(|&v| v < 0.0) {
                return Err(Error::Validation(format!(
                    "negative saliency {} at ({}, {})",
                    values[i],
                    i % width,
                    i / width
                )));
            }
        }
        Ok(Self { width, height, values, normalization })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub fn uniform(width: usize, height: usize) -> Result<Self> {
        let n = (width * height) as f64;
        Self::with_normalization(width, height, vec![1.0 / n; width * height], Normalization::SumToOne)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Value at the pixel containing a (possibly fractional) point.
    pub fn at_point(&self, x: f64, y: f64) -> f64 {
        let (col, row) = self.pixel_of(x, y);
        self.get(col, row)
    }

    /// Pixel containing a point, clamped into the grid.
    pub fn pixel_of(&self, x: f64, y: f64) -> (usize, usize) {
        let col = (x.floor().max(0.0) as usize).min(self.width - 1);
        let row = (y.floor().max(0.0) as usize).min(self.height - 1);
        (col, row)
    }

    pub fn same_shape(&self, other: &SaliencyGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Row-major index of the first maximum.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn to_sum_one(&self) -> Result<SaliencyGrid> {
        if self.normalization == Normalization::ZScored {
            return Err(Error::Validation("cannot sum-normalize a z-scored map".into()));
        }
        let total = self.sum();
        if total <= 0.0 {
            return Err(Error::Validation("map has zero total mass".into()));
        }
        Ok(SaliencyGrid {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| v / total).collect(),
            normalization: Normalization::SumToOne,
        })
    }

    pub fn to_max_one(&self) -> Result<SaliencyGrid> {
        let max = self.max();
        if max <= 0.0 {
            return Err(Error::Validation("map has no positive value".into()));
        }
        Ok(SaliencyGrid {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| v / max).collect(),
            normalization: Normalization::MaxOne,
        })
    }

    /// Zero mean, unit (sample) standard deviation.
    pub fn to_z_scored(&self) -> Result<SaliencyGrid> {
        let n = self.values.len() as f64;
        let mean = self.sum() / n;
        let var = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let std = var.sqrt();
        if self.max() == self.min() || !(std > 0.0) {
            return Err(Error::Undefined("map is constant; z-score undefined".into()));
        }
        Ok(SaliencyGrid {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| (v - mean) / std).collect(),
            normalization: Normalization::ZScored,
        })
    }

    /// Area-averaged reduction to at most `max_side` cells per side. Output cell
    /// `(i, j)` averages the source pixels whose centers fall in its footprint.
    pub fn downsample(&self, max_side: usize) -> Result<SaliencyGrid> {
        if max_side == 0 {
            return Err(Error::Config("downsample side must be positive".into()));
        }
        let out_w = self.width.min(max_side);
        let out_h = self.height.min(max_side);
        if out_w == self.width && out_h == self.height {
            return Ok(self.clone());
        }
        let mut sums = vec![0.0; out_w * out_h];
        let mut counts = vec![0usize; out_w * out_h];
        for y in 0..self.height {
            let oy = y * out_h / self.height;
            for x in 0..self.width {
                let ox = x * out_w / self.width;
                sums[oy * out_w + ox] += self.get(x, y);
                counts[oy * out_w + ox] += 1;
            }
        }
        let values = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
        SaliencyGrid::with_normalization(out_w, out_h, values, self.normalization)
    }

    pub fn write_sgf(&self, mut w: impl Write) -> Result<()> {
        w.write_all(SGF_MAGIC)?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for &v in &self.values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads an `SGF1` container. Values are taken as stored (tag `raw`).
    pub fn read_sgf(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; 12];
        r.read_exact(&mut header)?;
        if &header[..4] != SGF_MAGIC {
            return Err(Error::Validation("not an SGF1 file (bad magic)".into()));
        }
        let width = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != width * height * 4 {
            return Err(Error::Validation(format!(
                "SGF1 body has {} bytes, expected {} for {}x{}",
                body.len(),
                width * height * 4,
                width,
                height
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::new(width, height, values)
    }

    /// Loads an 8- or 16-bit grayscale PNG: rescaled to [0,1] by the bit depth,
    /// then sum-normalized.
    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?;
        let (width, height) = (img.width() as usize, img.height() as usize);
        let values: Vec<f64> = match img {
            image::DynamicImage::ImageLuma8(buf) => {
                buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()
            }
            image::DynamicImage::ImageLuma16(buf) => {
                buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
            }
            other => {
                return Err(Error::Validation(format!(
                    "expected 8/16-bit grayscale PNG, got {:?}",
                    other.color()
                )))
            }
        };
        Self::new(width, height, values)?.to_sum_one()
    }

    /// Writes the map as a 16-bit grayscale PNG scaled so the maximum maps to 65535.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let scaled = self.display_scaled();
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(
            self.width as u32,
            self.height as u32,
            |x, y| Luma([(scaled[y as usize * self.width + x as usize] * 65535.0).round() as u16]),
        );
        buf.save(path.as_ref())?;
        Ok(())
    }

    /// Writes an RGB heatmap using the fixed colormap of [`heat_color`].
    pub fn write_heatmap_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let scaled = self.display_scaled();
        let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
            ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
                Rgb(heat_color(scaled[y as usize * self.width + x as usize]))
            });
        buf.save(path.as_ref())?;
        Ok(())
    }

    /// Loads by extension: `.png` as grayscale PNG, anything else as `SGF1`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png {
            Self::read_png(path)
        } else {
            let file = std::fs::File::open(path)?;
            Self::read_sgf(std::io::BufReader::new(file))
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png {
            self.write_png(path)
        } else {
            let file = std::fs::File::create(path)?;
            let mut w = std::io::BufWriter::new(file);
            self.write_sgf(&mut w)?;
            w.flush()?;
            Ok(())
        }
    }

    fn display_scaled(&self) -> Vec<f64> {
        let (lo, hi) = (self.min(), self.max());
        let span = hi - lo;
        if span <= 0.0 {
            return vec![if hi > 0.0 { 1.0 } else { 0.0 }; self.values.len()];
        }
        self.values.iter().map(|v| (v - lo) / span).collect()
    }
}

/// Monotone black → red → yellow → white ramp for `t` in [0,1].
pub fn heat_color(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * 3.0;
    let r = t.min(1.0);
    let g = (t - 1.0).clamp(0.0, 1.0);
    let b = (t - 2.0).clamp(0.0, 1.0);
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8]
}

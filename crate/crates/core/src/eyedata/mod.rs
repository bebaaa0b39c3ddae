//! Eye-tracking data: fixation logs, saccade samples, fixation-density maps
//! and center-bias statistics.

mod log;

use serde::{Deserialize, Serialize};

pub use log::{parse_fixation_log, parse_records, write_fixation_log, FixationRecord, LOG_COLUMNS};

use crate::error::{Error, Result};
use crate::grid::{Normalization, SaliencyGrid};

/// Pixels per degree of visual angle for a 60 cm viewing distance on the
/// reference display.
pub const DEFAULT_PPD: f64 = 28.0;

/// Number of concentric crowns used for center-bias statistics.
pub const CROWN_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
}

impl Geometry {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64
    }
}

/// A fixation in pixel coordinates: `x` is the column (0 at left), `y` the
/// row (0 at top).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationPoint {
    pub x: f64,
    pub y: f64,
    pub index: u32,
    pub duration_ms: Option<f64>,
}

impl FixationPoint {
    pub fn new(x: f64, y: f64, index: u32) -> Self {
        Self { x, y, index, duration_ms: None }
    }

    pub fn distance_to(&self, other: &FixationPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixationSequence {
    pub observer_id: String,
    pub image_id: String,
    pub group_id: String,
    pub fixations: Vec<FixationPoint>,
    pub width: usize,
    pub height: usize,
}

impl FixationSequence {
    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.width, self.height)
    }
}

/// One saccade in degrees: amplitude ≥ 0 and orientation in [0, 360), with
/// 90° pointing to the top of the screen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaccadeSample {
    pub amplitude: f64,
    pub orientation: f64,
}

impl SaccadeSample {
    pub fn new(amplitude: f64, orientation: f64) -> Self {
        Self { amplitude, orientation: wrap_degrees(orientation) }
    }

    /// Saccade for a pixel displacement with screen (top-down) `dy`.
    pub fn from_displacement(dx: f64, dy: f64, ppd: f64) -> Self {
        let amplitude = dx.hypot(dy) / ppd;
        if dx == 0.0 && dy == 0.0 {
            return Self { amplitude: 0.0, orientation: 0.0 };
        }
        Self::new(amplitude, (-dy).atan2(dx).to_degrees())
    }

    pub fn between(from: &FixationPoint, to: &FixationPoint, ppd: f64) -> Self {
        Self::from_displacement(to.x - from.x, to.y - from.y, ppd)
    }
}

/// Folds an angle in degrees into [0, 360).
pub fn wrap_degrees(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    // rem_euclid can return 360.0 for tiny negative inputs.
    if w >= 360.0 || w == 0.0 {
        0.0
    } else {
        w
    }
}

pub(crate) fn check_ppd(ppd: f64) -> Result<()> {
    if !(ppd > 0.0) || !ppd.is_finite() {
        return Err(Error::Config(format!("pixels per degree must be positive, got {ppd}")));
    }
    Ok(())
}

/// One sample per consecutive fixation pair.
pub fn saccades_from_sequence(seq: &FixationSequence, ppd: f64) -> Result<Vec<SaccadeSample>> {
    saccades_from_fixations(&seq.fixations, ppd)
}

pub fn saccades_from_fixations(fixations: &[FixationPoint], ppd: f64) -> Result<Vec<SaccadeSample>> {
    check_ppd(ppd)?;
    Ok(fixations.windows(2).map(|w| SaccadeSample::between(&w[0], &w[1], ppd)).collect())
}

/// Human saliency map: isotropic Gaussians (std `sigma` px, truncated at
/// 4·sigma) centered on every fixation, normalized to sum to one.
pub fn fixation_saliency_map(
    fixations: &[FixationPoint],
    geometry: Geometry,
    sigma: f64,
) -> Result<SaliencyGrid> {
    if fixations.is_empty() {
        return Err(Error::Validation("no fixations; density undefined".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    let Geometry { width, height } = geometry;
    if width == 0 || height == 0 {
        return Err(Error::Validation("empty geometry".into()));
    }
    let mut values = vec![0.0; width * height];
    let cutoff = 4.0 * sigma;
    let cutoff2 = cutoff * cutoff;
    let inv = -1.0 / (2.0 * sigma * sigma);
    for f in fixations {
        let x0 = ((f.x - cutoff).ceil().max(0.0)) as usize;
        let x1 = ((f.x + cutoff).floor().min(width as f64 - 1.0)).max(-1.0);
        let y0 = ((f.y - cutoff).ceil().max(0.0)) as usize;
        let y1 = ((f.y + cutoff).floor().min(height as f64 - 1.0)).max(-1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);
        for y in y0..=y1 {
            let dy = y as f64 - f.y;
            let row = &mut values[y * width..(y + 1) * width];
            for (x, v) in row.iter_mut().enumerate().take(x1 + 1).skip(x0) {
                let dx = x as f64 - f.x;
                let r2 = dx * dx + dy * dy;
                if r2 <= cutoff2 {
                    *v += (r2 * inv).exp();
                }
            }
        }
    }
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Validation("fixations lie outside the geometry".into()));
    }
    values.iter_mut().for_each(|v| *v /= total);
    SaliencyGrid::with_normalization(width, height, values, Normalization::SumToOne)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrownHistogram {
    pub shares: [f64; CROWN_COUNT],
}

impl CrownHistogram {
    /// Combined share of the outermost `k` crowns.
    pub fn outer_share(&self, k: usize) -> f64 {
        self.shares[CROWN_COUNT - k.min(CROWN_COUNT)..].iter().sum()
    }
}

/// Crown (0-based) for a fixation at distance `rho` from the center, with
/// circles at k/10 of the center-to-corner distance `radius`.
pub fn crown_index(rho: f64, radius: f64) -> usize {
    if rho <= 0.0 {
        return 0;
    }
    let k = (rho / radius * CROWN_COUNT as f64).ceil() as usize;
    k.clamp(1, CROWN_COUNT) - 1
}

/// Share of fixations in each of 10 concentric crowns around the image center.
pub fn center_bias_crowns(fixations: &[FixationPoint], geometry: Geometry) -> Result<CrownHistogram> {
    if fixations.is_empty() {
        return Err(Error::Validation("no fixations for crown statistics".into()));
    }
    let cx = geometry.width as f64 / 2.0;
    let cy = geometry.height as f64 / 2.0;
    let radius = cx.hypot(cy);
    let mut counts = [0usize; CROWN_COUNT];
    for f in fixations {
        counts[crown_index((f.x - cx).hypot(f.y - cy), radius)] += 1;
    }
    let n = fixations.len() as f64;
    let mut shares = [0.0; CROWN_COUNT];
    for (s, c) in shares.iter_mut().zip(counts) {
        *s = c as f64 / n;
    }
    Ok(CrownHistogram { shares })
}

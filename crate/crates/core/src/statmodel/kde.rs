use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StarvedCell};
use crate::eyedata::{check_ppd, FixationSequence, SaccadeSample};

use super::bandwidth::{botev_bandwidth, silverman_bandwidth};
use super::{BinGrid, JointSaccadeDistribution};

/// Side length of the spatially-variant grid of distributions.
pub const GRID_SIDE: usize = 3;

/// Kernel values beyond this many bandwidths are treated as zero.
const KERNEL_CUTOFF_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum BandwidthRule {
    Explicit { d: f64, phi: f64 },
    Silverman,
    Botev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeParams {
    pub grid: BinGrid,
    pub bandwidth: BandwidthRule,
}

impl Default for KdeParams {
    fn default() -> Self {
        Self { grid: BinGrid::default(), bandwidth: BandwidthRule::Silverman }
    }
}

/// Samples that carry a defined orientation (amplitude > 0).
pub fn usable_samples(samples: &[SaccadeSample]) -> Vec<SaccadeSample> {
    samples.iter().copied().filter(|s| s.amplitude > 0.0).collect()
}

/// Product-Gaussian kernel density estimate of the joint (amplitude,
/// orientation) distribution, evaluated at bin centers. Orientation wraps
/// around 360°; amplitude mass below zero is reflected back.
pub fn estimate_joint(samples: &[SaccadeSample], params: &KdeParams) -> Result<JointSaccadeDistribution> {
    let grid = params.grid;
    grid.validate()?;
    let usable = usable_samples(samples);
    if usable.len() < 2 {
        return Err(Error::Estimation(format!(
            "need at least 2 saccades with non-zero amplitude, got {}",
            usable.len()
        )));
    }
    let max_amp = usable.iter().map(|s| s.amplitude).fold(0.0, f64::max);
    if max_amp > grid.amp_max {
        return Err(Error::Validation(format!(
            "amp_max {}° is below the largest saccade amplitude {max_amp:.3}°",
            grid.amp_max
        )));
    }
    let (h_d, h_phi) = match params.bandwidth {
        BandwidthRule::Explicit { d, phi } => {
            if !(d > 0.0) || !(phi > 0.0) {
                return Err(Error::Config("explicit bandwidths must be positive".into()));
            }
            (d, phi)
        }
        BandwidthRule::Silverman => {
            let b = silverman_bandwidth(&usable)?;
            (b.d, b.phi)
        }
        BandwidthRule::Botev => {
            let b = botev_bandwidth(&usable)?;
            (b.d, b.phi)
        }
    };

    let n = usable.len();
    let amp_kernel = kernel_matrix(grid.amp_bins, n, |a, i| {
        let c = grid.amp_center(a);
        let di = usable[i].amplitude;
        gauss(c - di, h_d) + gauss(c + di, h_d)
    });
    let wraps = 1 + (KERNEL_CUTOFF_SIGMAS * h_phi / 360.0).ceil() as i64;
    let ori_kernel = kernel_matrix(n, grid.ori_bins, |i, o| {
        let c = grid.ori_center(o);
        let pi = usable[i].orientation;
        (-wraps..=wraps).map(|k| gauss(c - pi - 360.0 * k as f64, h_phi)).sum()
    });

    let ob = grid.ori_bins;
    let density: Vec<f64> = (0..grid.amp_bins)
        .into_par_iter()
        .flat_map_iter(|a| {
            let mut row = vec![0.0; ob];
            for i in 0..n {
                let w = amp_kernel[a * n + i];
                if w == 0.0 {
                    continue;
                }
                for (r, k) in row.iter_mut().zip(&ori_kernel[i * ob..(i + 1) * ob]) {
                    *r += w * k;
                }
            }
            row.into_iter().map(move |v| v / n as f64)
        })
        .collect();

    JointSaccadeDistribution::from_density(grid, density, h_d, h_phi, n).map_err(|e| match e {
        Error::Validation(m) => Error::Estimation(m),
        e => e,
    })
}

fn kernel_matrix(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Vec<f64> {
    (0..rows * cols).into_par_iter().map(|k| f(k / cols, k % cols)).collect()
}

#[inline]
fn gauss(x: f64, h: f64) -> f64 {
    let z = x / h;
    if z.abs() > KERNEL_CUTOFF_SIGMAS {
        return 0.0;
    }
    (-0.5 * z * z).exp() / (h * (2.0 * PI).sqrt())
}

/// A 3×3 array of joint distributions; cell `(row, col)` governs saccades
/// whose origin lies in pixel block `[col·W/3, (col+1)·W/3) × [row·H/3, (row+1)·H/3)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpatialFile")]
pub struct SpatialDistributionSet {
    width: usize,
    height: usize,
    cells: Vec<Vec<JointSaccadeDistribution>>,
}

#[derive(Deserialize)]
struct SpatialFile {
    width: usize,
    height: usize,
    cells: Vec<Vec<JointSaccadeDistribution>>,
}

impl TryFrom<SpatialFile> for SpatialDistributionSet {
    type Error = Error;

    fn try_from(f: SpatialFile) -> Result<Self> {
        Self::new(f.width, f.height, f.cells)
    }
}

impl SpatialDistributionSet {
    pub fn new(width: usize, height: usize, cells: Vec<Vec<JointSaccadeDistribution>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation("spatial set needs positive geometry".into()));
        }
        if cells.len() != GRID_SIDE || cells.iter().any(|r| r.len() != GRID_SIDE) {
            return Err(Error::Validation(format!("spatial set must be {GRID_SIDE}x{GRID_SIDE}")));
        }
        let grid = cells[0][0].grid();
        if cells.iter().flatten().any(|c| c.grid() != grid) {
            return Err(Error::Validation("all cells must share one bin grid".into()));
        }
        Ok(Self { width, height, cells })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell(&self, row: usize, col: usize) -> &JointSaccadeDistribution {
        &self.cells[row][col]
    }

    pub fn cells(&self) -> impl Iterator<Item = ((usize, usize), &JointSaccadeDistribution)> {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, d)| ((r, c), d)))
    }

    /// Grid cell `(row, col)` containing a pixel position.
    pub fn cell_index(&self, x: f64, y: f64) -> (usize, usize) {
        cell_of(x, y, self.width, self.height)
    }

    pub fn cell_at(&self, x: f64, y: f64) -> &JointSaccadeDistribution {
        let (r, c) = self.cell_index(x, y);
        &self.cells[r][c]
    }

    /// Sample-count weighted mixture of all cells.
    pub fn pooled(&self) -> Result<JointSaccadeDistribution> {
        JointSaccadeDistribution::pooled(self.cells.iter().flatten())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

pub(crate) fn cell_of(x: f64, y: f64, width: usize, height: usize) -> (usize, usize) {
    let col = ((x * GRID_SIDE as f64 / width as f64).floor().max(0.0) as usize).min(GRID_SIDE - 1);
    let row = ((y * GRID_SIDE as f64 / height as f64).floor().max(0.0) as usize).min(GRID_SIDE - 1);
    (row, col)
}

/// Estimates one joint distribution per 3×3 cell, assigning each saccade to
/// the cell of its origin fixation.
pub fn estimate_spatial_set(
    sequences: &[FixationSequence],
    ppd: f64,
    params: &KdeParams,
) -> Result<SpatialDistributionSet> {
    check_ppd(ppd)?;
    let first = sequences
        .first()
        .ok_or_else(|| Error::Estimation("no sequences to estimate from".into()))?;
    let (width, height) = (first.width, first.height);
    if sequences.iter().any(|s| s.width != width || s.height != height) {
        return Err(Error::Validation("sequences have differing image geometry".into()));
    }
    let mut buckets: Vec<Vec<SaccadeSample>> = vec![Vec::new(); GRID_SIDE * GRID_SIDE];
    for seq in sequences {
        for w in seq.fixations.windows(2) {
            let s = SaccadeSample::between(&w[0], &w[1], ppd);
            if s.amplitude > 0.0 {
                let (r, c) = cell_of(w[0].x, w[0].y, width, height);
                buckets[r * GRID_SIDE + c].push(s);
            }
        }
    }
    let starved: Vec<StarvedCell> = buckets
        .iter()
        .enumerate()
        .filter(|(_, b)| b.len() < 2)
        .map(|(k, b)| StarvedCell { row: k / GRID_SIDE, col: k % GRID_SIDE, count: b.len() })
        .collect();
    if !starved.is_empty() {
        return Err(Error::StarvedCells(starved));
    }
    let estimated: Vec<JointSaccadeDistribution> =
        buckets.par_iter().map(|b| estimate_joint(b, params)).collect::<Result<_>>()?;
    let cells = estimated.chunks(GRID_SIDE).map(<[_]>::to_vec).collect();
    SpatialDistributionSet::new(width, height, cells)
}

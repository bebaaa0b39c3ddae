//! Joint distributions of saccade amplitude and orientation.
//!
//! A [`JointSaccadeDistribution`] stores a density over the (amplitude,
//! orientation) plane sampled at bin centers: amplitude bins of width
//! `amp_max / amp_bins` starting at 0°, orientation bins of width
//! `360 / ori_bins` starting at 0°. Row-major with amplitude as the slow axis:
//! `density[a * ori_bins + o]`.

mod bandwidth;
mod kde;
mod ks2d;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bandwidth::{botev_1d, botev_bandwidth, circular_std_deg, silverman_bandwidth, Bandwidths};
pub use kde::{
    estimate_joint, estimate_spatial_set, usable_samples, BandwidthRule, KdeParams, SpatialDistributionSet,
    GRID_SIDE,
};
pub use ks2d::{ks2d_statistic, ks2d_test, kolmogorov_q, KsResult, DEFAULT_KS_DRAW};

use crate::error::{Error, Result};
use crate::eyedata::{wrap_degrees, SaccadeSample};

/// Floor applied to the second argument of [`kl_divergence`].
pub const KL_EPSILON: f64 = 1e-12;

/// Discretization of the (amplitude, orientation) plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub amp_bins: usize,
    pub amp_max: f64,
    pub ori_bins: usize,
}

impl Default for BinGrid {
    /// 0.25° × 3° bins over [0, 20°] × [0, 360°).
    fn default() -> Self {
        Self { amp_bins: 80, amp_max: 20.0, ori_bins: 120 }
    }
}

impl BinGrid {
    pub fn new(amp_bins: usize, amp_max: f64, ori_bins: usize) -> Result<Self> {
        let g = Self { amp_bins, amp_max, ori_bins };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.amp_bins == 0 || self.ori_bins == 0 {
            return Err(Error::Config("bin counts must be positive".into()));
        }
        if !(self.amp_max > 0.0) || !self.amp_max.is_finite() {
            return Err(Error::Config(format!("amp_max must be positive, got {}", self.amp_max)));
        }
        Ok(())
    }

    pub fn amp_step(&self) -> f64 {
        self.amp_max / self.amp_bins as f64
    }

    pub fn ori_step(&self) -> f64 {
        360.0 / self.ori_bins as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.amp_step() * self.ori_step()
    }

    pub fn amp_center(&self, a: usize) -> f64 {
        (a as f64 + 0.5) * self.amp_step()
    }

    pub fn ori_center(&self, o: usize) -> f64 {
        (o as f64 + 0.5) * self.ori_step()
    }

    pub fn len(&self) -> usize {
        self.amp_bins * self.ori_bins
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionFile", into = "DistributionFile")]
pub struct JointSaccadeDistribution {
    grid: BinGrid,
    density: Vec<f64>,
    bandwidth_d: f64,
    bandwidth_phi: f64,
    sample_count: usize,
}

/// On-disk layout of a distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DistributionFile {
    amp_bins: usize,
    amp_max_deg: f64,
    ori_bins: usize,
    bandwidth_d_deg: f64,
    bandwidth_phi_deg: f64,
    sample_count: usize,
    density: Vec<f64>,
}

impl TryFrom<DistributionFile> for JointSaccadeDistribution {
    type Error = Error;

    fn try_from(f: DistributionFile) -> Result<Self> {
        let grid = BinGrid::new(f.amp_bins, f.amp_max_deg, f.ori_bins)?;
        Self::from_density(grid, f.density, f.bandwidth_d_deg, f.bandwidth_phi_deg, f.sample_count)
    }
}

impl From<JointSaccadeDistribution> for DistributionFile {
    fn from(d: JointSaccadeDistribution) -> Self {
        Self {
            amp_bins: d.grid.amp_bins,
            amp_max_deg: d.grid.amp_max,
            ori_bins: d.grid.ori_bins,
            bandwidth_d_deg: d.bandwidth_d,
            bandwidth_phi_deg: d.bandwidth_phi,
            sample_count: d.sample_count,
            density: d.density,
        }
    }
}

impl JointSaccadeDistribution {
    /// Builds a distribution from unnormalized non-negative bin values; the
    /// result integrates to one over the grid.
    pub fn from_density(
        grid: BinGrid,
        mut density: Vec<f64>,
        bandwidth_d: f64,
        bandwidth_phi: f64,
        sample_count: usize,
    ) -> Result<Self> {
        grid.validate()?;
        if density.len() != grid.len() {
            return Err(Error::Validation(format!(
                "density has {} values, grid needs {}",
                density.len(),
                grid.len()
            )));
        }
        if density.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation("density values must be finite and non-negative".into()));
        }
        if !(bandwidth_d > 0.0) || !(bandwidth_phi > 0.0) {
            return Err(Error::Validation("bandwidths must be positive".into()));
        }
        let mass: f64 = density.iter().sum::<f64>() * grid.cell_area();
        if !(mass > 0.0) {
            return Err(Error::Validation("density has zero mass".into()));
        }
        if (mass - 1.0).abs() > 1e-12 {
            density.iter_mut().for_each(|v| *v /= mass);
        }
        Ok(Self { grid, density, bandwidth_d, bandwidth_phi, sample_count })
    }

    /// Builds a distribution by evaluating `f(amplitude, orientation)` at bin centers.
    pub fn from_fn(grid: BinGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut density = Vec::with_capacity(grid.len());
        for a in 0..grid.amp_bins {
            for o in 0..grid.ori_bins {
                density.push(f(grid.amp_center(a), grid.ori_center(o)));
            }
        }
        Self::from_density(grid, density, grid.amp_step(), grid.ori_step(), 0)
    }

    pub fn grid(&self) -> BinGrid {
        self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn bandwidth_d(&self) -> f64 {
        self.bandwidth_d
    }

    pub fn bandwidth_phi(&self) -> f64 {
        self.bandwidth_phi
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn bin(&self, a: usize, o: usize) -> f64 {
        self.density[a * self.grid.ori_bins + o]
    }

    /// Bilinear interpolation between bin centers, circular in orientation and
    /// flat beyond the first/last amplitude centers. Zero outside `[0, amp_max]`.
    #[inline]
    pub fn density_at(&self, d: f64, phi: f64) -> f64 {
        let g = &self.grid;
        if !(d >= 0.0) || d > g.amp_max {
            return 0.0;
        }
        let u = (d / g.amp_step() - 0.5).clamp(0.0, (g.amp_bins - 1) as f64);
        let a0 = u.floor() as usize;
        let a1 = (a0 + 1).min(g.amp_bins - 1);
        let tu = u - a0 as f64;

        let v = wrap_degrees(phi) / g.ori_step() - 0.5;
        let vf = v.floor();
        let tv = v - vf;
        let n = g.ori_bins as i64;
        let o0 = (vf as i64).rem_euclid(n) as usize;
        let o1 = (o0 + 1) % g.ori_bins;

        let row0 = &self.density[a0 * g.ori_bins..(a0 + 1) * g.ori_bins];
        let row1 = &self.density[a1 * g.ori_bins..(a1 + 1) * g.ori_bins];
        let lo = row0[o0] * (1.0 - tv) + row0[o1] * tv;
        let hi = row1[o0] * (1.0 - tv) + row1[o1] * tv;
        lo * (1.0 - tu) + hi * tu
    }

    /// Probability mass per bin (sums to one).
    pub fn bin_probabilities(&self) -> Vec<f64> {
        let area = self.grid.cell_area();
        self.density.iter().map(|v| v * area).collect()
    }

    /// Probability mass per amplitude bin.
    pub fn amplitude_marginal(&self) -> Vec<f64> {
        let area = self.grid.cell_area();
        self.density
            .chunks_exact(self.grid.ori_bins)
            .map(|row| row.iter().sum::<f64>() * area)
            .collect()
    }

    /// Probability mass per orientation bin.
    pub fn orientation_marginal(&self) -> Vec<f64> {
        let area = self.grid.cell_area();
        let mut out = vec![0.0; self.grid.ori_bins];
        for row in self.density.chunks_exact(self.grid.ori_bins) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v * area;
            }
        }
        out
    }

    /// Index of the most probable amplitude bin.
    pub fn amplitude_mode_bin(&self) -> usize {
        argmax(&self.amplitude_marginal())
    }

    /// Circular mean of the orientation marginal, in degrees.
    pub fn mean_orientation(&self) -> f64 {
        let (mut s, mut c) = (0.0, 0.0);
        for (o, p) in self.orientation_marginal().iter().enumerate() {
            let t = self.grid.ori_center(o).to_radians();
            s += p * t.sin();
            c += p * t.cos();
        }
        wrap_degrees(s.atan2(c).to_degrees())
    }

    /// Sample-count weighted mixture of distributions sharing one grid.
    pub fn pooled<'a>(parts: impl IntoIterator<Item = &'a JointSaccadeDistribution>) -> Result<Self> {
        let parts: Vec<_> = parts.into_iter().collect();
        let first = parts.first().ok_or_else(|| Error::Validation("nothing to pool".into()))?;
        let grid = first.grid;
        let total: usize = parts.iter().map(|p| p.sample_count).sum();
        let mut density = vec![0.0; grid.len()];
        let (mut bw_d, mut bw_phi) = (0.0, 0.0);
        for p in &parts {
            if p.grid != grid {
                return Err(Error::Validation("cannot pool distributions on different grids".into()));
            }
            let w = if total == 0 { 1.0 / parts.len() as f64 } else { p.sample_count as f64 / total as f64 };
            for (d, v) in density.iter_mut().zip(&p.density) {
                *d += w * v;
            }
            bw_d += w * p.bandwidth_d;
            bw_phi += w * p.bandwidth_phi;
        }
        Self::from_density(grid, density, bw_d, bw_phi, total)
    }

    /// Draws `n` saccades: a bin by its probability mass, then a uniform
    /// position inside the bin.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<SaccadeSample> {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = self
            .density
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        let g = self.grid;
        (0..n)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let mut i = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
                while self.density[i] <= 0.0 && i > 0 {
                    i -= 1;
                }
                let (a, o) = (i / g.ori_bins, i % g.ori_bins);
                let d = (a as f64 + rng.random::<f64>()) * g.amp_step();
                let phi = (o as f64 + rng.random::<f64>()) * g.ori_step();
                SaccadeSample::new(d, phi)
            })
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

/// Checked point evaluation of a distribution.
pub fn evaluate_density(dist: &JointSaccadeDistribution, d: f64, phi: f64) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::Validation(format!("amplitude must be non-negative, got {d}")));
    }
    if !phi.is_finite() {
        return Err(Error::Validation(format!("orientation must be finite, got {phi}")));
    }
    Ok(dist.density_at(d, phi))
}

/// `Σ P ln(P / Q)` after renormalizing both inputs to sum to one, with `Q`
/// floored at ε wherever it falls below `P` (so `KL(P, P)` is exactly zero).
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Validation(format!("shape mismatch: {} vs {}", p.len(), q.len())));
    }
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    if !(sp > 0.0) || !(sq > 0.0) || p.iter().chain(q).any(|v| *v < 0.0) {
        return Err(Error::Validation("KL inputs must be non-negative with positive mass".into()));
    }
    let kl = p
        .iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| {
            let pi = pi / sp;
            let qi = qi / sq;
            let qi = if qi >= pi { qi } else { qi.max(KL_EPSILON) };
            pi * (pi / qi).ln()
        })
        .sum();
    Ok(kl)
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bumpy() -> JointSaccadeDistribution {
        JointSaccadeDistribution::from_fn(BinGrid::default(), |d, phi| {
            (-(d - 4.0f64).powi(2) / 4.0).exp() * (1.5 + phi.to_radians().cos())
        })
        .unwrap()
    }

    #[test]
    fn bin_center_query_returns_stored_value() {
        let dist = bumpy();
        let g = dist.grid();
        for (a, o) in [(0, 0), (10, 37), (79, 119), (40, 60)] {
            let v = evaluate_density(&dist, g.amp_center(a), g.ori_center(o)).unwrap();
            assert!((v - dist.bin(a, o)).abs() < 1e-12 * dist.bin(a, o).max(1e-300));
        }
    }

    #[test]
    fn out_of_support_and_negative() {
        let dist = bumpy();
        assert_eq!(evaluate_density(&dist, 21.0, 10.0).unwrap(), 0.0);
        assert!(evaluate_density(&dist, -0.1, 10.0).is_err());
    }

    #[test]
    fn interpolation_is_circular_across_the_seam() {
        let dist = bumpy();
        let a = dist.density_at(4.0, 359.999);
        let b = dist.density_at(4.0, 0.001);
        assert!((a - b).abs() / a < 1e-4);
        assert!((dist.density_at(4.0, 360.0) - dist.density_at(4.0, 0.0)).abs() < 1e-15);
    }

    #[test]
    fn quadrature_integral_is_one() {
        let dist = bumpy();
        let (nd, np) = (1000, 1440);
        let (hd, hp) = (20.0 / nd as f64, 360.0 / np as f64);
        let mut s = 0.0;
        for i in 0..nd {
            for j in 0..np {
                s += dist.density_at((i as f64 + 0.5) * hd, (j as f64 + 0.5) * hp);
            }
        }
        assert!((s * hd * hp - 1.0).abs() < 1e-3, "{}", s * hd * hp);
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(kl_divergence(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        let v = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert!(kl_divergence(&[1.0], &[0.5, 0.5]).is_err());
        // Zero in Q is floored rather than infinite.
        assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap().is_finite());
    }

    #[test]
    fn json_roundtrip_and_field_names() {
        let dist = bumpy();
        let json = serde_json::to_string(&dist).unwrap();
        for key in ["amp_bins", "amp_max_deg", "ori_bins", "bandwidth_d_deg", "bandwidth_phi_deg", "sample_count", "density"] {
            assert!(json.contains(&format!("\"{key}\"")), "{key}");
        }
        let back: JointSaccadeDistribution = serde_json::from_str(&json).unwrap();
        assert_eq!(back, dist);
    }

    #[test]
    fn json_rejects_bad_shape() {
        let bad = r#"{"amp_bins":2,"amp_max_deg":1.0,"ori_bins":2,"bandwidth_d_deg":1,"bandwidth_phi_deg":1,"sample_count":0,"density":[1,2,3]}"#;
        assert!(serde_json::from_str::<JointSaccadeDistribution>(bad).is_err());
    }

    #[test]
    fn pooled_weights_by_sample_count() {
        let g = BinGrid::new(2, 2.0, 2).unwrap();
        let a = JointSaccadeDistribution::from_density(g, vec![1.0, 0.0, 0.0, 0.0], 1.0, 1.0, 3).unwrap();
        let b = JointSaccadeDistribution::from_density(g, vec![0.0, 0.0, 0.0, 1.0], 1.0, 1.0, 1).unwrap();
        let p = JointSaccadeDistribution::pooled([&a, &b]).unwrap();
        let probs = p.bin_probabilities();
        assert!((probs[0] - 0.75).abs() < 1e-12);
        assert!((probs[3] - 0.25).abs() < 1e-12);
        assert_eq!(p.sample_count(), 4);
    }

    #[test]
    fn sampling_follows_bin_masses() {
        use rand::SeedableRng;
        let g = BinGrid::new(2, 2.0, 2).unwrap();
        let dist = JointSaccadeDistribution::from_density(g, vec![3.0, 0.0, 1.0, 0.0], 1.0, 1.0, 0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let s = dist.sample(20_000, &mut rng);
        assert!(s.iter().all(|x| x.orientation < 180.0 && x.amplitude < 2.0));
        let near = s.iter().filter(|x| x.amplitude < 1.0).count() as f64 / 20_000.0;
        assert!((near - 0.75).abs() < 0.015, "{near}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn kl_is_nonnegative_and_zero_on_identity(
            pq in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..40)
        ) {
            let p: Vec<f64> = pq.iter().map(|x| x.0).collect();
            let q: Vec<f64> = pq.iter().map(|x| x.1).collect();
            prop_assume!(p.iter().sum::<f64>() > 0.0 && q.iter().sum::<f64>() > 0.0);
            prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-12);
            prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-12);
        }
    }
}

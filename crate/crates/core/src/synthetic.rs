//! Reproducible synthetic fixtures: analytic saccade mixtures, a 3×3 prior,
//! fixation logs drawn from it, and structured saliency maps.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::error::Result;
use crate::eyedata::{wrap_degrees, FixationPoint, FixationSequence, SaccadeSample};
use crate::grid::SaliencyGrid;
use crate::statmodel::{BinGrid, JointSaccadeDistribution, SpatialDistributionSet, GRID_SIDE};

/// Log-normal amplitude times wrapped-normal orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    /// Median amplitude in degrees.
    pub amp_median: f64,
    /// Standard deviation of `ln(amplitude)`.
    pub amp_log_sd: f64,
    pub ori_mean: f64,
    pub ori_sd: f64,
}

impl MixtureComponent {
    pub fn new(weight: f64, amp_median: f64, amp_log_sd: f64, ori_mean: f64, ori_sd: f64) -> Self {
        Self { weight, amp_median, amp_log_sd, ori_mean, ori_sd }
    }

    fn amp_density(&self, d: f64) -> f64 {
        if d <= 0.0 {
            return 0.0;
        }
        let z = (d.ln() - self.amp_median.ln()) / self.amp_log_sd;
        (-0.5 * z * z).exp() / (d * self.amp_log_sd * (2.0 * PI).sqrt())
    }

    fn ori_density(&self, phi: f64) -> f64 {
        let base = wrap_degrees(phi - self.ori_mean);
        (-3..=3)
            .map(|k| {
                let z = (base + 360.0 * k as f64) / self.ori_sd;
                (-0.5 * z * z).exp()
            })
            .sum::<f64>()
            / (self.ori_sd * (2.0 * PI).sqrt())
    }
}

/// A finite mixture over the (amplitude, orientation) plane, density per deg².
#[derive(Debug, Clone, PartialEq)]
pub struct SaccadeMixture {
    pub components: Vec<MixtureComponent>,
}

impl SaccadeMixture {
    pub fn new(components: Vec<MixtureComponent>) -> Self {
        Self { components }
    }

    fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn density(&self, d: f64, phi: f64) -> f64 {
        let w = self.total_weight();
        self.components.iter().map(|c| c.weight / w * c.amp_density(d) * c.ori_density(phi)).sum()
    }

    /// Scales every amplitude by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            components: self.components.iter().map(|c| MixtureComponent { amp_median: c.amp_median * factor, ..*c }).collect(),
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> SaccadeSample {
        let mut u = rng.random::<f64>() * self.total_weight();
        let mut comp = self.components[self.components.len() - 1];
        for c in &self.components {
            if u < c.weight {
                comp = *c;
                break;
            }
            u -= c.weight;
        }
        let amp = LogNormal::new(comp.amp_median.ln(), comp.amp_log_sd).expect("valid log-normal");
        let ori = Normal::new(comp.ori_mean, comp.ori_sd).expect("valid normal");
        SaccadeSample::new(amp.sample(rng), ori.sample(rng))
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<SaccadeSample> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    /// The mixture evaluated at the bin centers of `grid`.
    pub fn to_distribution(&self, grid: BinGrid) -> Result<JointSaccadeDistribution> {
        JointSaccadeDistribution::from_fn(grid, |d, phi| self.density(d, phi))
    }
}

/// Two well separated components: short, mostly horizontal saccades and
/// longer, mostly vertical ones.
pub fn two_component_mixture() -> SaccadeMixture {
    SaccadeMixture::new(vec![
        MixtureComponent::new(0.6, 3.0, 0.35, 0.0, 30.0),
        MixtureComponent::new(0.4, 8.0, 0.3, 90.0, 40.0),
    ])
}

/// Per-cell mixtures: a sharp amplitude peak near 3° with a horizontal bias,
/// a broad tail, and in off-center cells a component aimed at the image center.
pub fn spatial_mixtures() -> Vec<Vec<SaccadeMixture>> {
    (0..GRID_SIDE)
        .map(|r| {
            (0..GRID_SIDE)
                .map(|c| {
                    let mut comps = vec![
                        MixtureComponent::new(0.35, 3.0, 0.2, 0.0, 20.0),
                        MixtureComponent::new(0.35, 3.0, 0.2, 180.0, 20.0),
                        MixtureComponent::new(0.15, 6.0, 0.5, 90.0, 60.0),
                    ];
                    let (dx, dy) = (1.0 - c as f64, 1.0 - r as f64);
                    if dx != 0.0 || dy != 0.0 {
                        // Screen y grows downwards, orientation counter-clockwise.
                        let toward = wrap_degrees((-dy).atan2(dx).to_degrees());
                        comps.push(MixtureComponent::new(0.3, 5.0, 0.3, toward, 25.0));
                    } else {
                        comps.push(MixtureComponent::new(0.15, 6.0, 0.5, 270.0, 60.0));
                    }
                    SaccadeMixture::new(comps)
                })
                .collect()
        })
        .collect()
}

/// The [`spatial_mixtures`] evaluated on `grid`, for `width × height` images.
pub fn spatial_prior(width: usize, height: usize, grid: BinGrid) -> Result<SpatialDistributionSet> {
    let cells = spatial_mixtures()
        .iter()
        .map(|row| row.iter().map(|m| m.to_distribution(grid)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    SpatialDistributionSet::new(width, height, cells)
}

/// Options for [`synthetic_fixation_log`].
#[derive(Debug, Clone)]
pub struct LogSpec {
    pub width: usize,
    pub height: usize,
    pub ppd: f64,
    pub observers: usize,
    pub images: usize,
    /// Fixations per trial, including the first (discarded) one.
    pub fixations: usize,
    pub group_id: String,
    /// Multiplies every saccade amplitude.
    pub amp_scale: f64,
    pub seed: u64,
}

/// Random-walk trials where each saccade is drawn from the mixture of the cell
/// holding the current fixation; draws leaving the image are redrawn.
pub fn synthetic_fixation_log(mixtures: &[Vec<SaccadeMixture>], spec: &LogSpec) -> Vec<FixationSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width as f64, spec.height as f64);
    let mut out = Vec::with_capacity(spec.observers * spec.images);
    for obs in 0..spec.observers {
        for img in 0..spec.images {
            let mut x = rng.random_range(0.0..w);
            let mut y = rng.random_range(0.0..h);
            let mut fixations = vec![FixationPoint::new(x, y, 0)];
            for i in 1..spec.fixations {
                let row = ((y / h * GRID_SIDE as f64) as usize).min(GRID_SIDE - 1);
                let col = ((x / w * GRID_SIDE as f64) as usize).min(GRID_SIDE - 1);
                let mix = &mixtures[row][col];
                for _ in 0..1000 {
                    let s = mix.sample_one(&mut rng);
                    let t = s.orientation.to_radians();
                    let d = s.amplitude * spec.amp_scale * spec.ppd;
                    let (nx, ny) = (x + d * t.cos(), y - d * t.sin());
                    if nx >= 0.0 && ny >= 0.0 && nx < w && ny < h {
                        (x, y) = (nx, ny);
                        break;
                    }
                }
                fixations.push(FixationPoint::new(x, y, i as u32));
            }
            out.push(FixationSequence {
                observer_id: format!("{}-obs{obs:02}", spec.group_id),
                image_id: format!("img{img:02}"),
                group_id: spec.group_id.clone(),
                fixations,
                width: spec.width,
                height: spec.height,
            });
        }
    }
    out
}

/// A sum of `blobs` random Gaussian bumps over a faint background, sum-to-one.
pub fn structured_saliency(width: usize, height: usize, blobs: usize, seed: u64) -> Result<SaliencyGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = width.min(height) as f64;
    let bumps: Vec<(f64, f64, f64, f64)> = (0..blobs)
        .map(|_| {
            (
                rng.random_range(0.0..width as f64),
                rng.random_range(0.0..height as f64),
                rng.random_range(0.03..0.1) * side,
                rng.random_range(0.3..1.0),
            )
        })
        .collect();
    SaliencyGrid::from_fn(width, height, |x, y| {
        let (x, y) = (x as f64, y as f64);
        1e-3 + bumps
            .iter()
            .map(|&(cx, cy, s, a)| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp())
            .sum::<f64>()
    })?
    .to_sum_one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_density_integrates_to_one() {
        let m = two_component_mixture();
        let (nd, np) = (2000, 720);
        let (hd, hp) = (60.0 / nd as f64, 360.0 / np as f64);
        let mut s = 0.0;
        for i in 0..nd {
            for j in 0..np {
                s += m.density((i as f64 + 0.5) * hd, (j as f64 + 0.5) * hp);
            }
        }
        assert!((s * hd * hp - 1.0).abs() < 1e-3, "{}", s * hd * hp);
    }

    #[test]
    fn samples_match_component_medians() {
        let m = SaccadeMixture::new(vec![MixtureComponent::new(1.0, 4.0, 0.2, 90.0, 10.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut amps: Vec<f64> = m.sample(4001, &mut rng).iter().map(|s| s.amplitude).collect();
        amps.sort_by(f64::total_cmp);
        assert!((amps[2000] - 4.0).abs() < 0.1);
    }

    #[test]
    fn off_center_cells_point_inwards() {
        let mix = spatial_mixtures();
        // Top-left cell: the inward component points down-right (315°).
        let last = mix[0][0].components.last().unwrap();
        assert!((last.ori_mean - 315.0).abs() < 1e-9);
        let right = mix[1][2].components.last().unwrap();
        assert!((right.ori_mean - 180.0).abs() < 1e-9);
    }

    #[test]
    fn log_stays_in_bounds_and_is_reproducible() {
        let spec = LogSpec {
            width: 320,
            height: 240,
            ppd: 10.0,
            observers: 3,
            images: 2,
            fixations: 10,
            group_id: "g".into(),
            amp_scale: 1.0,
            seed: 4,
        };
        let a = synthetic_fixation_log(&spatial_mixtures(), &spec);
        let b = synthetic_fixation_log(&spatial_mixtures(), &spec);
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert!(a.iter().flat_map(|s| &s.fixations).all(|f| f.x >= 0.0 && f.x < 320.0 && f.y >= 0.0 && f.y < 240.0));
    }

    #[test]
    fn structured_saliency_is_normalized() {
        let s = structured_saliency(64, 48, 5, 2).unwrap();
        assert!((s.sum() - 1.0).abs() < 1e-9);
        assert!(s.max() > 10.0 * s.min());
    }
}

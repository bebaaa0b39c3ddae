use rand::Rng;
use rayon::prelude::*;

use super::{memory_weight, MemoryState, Prior, ViewerProfile, SALIENCY_FLOOR, SELECTION_DISTANCE_FLOOR};
use crate::error::{Error, Result};
use crate::eyedata::{FixationPoint, SaccadeSample};
use crate::grid::{Normalization, SaliencyGrid};
use crate::statmodel::JointSaccadeDistribution;

/// Rejection attempts per candidate before falling back to the explicit map.
const MAX_REJECTIONS: usize = 4096;

/// Precomputed per-image state for evaluating and sampling the transition
/// probability `saliency · memory · prior`.
///
/// Candidates are drawn by rejection: propose a pixel proportionally to the
/// floored saliency, accept with probability `prior · memory / bound`. Accepted
/// draws follow the transition distribution exactly; when acceptance is too
/// rare the full map is built instead.
#[derive(Debug)]
pub struct TransitionModel<'a> {
    profile: &'a ViewerProfile,
    width: usize,
    height: usize,
    floored: Vec<f64>,
    cumulative: Vec<f64>,
    /// Upper bound of the prior weight, per prior slot.
    bounds: Vec<f64>,
}

impl<'a> TransitionModel<'a> {
    pub fn new(saliency: &'a SaliencyGrid, profile: &'a ViewerProfile) -> Result<Self> {
        profile.validate()?;
        if saliency.is_empty() {
            return Err(Error::Validation("saliency map is empty".into()));
        }
        if saliency.values().iter().any(|v| *v < 0.0) {
            return Err(Error::Validation("saliency must be non-negative".into()));
        }
        let max = saliency.max();
        if !(max > 0.0) {
            return Err(Error::Validation("saliency map is zero everywhere".into()));
        }
        if let Prior::Spatial(set) = &profile.prior {
            if set.width() != saliency.width() || set.height() != saliency.height() {
                return Err(Error::Validation(format!(
                    "distribution set is for {}x{} images, saliency map is {}x{}",
                    set.width(),
                    set.height(),
                    saliency.width(),
                    saliency.height()
                )));
            }
        }
        let floor = SALIENCY_FLOOR * max;
        let floored: Vec<f64> = saliency.values().iter().map(|v| v.max(floor)).collect();
        let mut acc = 0.0;
        let cumulative = floored
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        let bounds = match &profile.prior {
            Prior::Spatial(set) => (0..9).map(|i| prior_bound(set.cell(i / 3, i % 3), profile)).collect(),
            Prior::Single(d) => vec![prior_bound(d, profile)],
            Prior::Uniform => Vec::new(),
        };
        debug_assert_eq!(bounds.len(), profile.prior.table_count());
        Ok(Self { profile, width: saliency.width(), height: saliency.height(), floored, cumulative, bounds })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn profile(&self) -> &ViewerProfile {
        self.profile
    }

    fn check_inside(&self, p: &FixationPoint) -> Result<()> {
        if p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64 {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "previous fixation ({}, {}) lies outside the {}x{} image",
                p.x, p.y, self.width, self.height
            )))
        }
    }

    /// Prior weight of pixel `(x, y)` for a saccade from `prev`.
    #[inline]
    fn prior_weight(&self, dist: Option<&JointSaccadeDistribution>, prev: &FixationPoint, x: f64, y: f64) -> f64 {
        let Some(dist) = dist else { return 1.0 };
        let s = SaccadeSample::from_displacement(x - prev.x, y - prev.y, self.profile.ppd);
        let p = dist.density_at(s.amplitude, s.orientation);
        if self.profile.jacobian_correction {
            p / s.amplitude.max(SELECTION_DISTANCE_FLOOR)
        } else {
            p
        }
    }

    /// Unnormalized transition weights, row-major.
    pub fn weights(&self, prev: &FixationPoint, memory: &MemoryState) -> Result<Vec<f64>> {
        self.check_inside(prev)?;
        let dist = self.profile.prior.slot_for(prev.x, prev.y).map(|(_, d)| d);
        let reach = self.profile.prior.amp_max().map(|a| a * self.profile.ppd);
        let w = self.width;
        let mut out = vec![0.0; self.floored.len()];
        out.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
            let y = r as f64;
            if let Some(reach) = reach {
                if (y - prev.y).abs() > reach + 1.0 {
                    return;
                }
            }
            for (c, v) in row.iter_mut().enumerate() {
                let x = c as f64;
                let p = self.prior_weight(dist, prev, x, y);
                if p > 0.0 {
                    *v = self.floored[r * w + c] * p * memory_weight((x, y), memory, self.profile);
                }
            }
        });
        Ok(out)
    }

    /// The transition probability as a sum-to-one grid.
    pub fn map(&self, prev: &FixationPoint, memory: &MemoryState) -> Result<SaliencyGrid> {
        let mut values = self.weights(prev, memory)?;
        let total: f64 = values.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateTransition { step: prev.index as usize + 1 });
        }
        values.iter_mut().for_each(|v| *v /= total);
        SaliencyGrid::with_normalization(self.width, self.height, values, Normalization::SumToOne)
    }

    /// Selection score `saliency · p_B / max(d, d_floor)` of pixel `(x, y)`.
    pub fn score(&self, x: usize, y: usize, prev: &FixationPoint) -> f64 {
        let sal = self.floored[y * self.width + x];
        let s = SaccadeSample::from_displacement(x as f64 - prev.x, y as f64 - prev.y, self.profile.ppd);
        let pb = match self.profile.prior.slot_for(prev.x, prev.y) {
            Some((_, d)) => d.density_at(s.amplitude, s.orientation),
            None => 1.0,
        };
        sal * pb / s.amplitude.max(SELECTION_DISTANCE_FLOOR)
    }

    /// The highest-scoring candidate; ties go to the lowest row-major index.
    pub fn select(&self, candidates: &[(usize, usize)], prev: &FixationPoint) -> Result<(usize, usize)> {
        let mut best: Option<((usize, usize), f64)> = None;
        for &(x, y) in candidates {
            if x >= self.width || y >= self.height {
                return Err(Error::Validation(format!("candidate ({x}, {y}) lies outside the image")));
            }
            let s = self.score(x, y, prev);
            best = match best {
                None => Some(((x, y), s)),
                Some((b, bs)) => {
                    let idx = y * self.width + x;
                    let bidx = b.1 * self.width + b.0;
                    if s > bs || (s == bs && idx < bidx) {
                        Some(((x, y), s))
                    } else {
                        Some((b, bs))
                    }
                }
            };
        }
        best.map(|b| b.0).ok_or_else(|| Error::Validation("no candidates to select from".into()))
    }

    /// Draws `n` i.i.d. candidates from the transition distribution.
    pub fn draw_candidates<R: Rng + ?Sized>(
        &self,
        prev: &FixationPoint,
        memory: &MemoryState,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<(usize, usize)>> {
        self.check_inside(prev)?;
        let slot = self.profile.prior.slot_for(prev.x, prev.y);
        let dist = slot.map(|(_, d)| d);
        let bound = slot.map_or(1.0, |(i, _)| self.bounds[i]);
        let total = *self.cumulative.last().expect("non-empty");
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let mut accepted = None;
            for _ in 0..MAX_REJECTIONS {
                let idx = inverse_cdf(&self.cumulative, &self.floored, rng.random::<f64>() * total);
                let (x, y) = (idx % self.width, idx / self.width);
                let (fx, fy) = (x as f64, y as f64);
                let p = self.prior_weight(dist, prev, fx, fy);
                if p <= 0.0 {
                    continue;
                }
                let accept = p / bound * memory_weight((fx, fy), memory, self.profile);
                if rng.random::<f64>() < accept {
                    accepted = Some((x, y));
                    break;
                }
            }
            match accepted {
                Some(c) => out.push(c),
                None => {
                    // Acceptance is too rare: sample the remaining candidates from the explicit map.
                    let map = self.map(prev, memory)?;
                    out.extend(sample_candidates(&map, n - out.len(), rng)?);
                }
            }
        }
        Ok(out)
    }
}

/// Upper bound of the per-pixel prior weight of `dist` (bilinear values never
/// exceed the neighbouring bin values).
fn prior_bound(dist: &JointSaccadeDistribution, profile: &ViewerProfile) -> f64 {
    let g = dist.grid();
    let row_max: Vec<f64> = dist.density().chunks_exact(g.ori_bins).map(|r| r.iter().copied().fold(0.0, f64::max)).collect();
    if !profile.jacobian_correction {
        return row_max.iter().copied().fold(0.0, f64::max);
    }
    // Below the first center the amplitude can approach zero.
    let mut bound = row_max[0] / SELECTION_DISTANCE_FLOOR;
    for a in 0..g.amp_bins {
        let hi = row_max[a].max(row_max[(a + 1).min(g.amp_bins - 1)]);
        bound = bound.max(hi / g.amp_center(a).max(SELECTION_DISTANCE_FLOOR));
    }
    bound
}

/// Index of the first cumulative weight exceeding `u`, skipping zero-weight entries.
#[inline]
fn inverse_cdf(cumulative: &[f64], weights: &[f64], u: f64) -> usize {
    let mut i = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
    while weights[i] <= 0.0 && i > 0 {
        i -= 1;
    }
    i
}

/// Transition probability `p(x | x_prev)` over the saliency grid, summing to one.
pub fn transition_map(
    prev: &FixationPoint,
    saliency: &SaliencyGrid,
    memory: &MemoryState,
    profile: &ViewerProfile,
) -> Result<SaliencyGrid> {
    TransitionModel::new(saliency, profile)?.map(prev, memory)
}

/// `n` i.i.d. inverse-CDF draws from `map`, returned as `(x, y)` pixels.
pub fn sample_candidates<R: Rng + ?Sized>(map: &SaliencyGrid, n: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let mut acc = 0.0;
    let cumulative: Vec<f64> = map
        .values()
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    if !(acc > 0.0) {
        return Err(Error::Validation("cannot sample from a map with zero mass".into()));
    }
    let w = map.width();
    Ok((0..n)
        .map(|_| {
            let i = inverse_cdf(&cumulative, map.values(), rng.random::<f64>() * acc);
            (i % w, i / w)
        })
        .collect())
}

/// Picks the candidate maximizing `saliency · p_B / max(d, 0.25°)`.
pub fn select_fixation(
    candidates: &[(usize, usize)],
    saliency: &SaliencyGrid,
    prev: &FixationPoint,
    profile: &ViewerProfile,
) -> Result<FixationPoint> {
    let model = TransitionModel::new(saliency, profile)?;
    let (x, y) = model.select(candidates, prev)?;
    Ok(FixationPoint::new(x as f64, y as f64, prev.index + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statmodel::BinGrid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(w: usize, h: usize) -> SaliencyGrid {
        SaliencyGrid::from_fn(w, h, |x, y| 1.0 + x as f64 + 2.0 * y as f64).unwrap()
    }

    fn single_prior() -> Prior {
        let grid = BinGrid::new(40, 5.0, 72).unwrap();
        Prior::Single(
            JointSaccadeDistribution::from_fn(grid, |d, phi| {
                (-(d - 1.5f64).powi(2)).exp() * (1.2 + phi.to_radians().cos())
            })
            .unwrap(),
        )
    }

    fn profile(prior: Prior) -> ViewerProfile {
        let mut p = ViewerProfile::new(prior);
        p.ppd = 10.0;
        p.inhibition_radius = 0.5;
        p
    }

    #[test]
    fn uniform_prior_map_is_proportional_to_saliency() {
        let sal = ramp(30, 20);
        let prof = profile(Prior::Uniform);
        let map = transition_map(&FixationPoint::new(3.0, 4.0, 0), &sal, &MemoryState::new(5), &prof).unwrap();
        let norm = sal.to_sum_one().unwrap();
        let diff = map.values().iter().zip(norm.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9);
        assert_eq!(map.argmax(), sal.argmax());
    }

    #[test]
    fn just_attended_pixel_has_zero_probability() {
        let sal = ramp(30, 20);
        let prof = profile(single_prior());
        let prev = FixationPoint::new(12.0, 9.0, 0);
        let mut mem = MemoryState::new(5);
        mem.push(prev);
        let map = transition_map(&prev, &sal, &mem, &prof).unwrap();
        assert_eq!(map.get(12, 9), 0.0);
        assert!((map.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_map_is_reported() {
        let sal = SaliencyGrid::uniform(1, 1).unwrap();
        let prof = profile(single_prior());
        let prev = FixationPoint::new(0.0, 0.0, 0);
        let mut mem = MemoryState::new(5);
        mem.push(prev);
        let err = transition_map(&prev, &sal, &mem, &prof).unwrap_err();
        assert!(matches!(err, Error::DegenerateTransition { step: 1 }));
        assert!(err.to_string().contains("amp_max"));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = TransitionModel::new(&sal, &prof).unwrap();
        assert!(model.draw_candidates(&prev, &mem, 1, &mut rng).is_err());
    }

    #[test]
    fn outside_previous_fixation_is_rejected() {
        let sal = ramp(10, 10);
        let prof = profile(Prior::Uniform);
        let err = transition_map(&FixationPoint::new(10.0, 0.0, 0), &sal, &MemoryState::new(1), &prof);
        assert!(err.is_err());
    }

    #[test]
    fn point_mass_map_yields_that_pixel() {
        let mut v = vec![0.0; 12];
        v[7] = 1.0;
        let map = SaliencyGrid::new(4, 3, v).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = sample_candidates(&map, 50, &mut rng).unwrap();
        assert!(c.iter().all(|&p| p == (3, 1)));
    }

    #[test]
    fn two_pixel_map_is_split_evenly() {
        let map = SaliencyGrid::new(2, 1, vec![0.5, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = sample_candidates(&map, 100_000, &mut rng).unwrap();
        let left = c.iter().filter(|p| p.0 == 0).count() as i64;
        assert!((left - 50_000).abs() <= 500, "{left}");
    }

    #[test]
    fn single_candidate_is_returned() {
        let sal = ramp(10, 10);
        let prof = profile(single_prior());
        let f = select_fixation(&[(9, 9)], &sal, &FixationPoint::new(0.0, 0.0, 2), &prof).unwrap();
        assert_eq!((f.x, f.y, f.index), (9.0, 9.0, 3));
        assert!(select_fixation(&[], &sal, &FixationPoint::new(0.0, 0.0, 0), &prof).is_err());
    }

    #[test]
    fn closer_candidate_wins_at_equal_weight() {
        let sal = SaliencyGrid::uniform(100, 10).unwrap();
        let prof = profile(Prior::Uniform);
        let prev = FixationPoint::new(50.0, 5.0, 0);
        // 2° and 4° away at 10 px/°.
        let f = select_fixation(&[(90, 5), (70, 5)], &sal, &prev, &prof).unwrap();
        assert_eq!(f.x, 70.0);
        // Exact ties go to the lowest row-major index.
        let f = select_fixation(&[(70, 5), (30, 5)], &sal, &prev, &prof).unwrap();
        assert_eq!(f.x, 30.0);
    }

    #[test]
    fn jacobian_bound_dominates_weights() {
        let sal = ramp(40, 40);
        let mut prof = profile(single_prior());
        prof.jacobian_correction = true;
        let model = TransitionModel::new(&sal, &prof).unwrap();
        let prev = FixationPoint::new(20.0, 20.0, 0);
        let dist = prof.prior.slot_for(20.0, 20.0).map(|s| s.1);
        for y in 0..40 {
            for x in 0..40 {
                assert!(model.prior_weight(dist, &prev, x as f64, y as f64) <= model.bounds[0] * (1.0 + 1e-12));
            }
        }
    }
}

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::transition::TransitionModel;
use super::{MemoryState, Scanpath, ViewerProfile};
use crate::error::{Error, Result};
use crate::eyedata::{saccades_from_fixations, FixationPoint, SaccadeSample};
use crate::grid::SaliencyGrid;
use crate::statmodel::{
    estimate_joint, kl_divergence, BandwidthRule, BinGrid, JointSaccadeDistribution, KdeParams,
};

/// Minimum number of generated saccades for a plausibility score.
pub const MIN_PLAUSIBILITY_SACCADES: usize = 100;

impl TransitionModel<'_> {
    /// One scanpath: a uniformly random first fixation, then repeated
    /// candidate draws and selection, with inhibition of return.
    pub fn generate(&self, n_fixations: usize, seed: u64) -> Result<Vec<FixationPoint>> {
        if n_fixations == 0 {
            return Err(Error::Config("n_fixations must be ≥ 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = FixationPoint::new(
            rng.random_range(0..self.width()) as f64,
            rng.random_range(0..self.height()) as f64,
            0,
        );
        let mut memory = MemoryState::new(self.profile().memory_span);
        memory.push(first);
        let mut path = Vec::with_capacity(n_fixations);
        path.push(first);
        for i in 1..n_fixations {
            let prev = path[i - 1];
            let candidates = self.draw_candidates(&prev, &memory, self.profile().candidate_count, &mut rng)?;
            let (x, y) = self.select(&candidates, &prev)?;
            let next = FixationPoint::new(x as f64, y as f64, i as u32);
            memory.push(next);
            path.push(next);
        }
        Ok(path)
    }

    /// `n_scanpaths` paths; path `k` is seeded with `master_seed ^ k`.
    pub fn generate_batch(&self, n_scanpaths: usize, n_fixations: usize, master_seed: u64) -> Result<Vec<Scanpath>> {
        if n_scanpaths == 0 {
            return Err(Error::Config("n_scanpaths must be ≥ 1".into()));
        }
        (0..n_scanpaths as u64)
            .into_par_iter()
            .map(|k| {
                let seed = master_seed ^ k;
                let fixations = self.generate(n_fixations, seed)?;
                Ok(Scanpath { image_id: String::new(), seed, fixations })
            })
            .collect()
    }
}

pub fn generate_scanpath(
    saliency: &SaliencyGrid,
    profile: &ViewerProfile,
    n_fixations: usize,
    seed: u64,
) -> Result<Scanpath> {
    let fixations = TransitionModel::new(saliency, profile)?.generate(n_fixations, seed)?;
    Ok(Scanpath { image_id: String::new(), seed, fixations })
}

pub fn batch_generate(
    saliency: &SaliencyGrid,
    profile: &ViewerProfile,
    n_scanpaths: usize,
    n_fixations: usize,
    master_seed: u64,
) -> Result<Vec<Scanpath>> {
    TransitionModel::new(saliency, profile)?.generate_batch(n_scanpaths, n_fixations, master_seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plausibility {
    /// KL(reference ‖ generated) of the amplitude marginals.
    pub kl_amplitude: f64,
    /// KL(reference ‖ generated) of the joint distributions.
    pub kl_joint: f64,
    /// KL(generated ‖ reference) of the amplitude marginals, for diagnostics.
    /// Unlike the reference-first direction it penalizes over-dispersion.
    pub kl_amplitude_reverse: f64,
    /// KL(generated ‖ reference) of the joint distributions, for diagnostics.
    pub kl_joint_reverse: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum PlausibilityReference<'a> {
    Distribution(&'a JointSaccadeDistribution),
    /// Raw reference saccades, estimated with Silverman bandwidths on `grid`.
    Samples(&'a [SaccadeSample], BinGrid),
}

/// KL divergences between two distributions on the same grid.
pub fn plausibility_between(
    reference: &JointSaccadeDistribution,
    generated: &JointSaccadeDistribution,
) -> Result<Plausibility> {
    if reference.grid() != generated.grid() {
        return Err(Error::Validation("reference and generated distributions use different grids".into()));
    }
    let (ra, ga) = (reference.amplitude_marginal(), generated.amplitude_marginal());
    let (rj, gj) = (reference.bin_probabilities(), generated.bin_probabilities());
    Ok(Plausibility {
        kl_amplitude: kl_divergence(&ra, &ga)?,
        kl_joint: kl_divergence(&rj, &gj)?,
        kl_amplitude_reverse: kl_divergence(&ga, &ra)?,
        kl_joint_reverse: kl_divergence(&gj, &rj)?,
    })
}

/// Scores a set of saccades against a reference. The generated density is
/// estimated with the default (Silverman) kernel estimator on the reference
/// grid, the same procedure used for observer data. Saccades longer than the
/// grid's `amp_max` cannot be binned; their share `1 − f` is accounted for by
/// adding `−ln f` to the reference-first divergences (the generated mass inside
/// the grid is `f`).
pub fn sample_plausibility(samples: &[SaccadeSample], reference: PlausibilityReference<'_>) -> Result<Plausibility> {
    if samples.len() < MIN_PLAUSIBILITY_SACCADES {
        return Err(Error::Validation(format!(
            "plausibility needs ≥ {MIN_PLAUSIBILITY_SACCADES} saccades, got {}",
            samples.len()
        )));
    }
    let owned;
    let reference = match reference {
        PlausibilityReference::Distribution(d) => d,
        PlausibilityReference::Samples(s, grid) => {
            owned = estimate_joint(s, &KdeParams { grid, bandwidth: BandwidthRule::Silverman })?;
            &owned
        }
    };
    let grid = reference.grid();
    let inside: Vec<SaccadeSample> = samples.iter().copied().filter(|s| s.amplitude <= grid.amp_max).collect();
    let fraction = inside.len() as f64 / samples.len() as f64;
    let generated = estimate_joint(&inside, &KdeParams { grid, bandwidth: BandwidthRule::Silverman })?;
    let p = plausibility_between(reference, &generated)?;
    let penalty = -fraction.ln();
    Ok(Plausibility { kl_amplitude: p.kl_amplitude + penalty, kl_joint: p.kl_joint + penalty, ..p })
}

/// KL(reference ‖ generated) of the saccades in `generated`.
pub fn scanpath_plausibility(
    generated: &[Scanpath],
    reference: PlausibilityReference<'_>,
    ppd: f64,
) -> Result<Plausibility> {
    let mut samples = Vec::new();
    for path in generated {
        samples.extend(saccades_from_fixations(&path.fixations, ppd)?);
    }
    sample_plausibility(&samples, reference)
}

#[derive(Debug, Serialize, Deserialize)]
struct ScanpathRow {
    scanpath_id: usize,
    seed: u64,
    index: u32,
    x: f64,
    y: f64,
}

/// Writes `scanpath_id,seed,index,x,y`, one row per fixation.
pub fn write_scanpath_csv(paths: &[Scanpath], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for (id, path) in paths.iter().enumerate() {
        for f in &path.fixations {
            out.serialize(ScanpathRow { scanpath_id: id, seed: path.seed, index: f.index, x: f.x, y: f.y })?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a scanpath CSV; rows are grouped by `scanpath_id` in order of appearance.
pub fn read_scanpath_csv(r: impl Read, image_id: &str) -> Result<Vec<Scanpath>> {
    let mut reader = csv::Reader::from_reader(r);
    let headers = reader.headers()?.clone();
    for col in ["scanpath_id", "seed", "index", "x", "y"] {
        if !headers.iter().any(|h| h.trim() == col) {
            return Err(Error::MissingColumn(col.into()));
        }
    }
    let mut paths: Vec<(usize, Scanpath)> = Vec::new();
    for row in reader.deserialize::<ScanpathRow>() {
        let row = row?;
        let point = FixationPoint::new(row.x, row.y, row.index);
        match paths.iter_mut().find(|(id, _)| *id == row.scanpath_id) {
            Some((_, p)) => p.fixations.push(point),
            None => paths.push((
                row.scanpath_id,
                Scanpath { image_id: image_id.to_string(), seed: row.seed, fixations: vec![point] },
            )),
        }
    }
    Ok(paths
        .into_iter()
        .map(|(_, mut p)| {
            p.fixations.sort_by_key(|f| f.index);
            p
        })
        .collect())
}

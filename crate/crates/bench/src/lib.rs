//! Shared fixtures for the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saccadic_core::synthetic::{spatial_prior, structured_saliency, two_component_mixture};
use saccadic_core::{BinGrid, FixationPoint, Prior, SaccadeSample, SaliencyGrid, ViewerProfile};

pub const WIDTH: usize = 1024;
pub const HEIGHT: usize = 768;

/// A structured 1024×768 saliency map.
pub fn saliency() -> SaliencyGrid {
    structured_saliency(WIDTH, HEIGHT, 8, 3).expect("valid fixture")
}

/// Spatially-variant viewer with `nc` candidates.
pub fn profile(nc: usize) -> ViewerProfile {
    let set = spatial_prior(WIDTH, HEIGHT, BinGrid::default()).expect("valid fixture");
    ViewerProfile::new(Prior::Spatial(set)).with_candidates(nc)
}

/// `n` saccades from the two-component mixture, inside the default grid.
pub fn saccades(n: usize, seed: u64) -> Vec<SaccadeSample> {
    let mix = two_component_mixture();
    let amp_max = BinGrid::default().amp_max;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::iter::repeat_with(|| mix.sample_one(&mut rng)).filter(|s| s.amplitude <= amp_max).take(n).collect()
}

pub fn fixations(n: usize, seed: u64) -> Vec<FixationPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| FixationPoint::new(rng.random_range(0.0..WIDTH as f64), rng.random_range(0.0..HEIGHT as f64), i as u32))
        .collect()
}

//! Two-sample two-dimensional Kolmogorov–Smirnov test in the (amplitude,
//! orientation) plane, with quadrants anchored at data points and the
//! asymptotic p-value of Fasano & Franceschini / Press et al.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eyedata::SaccadeSample;

pub const DEFAULT_KS_DRAW: usize = 5000;
const MIN_SET: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^(j-1) exp(-2 j² λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let a2 = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 2.0;
    let mut prev = 0.0f64;
    for j in 1..=100 {
        let term = sign * (a2 * (j * j) as f64).exp();
        sum += term;
        if term.abs() <= 1e-10 * prev || term.abs() <= 1e-300 {
            return sum.clamp(0.0, 1.0);
        }
        sign = -sign;
        prev = term.abs();
    }
    1.0
}

/// Maximum quadrant-fraction difference with origins at the points of `origins`.
fn max_quadrant_diff(origins: &[(f64, f64)], a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let count = |set: &[(f64, f64)], x: f64, y: f64| {
        let mut q = [0usize; 4];
        for &(px, py) in set {
            let k = match (px > x, py > y) {
                (true, true) => 0,
                (false, true) => 1,
                (false, false) => 2,
                (true, false) => 3,
            };
            q[k] += 1;
        }
        q
    };
    origins
        .iter()
        .map(|&(x, y)| {
            let qa = count(a, x, y);
            let qb = count(b, x, y);
            (0..4)
                .map(|k| (qa[k] as f64 / na - qb[k] as f64 / nb).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn pearson(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.0, sy + p.1));
    let (mx, my) = (mx / n, my / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Test statistic: the mean of the maximal quadrant differences with origins
/// taken over each sample in turn. Symmetric in its arguments.
pub fn ks2d_statistic(a: &[SaccadeSample], b: &[SaccadeSample]) -> f64 {
    let pa: Vec<_> = a.iter().map(|s| (s.amplitude, s.orientation)).collect();
    let pb: Vec<_> = b.iter().map(|s| (s.amplitude, s.orientation)).collect();
    let d1 = max_quadrant_diff(&pa, &pa, &pb);
    let d2 = max_quadrant_diff(&pb, &pa, &pb);
    0.5 * (d1 + d2)
}

fn canonical_cmp(a: &[SaccadeSample], b: &[SaccadeSample]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.amplitude.total_cmp(&y.amplitude).then(x.orientation.total_cmp(&y.orientation)))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Two-sample 2-D KS test. Each set larger than `n_draw` is subsampled
/// without replacement using `seed`; the pair is put in a canonical order
/// first so that swapping the arguments gives the identical result.
pub fn ks2d_test(a: &[SaccadeSample], b: &[SaccadeSample], n_draw: usize, seed: u64) -> Result<KsResult> {
    if a.len() < MIN_SET || b.len() < MIN_SET {
        return Err(Error::Validation(format!(
            "KS test needs ≥ {MIN_SET} samples per set, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if n_draw < MIN_SET {
        return Err(Error::Config(format!("n_draw must be ≥ {MIN_SET}, got {n_draw}")));
    }
    let (first, second) = if canonical_cmp(a, b) == Ordering::Greater { (b, a) } else { (a, b) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |set: &[SaccadeSample]| -> Vec<SaccadeSample> {
        if set.len() <= n_draw {
            set.to_vec()
        } else {
            let mut idx = sample(&mut rng, set.len(), n_draw).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| set[i]).collect()
        }
    };
    let sa = draw(first);
    let sb = draw(second);

    let statistic = ks2d_statistic(&sa, &sb);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let sqen = (na * nb / (na + nb)).sqrt();
    let pts = |s: &[SaccadeSample]| s.iter().map(|x| (x.amplitude, x.orientation)).collect::<Vec<_>>();
    let r1 = pearson(&pts(&sa));
    let r2 = pearson(&pts(&sb));
    let rr = (1.0 - 0.5 * (r1 * r1 + r2 * r2)).sqrt();
    let lambda = statistic * sqen / (1.0 + rr * (0.25 - 0.75 / sqen));
    Ok(KsResult { statistic, p_value: kolmogorov_q(lambda) })
}

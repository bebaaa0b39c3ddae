//! Per-dimension bandwidth selection for the joint saccade KDE.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::eyedata::{wrap_degrees, SaccadeSample};

const AMP_FLOOR: f64 = 0.1;
const ORI_FLOOR: f64 = 1.0;
/// Standard deviation of a uniform distribution on [0, 360).
const ORI_STD_CAP: f64 = 103.923_048_454_132_64;

const BOTEV_MIN_SAMPLES: usize = 50;
const BOTEV_GRID: usize = 1 << 14;
const BOTEV_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidths {
    pub d: f64,
    pub phi: f64,
    /// Set when the diffusion fixed point did not converge and the rule of
    /// thumb was used instead.
    pub fallback: bool,
}

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Circular standard deviation `sqrt(-2 ln R)` in degrees, capped at the
/// linear std of a uniform angle.
pub fn circular_std_deg(angles_deg: &[f64]) -> f64 {
    let n = angles_deg.len() as f64;
    let (s, c) = angles_deg.iter().fold((0.0, 0.0), |(s, c), a| {
        let t = a.to_radians();
        (s + t.sin(), c + t.cos())
    });
    let r = (s.hypot(c) / n).min(1.0);
    if r <= 0.0 {
        return ORI_STD_CAP;
    }
    (-2.0 * r.ln()).sqrt().to_degrees().min(ORI_STD_CAP)
}

/// Rule of thumb `h = σ · n^(-1/6)` per dimension (circular σ for orientation).
pub fn silverman_bandwidth(samples: &[SaccadeSample]) -> Result<Bandwidths> {
    if samples.len() < 2 {
        return Err(Error::Estimation(format!("bandwidth needs ≥ 2 samples, got {}", samples.len())));
    }
    let factor = (samples.len() as f64).powf(-1.0 / 6.0);
    let sd = std_dev(samples.iter().map(|s| s.amplitude));
    let angles: Vec<f64> = samples.iter().map(|s| s.orientation).collect();
    let sphi = circular_std_deg(&angles);
    Ok(Bandwidths {
        d: (sd * factor).max(AMP_FLOOR),
        phi: (sphi * factor).max(ORI_FLOOR),
        fallback: false,
    })
}

/// Diffusion-based (improved Sheather–Jones) bandwidth per dimension.
/// Orientations are unwrapped at their widest empty arc before the 1-D
/// solve. Falls back to [`silverman_bandwidth`] for a dimension whose fixed
/// point does not converge, setting `fallback`.
pub fn botev_bandwidth(samples: &[SaccadeSample]) -> Result<Bandwidths> {
    if samples.len() < BOTEV_MIN_SAMPLES {
        return Err(Error::Estimation(format!(
            "diffusion bandwidth needs ≥ {BOTEV_MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let rule = silverman_bandwidth(samples)?;
    let amps: Vec<f64> = samples.iter().map(|s| s.amplitude).collect();
    let angles = unwrap_at_widest_gap(samples.iter().map(|s| s.orientation).collect());
    let d = botev_1d(&amps);
    let phi = botev_1d(&angles);
    Ok(Bandwidths {
        d: d.unwrap_or(rule.d).max(AMP_FLOOR),
        phi: phi.unwrap_or(rule.phi).max(ORI_FLOOR),
        fallback: d.is_none() || phi.is_none(),
    })
}

/// Rotates angles so the largest circular gap between consecutive sorted
/// angles sits at the 0/360 seam.
fn unwrap_at_widest_gap(mut angles: Vec<f64>) -> Vec<f64> {
    angles.sort_by(f64::total_cmp);
    let n = angles.len();
    let mut best_gap = angles[0] + 360.0 - angles[n - 1];
    let mut start = angles[0];
    for w in angles.windows(2) {
        let gap = w[1] - w[0];
        if gap > best_gap {
            best_gap = gap;
            start = w[1];
        }
    }
    angles.iter().map(|a| wrap_degrees(a - start)).collect()
}

/// 1-D improved Sheather–Jones bandwidth via the fixed point of the
/// diffusion estimator on the DCT of binned data. `None` when the fixed
/// point cannot be bracketed or located within the iteration budget.
pub fn botev_1d(data: &[f64]) -> Option<f64> {
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return None;
    }
    let min = lo - range / 10.0;
    let span = range * 1.2;
    let n = BOTEV_GRID;

    let mut hist = vec![0.0; n];
    let dx = span / (n - 1) as f64;
    for &v in data {
        let k = (((v - min) / dx).floor() as usize).min(n - 1);
        hist[k] += 1.0;
    }
    let total: f64 = hist.iter().sum();
    hist.iter_mut().for_each(|h| *h /= total);

    let mut uniq = data.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    let n_unique = uniq.len() as f64;

    let a = dct2(&hist);
    let i_sq: Vec<f64> = (1..n).map(|k| (k * k) as f64).collect();
    let a2: Vec<f64> = a[1..].iter().map(|v| (v / 2.0).powi(2)).collect();

    let f = |t: f64| fixed_point(t, n_unique, &i_sq, &a2);
    let t_star = find_root(f, n_unique)?;
    Some(t_star.sqrt() * span)
}

/// Unnormalized DCT-II with the first coefficient unscaled and the rest
/// doubled, computed through an FFT of the even/odd reordering.
fn dct2(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(n);
    buf.extend(x.iter().step_by(2).map(|&v| Complex::new(v, 0.0)));
    let odd_start = if n % 2 == 0 { n - 1 } else { n - 2 };
    buf.extend((1..=odd_start).rev().step_by(2).map(|i| Complex::new(x[i], 0.0)));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter()
        .enumerate()
        .map(|(k, c)| {
            let w = Complex::from_polar(if k == 0 { 1.0 } else { 2.0 }, -(k as f64) * PI / (2.0 * n as f64));
            (w * c).re
        })
        .collect()
}

fn fixed_point(t: f64, n: f64, i_sq: &[f64], a2: &[f64]) -> f64 {
    const L: i32 = 7;
    let sum_at = |s: i32, time: f64| -> f64 {
        i_sq.iter()
            .zip(a2)
            .map(|(&i, &a)| i.powi(s) * a * (-i * PI * PI * time).exp())
            .sum::<f64>()
    };
    let mut f = 2.0 * PI.powi(2 * L) * sum_at(L, t);
    for s in (2..L).rev() {
        let k0: f64 = (1..2 * s).step_by(2).map(f64::from).product::<f64>() / (2.0 * PI).sqrt();
        let c = (1.0 + 0.5f64.powf(s as f64 + 0.5)) / 3.0;
        let time = (2.0 * c * k0 / n / f).powf(2.0 / (3.0 + 2.0 * s as f64));
        f = 2.0 * PI.powi(2 * s) * sum_at(s, time);
    }
    t - (2.0 * n * PI.sqrt() * f).powf(-0.4)
}

/// Brackets the root of `f` on `[0, tol]`, widening `tol` up to 0.1, then bisects.
fn find_root(f: impl Fn(f64) -> f64, n: f64) -> Option<f64> {
    let n = n.clamp(50.0, 1050.0);
    let mut tol = 1e-12 + 0.01 * (n - 50.0) / 1000.0;
    let mut iters = 0;
    let f_lo = f(0.0);
    let mut f_hi = f(tol);
    while !(f_lo.signum() != f_hi.signum() && f_hi.is_finite()) {
        iters += 1;
        if tol >= 0.1 || iters > BOTEV_MAX_ITER {
            return None;
        }
        tol = (tol * 2.0).min(0.1);
        f_hi = f(tol);
    }
    let (mut a, mut b) = (0.0, tol);
    let mut fa = f_lo;
    while iters < BOTEV_MAX_ITER {
        iters += 1;
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a) < 1e-15 * b.max(1e-300) {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

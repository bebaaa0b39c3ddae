//! Saliency agreement metrics: CC, SIM, EMD, AUC-Judd, AUC-Borji and NSS.

mod emd;

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eyedata::FixationPoint;
use crate::grid::SaliencyGrid;

pub use emd::{emd, transport_cost, DEFAULT_EMD_SIDE};

pub const DEFAULT_BORJI_SPLITS: usize = 100;

fn check_shapes(a: &SaliencyGrid, b: &SaliencyGrid) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "map shapes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )))
    }
}

/// Pearson correlation over all pixels.
pub fn cc(a: &SaliencyGrid, b: &SaliencyGrid) -> Result<f64> {
    check_shapes(a, b)?;
    if a.max() == a.min() || b.max() == b.min() {
        return Err(Error::Undefined("correlation undefined for a constant map".into()));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values().iter().zip(b.values()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::Undefined("correlation undefined for a constant map".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Histogram intersection of the two sum-normalized maps.
pub fn sim(a: &SaliencyGrid, b: &SaliencyGrid) -> Result<f64> {
    check_shapes(a, b)?;
    let (a, b) = (a.to_sum_one()?, b.to_sum_one()?);
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x.min(*y)).sum();
    Ok(s.min(1.0))
}

/// Row-major pixel index of each fixation, rejecting points outside the map.
fn fixation_pixels(s: &SaliencyGrid, fixations: &[FixationPoint]) -> Result<Vec<usize>> {
    if fixations.is_empty() {
        return Err(Error::Validation("no fixations".into()));
    }
    let (w, h) = (s.width() as f64, s.height() as f64);
    fixations
        .iter()
        .map(|f| {
            if !(f.x >= 0.0 && f.y >= 0.0 && f.x < w && f.y < h) {
                return Err(Error::Validation(format!(
                    "fixation ({}, {}) outside {}x{} map",
                    f.x,
                    f.y,
                    s.width(),
                    s.height()
                )));
            }
            let (x, y) = s.pixel_of(f.x, f.y);
            Ok(y * s.width() + x)
        })
        .collect()
}

/// Mean z-scored saliency at the fixation pixels.
pub fn nss(s: &SaliencyGrid, fixations: &[FixationPoint]) -> Result<f64> {
    let pixels = fixation_pixels(s, fixations)?;
    let z = s.to_z_scored()?;
    Ok(pixels.iter().map(|&k| z.values()[k]).sum::<f64>() / pixels.len() as f64)
}

/// Trapezoidal area under the ROC curve through `points`, which must start at (0, 0).
fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

/// ROC area with thresholds at the saliency values of the fixated pixels.
/// Positives are the fixations; negatives are the pixels no fixation lands on.
/// Values equal to a threshold count as above it.
pub fn auc_judd(s: &SaliencyGrid, fixations: &[FixationPoint]) -> Result<f64> {
    let pixels = fixation_pixels(s, fixations)?;
    let values = s.values();
    let mut fixated = vec![false; values.len()];
    for &k in &pixels {
        fixated[k] = true;
    }
    let mut negatives: Vec<f64> = values.iter().zip(&fixated).filter(|(_, f)| !**f).map(|(v, _)| *v).collect();
    if negatives.is_empty() {
        return Err(Error::Undefined("every pixel is fixated; no negatives".into()));
    }
    let mut positives: Vec<f64> = pixels.iter().map(|&k| values[k]).collect();
    positives.sort_by(|a, b| b.total_cmp(a));
    negatives.sort_by(|a, b| b.total_cmp(a));
    let (np, nn) = (positives.len() as f64, negatives.len() as f64);

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < positives.len() {
        let t = positives[k];
        while k < positives.len() && positives[k] >= t {
            k += 1;
        }
        tp = tp.max(k);
        while fp < negatives.len() && negatives[fp] >= t {
            fp += 1;
        }
        points.push((fp as f64 / nn, tp as f64 / np));
    }
    points.push((1.0, 1.0));
    Ok(trapezoid(&points))
}

/// Probability that a positive outranks a negative, ties counted as one half.
fn mann_whitney(positives: &mut [f64], negatives: &mut [f64]) -> f64 {
    positives.sort_by(f64::total_cmp);
    negatives.sort_by(f64::total_cmp);
    let (mut below, mut equal_end) = (0usize, 0usize);
    let mut wins = 0.0;
    for &p in positives.iter() {
        while below < negatives.len() && negatives[below] < p {
            below += 1;
        }
        equal_end = equal_end.max(below);
        while equal_end < negatives.len() && negatives[equal_end] <= p {
            equal_end += 1;
        }
        wins += below as f64 + 0.5 * (equal_end - below) as f64;
    }
    wins / (positives.len() * negatives.len()) as f64
}

/// ROC area against uniformly drawn negatives (any pixel, fixated or not), as
/// many per split as there are fixations, averaged over `n_splits`.
pub fn auc_borji(s: &SaliencyGrid, fixations: &[FixationPoint], n_splits: usize, seed: u64) -> Result<f64> {
    if n_splits == 0 {
        return Err(Error::Config("auc_borji needs at least one split".into()));
    }
    let pixels = fixation_pixels(s, fixations)?;
    let values = s.values();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives: Vec<f64> = pixels.iter().map(|&k| values[k]).collect();
    let mut total = 0.0;
    for _ in 0..n_splits {
        let mut negatives: Vec<f64> = (0..pixels.len()).map(|_| values[rng.random_range(0..values.len())]).collect();
        total += mann_whitney(&mut positives.clone(), &mut negatives);
    }
    Ok(total / n_splits as f64)
}

/// Knobs for [`evaluate_all`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub emd_side: usize,
    pub borji_splits: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { emd_side: DEFAULT_EMD_SIDE, borji_splits: DEFAULT_BORJI_SPLITS, seed: 0 }
    }
}

/// All six metrics for one prediction. A metric that cannot be computed is
/// `None` and its message is kept in `errors`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub image_id: String,
    pub group_id: String,
    pub model: String,
    pub cc: Option<f64>,
    pub sim: Option<f64>,
    pub emd: Option<f64>,
    pub auc_judd: Option<f64>,
    pub auc_borji: Option<f64>,
    pub nss: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub errors: BTreeMap<String, String>,
}

pub const METRIC_CSV_HEADER: [&str; 9] = ["image_id", "group_id", "model", "cc", "sim", "emd", "auc_judd", "auc_borji", "nss"];

impl MetricReport {
    pub fn with_labels(mut self, image_id: &str, group_id: &str, model: &str) -> Self {
        self.image_id = image_id.into();
        self.group_id = group_id.into();
        self.model = model.into();
        self
    }

    fn set(&mut self, name: &str, value: Result<f64>) -> Option<f64> {
        match value {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.insert(name.into(), e.to_string());
                None
            }
        }
    }

    /// The metric values in CSV column order; unavailable ones are empty.
    pub fn csv_record(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.image_id.clone(),
            self.group_id.clone(),
            self.model.clone(),
            f(self.cc),
            f(self.sim),
            f(self.emd),
            f(self.auc_judd),
            f(self.auc_borji),
            f(self.nss),
        ]
    }
}

/// Writes a header and one row per report.
pub fn write_metric_csv<W: Write>(reports: &[MetricReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(METRIC_CSV_HEADER)?;
    for r in reports {
        out.write_record(r.csv_record())?;
    }
    out.flush()?;
    Ok(())
}

/// Map-vs-map metrics against `human_map`, fixation metrics against `fixations`.
pub fn evaluate_all(
    s: &SaliencyGrid,
    human_map: &SaliencyGrid,
    fixations: &[FixationPoint],
    options: &EvalOptions,
) -> Result<MetricReport> {
    check_shapes(s, human_map)?;
    let (emd_value, rest) = rayon::join(
        || emd(s, human_map, options.emd_side),
        || {
            (
                cc(s, human_map),
                sim(s, human_map),
                auc_judd(s, fixations),
                auc_borji(s, fixations, options.borji_splits, options.seed),
                nss(s, fixations),
            )
        },
    );
    let mut report = MetricReport::default();
    report.cc = report.set("cc", rest.0);
    report.sim = report.set("sim", rest.1);
    report.emd = report.set("emd", emd_value);
    report.auc_judd = report.set("auc_judd", rest.2);
    report.auc_borji = report.set("auc_borji", rest.3);
    report.nss = report.set("nss", rest.4);
    Ok(report)
}

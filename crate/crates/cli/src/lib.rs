//! Command implementations behind the `saccadic` binary.
//!
//! Every command reads its inputs, writes its outputs under `--out` and
//! returns a small summary. Data files (CSV, JSON, SGF) are byte-deterministic
//! for a fixed seed; PNGs are conveniences.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use saccadic_core::engine::{
    load_prior, load_profile, read_scanpath_csv, scanpath_plausibility, write_scanpath_csv, Plausibility,
    PlausibilityReference,
};
use saccadic_core::eyedata::{saccades_from_sequence, DEFAULT_PPD};
use saccadic_core::metrics::{EvalOptions, METRIC_CSV_HEADER};
use saccadic_core::statmodel::{usable_samples, DEFAULT_KS_DRAW};
use saccadic_core::{
    batch_generate, center_bias_crowns, estimate_joint, estimate_spatial_set, evaluate_all, fixation_saliency_map,
    ks2d_test, parse_fixation_log, BandwidthRule, BinGrid, FixationPoint, FixationSequence, Geometry,
    JointSaccadeDistribution, KdeParams, MetricReport, Prior, SaccadeSample, SaliencyGrid, Scanpath, ViewerProfile,
};
use serde::Serialize;

/// `3x3` keeps the spatially-variant prior, `1x1` pools it into one distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    Spatial,
    Pooled,
}

impl FromStr for GridMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "3x3" => Ok(GridMode::Spatial),
            "1x1" => Ok(GridMode::Pooled),
            other => Err(format!("grid must be 3x3 or 1x1, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BandwidthArg {
    Silverman,
    Botev,
}

/// Kernel density estimation options.
#[derive(Debug, Clone, Args)]
pub struct KdeArgs {
    /// Amplitude bins.
    #[arg(long, default_value_t = 80)]
    pub amp_bins: usize,
    /// Largest representable amplitude, in degrees.
    #[arg(long, default_value_t = 20.0)]
    pub amp_max: f64,
    /// Orientation bins over 360°.
    #[arg(long, default_value_t = 120)]
    pub ori_bins: usize,
    #[arg(long, value_enum, default_value_t = BandwidthArg::Silverman)]
    pub bandwidth: BandwidthArg,
}

impl KdeArgs {
    pub fn params(&self) -> Result<KdeParams> {
        let grid = BinGrid::new(self.amp_bins, self.amp_max, self.ori_bins)?;
        let bandwidth = match self.bandwidth {
            BandwidthArg::Silverman => BandwidthRule::Silverman,
            BandwidthArg::Botev => BandwidthRule::Botev,
        };
        Ok(KdeParams { grid, bandwidth })
    }
}

impl Default for KdeArgs {
    fn default() -> Self {
        Self { amp_bins: 80, amp_max: 20.0, ori_bins: 120, bandwidth: BandwidthArg::Silverman }
    }
}

/// Viewer configuration: a profile file or a distribution file, plus overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct ProfileArgs {
    /// Profile JSON (candidate_count, memory_span, ppd, inhibition_radius_deg, distribution_path).
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Distribution JSON: a spatial set or a single joint distribution.
    #[arg(long, conflicts_with = "profile")]
    pub distribution: Option<PathBuf>,
    /// Replace the saccade prior by p_B = 1.
    #[arg(long)]
    pub uniform_prior: bool,
    /// `1x1` pools a spatial set into a single distribution.
    #[arg(long, default_value = "3x3")]
    pub grid: Option<String>,
    /// Candidate count N_c.
    #[arg(long)]
    pub nc: Option<usize>,
    /// Memory span T, in fixations.
    #[arg(long)]
    pub memory_span: Option<usize>,
    /// Pixels per degree of visual angle [default: 28].
    #[arg(long)]
    pub ppd: Option<f64>,
    /// Inhibition-of-return radius in degrees.
    #[arg(long)]
    pub inhibition_radius: Option<f64>,
    /// Divide the prior by saccade amplitude when mapping it onto pixels.
    #[arg(long)]
    pub jacobian_correction: bool,
}

impl ProfileArgs {
    fn grid_mode(&self) -> Result<GridMode> {
        self.grid.as_deref().unwrap_or("3x3").parse().map_err(|e: String| anyhow!(e))
    }

    pub fn build(&self) -> Result<ViewerProfile> {
        let mut profile = match (&self.profile, &self.distribution) {
            (Some(path), _) => load_profile(path).with_context(|| format!("loading profile {}", path.display()))?,
            (None, Some(path)) => ViewerProfile::new(
                load_prior(path).with_context(|| format!("loading distribution {}", path.display()))?,
            ),
            (None, None) if self.uniform_prior => ViewerProfile::new(Prior::Uniform),
            (None, None) => bail!("one of --profile, --distribution or --uniform-prior is required"),
        };
        if self.uniform_prior {
            profile.prior = Prior::Uniform;
        }
        if self.grid_mode()? == GridMode::Pooled {
            if let Prior::Spatial(set) = &profile.prior {
                profile.prior = Prior::Single(set.pooled()?);
            }
        }
        if let Some(nc) = self.nc {
            profile.candidate_count = nc;
        }
        if let Some(t) = self.memory_span {
            profile.memory_span = t;
        }
        if let Some(ppd) = self.ppd {
            profile.ppd = ppd;
        } else if self.profile.is_none() {
            profile.ppd = DEFAULT_PPD;
        }
        if let Some(r) = self.inhibition_radius {
            profile.inhibition_radius = r;
        }
        if self.jacobian_correction {
            profile.jacobian_correction = true;
        }
        profile.validate()?;
        Ok(profile)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

/// Group ids become file names; anything outside `[A-Za-z0-9_-]` turns into `_`.
fn file_stem(id: &str) -> String {
    let s: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

fn read_log(path: &Path, geometry: Geometry) -> Result<Vec<FixationSequence>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading fixation log {}", path.display()))?;
    Ok(parse_fixation_log(&text, geometry)?)
}

fn by_group(seqs: Vec<FixationSequence>) -> BTreeMap<String, Vec<FixationSequence>> {
    let mut out: BTreeMap<String, Vec<FixationSequence>> = BTreeMap::new();
    for s in seqs {
        out.entry(s.group_id.clone()).or_default().push(s);
    }
    out
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

// ---------------------------------------------------------------- estimate

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Fixation log CSV (observer_id,image_id,group_id,index,x,y,duration_ms).
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    /// Only estimate these groups (repeatable).
    #[arg(long = "group")]
    pub groups: Vec<String>,
    #[arg(long, default_value = "3x3")]
    pub grid: String,
    #[arg(long, default_value_t = DEFAULT_PPD)]
    pub ppd: f64,
    #[command(flatten)]
    pub kde: KdeArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupEstimate {
    pub group_id: String,
    /// Saccades per cell, row-major; a single entry for `1x1`.
    pub cell_counts: Vec<usize>,
    pub files: Vec<PathBuf>,
}

/// Per group: `<group>_spatial.json` (3x3 only) and `<group>_pooled.json`.
pub fn cmd_estimate(args: &EstimateArgs) -> Result<Vec<GroupEstimate>> {
    let mode: GridMode = args.grid.parse().map_err(|e: String| anyhow!(e))?;
    let params = args.kde.params()?;
    let seqs = read_log(&args.log, Geometry::new(args.width, args.height))?;
    let mut groups = by_group(seqs);
    if !args.groups.is_empty() {
        groups.retain(|g, _| args.groups.contains(g));
        for g in &args.groups {
            if !groups.contains_key(g) {
                bail!("group `{g}` does not occur in {}", args.log.display());
            }
        }
    }
    if groups.is_empty() {
        bail!("no fixation sequences in {}", args.log.display());
    }
    ensure_dir(&args.out)?;
    let mut out = Vec::new();
    for (group, seqs) in &groups {
        let stem = file_stem(group);
        let mut files = Vec::new();
        let (pooled, cell_counts) = match mode {
            GridMode::Spatial => {
                let set = estimate_spatial_set(seqs, args.ppd, &params).with_context(|| format!("group `{group}`"))?;
                let path = args.out.join(format!("{stem}_spatial.json"));
                set.save(&path)?;
                files.push(path);
                let counts = set.cells().map(|(_, d)| d.sample_count()).collect();
                (set.pooled()?, counts)
            }
            GridMode::Pooled => {
                let mut samples = Vec::new();
                for s in seqs {
                    samples.extend(saccades_from_sequence(s, args.ppd)?);
                }
                let dist = estimate_joint(&samples, &params).with_context(|| format!("group `{group}`"))?;
                let n = dist.sample_count();
                (dist, vec![n])
            }
        };
        let path = args.out.join(format!("{stem}_pooled.json"));
        pooled.save(&path)?;
        files.push(path);
        out.push(GroupEstimate { group_id: group.clone(), cell_counts, files });
    }
    Ok(out)
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Bottom-up saliency map (.sgf, or grayscale .png).
    #[arg(long)]
    pub saliency: PathBuf,
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[arg(long, default_value_t = 20)]
    pub n_scanpaths: usize,
    #[arg(long, default_value_t = 15)]
    pub n_fixations: usize,
    #[arg(long, default_value = "")]
    pub image_id: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerateSummary {
    pub rows: usize,
    pub scanpaths_csv: PathBuf,
    pub saliency_sgf: PathBuf,
    pub saliency_png: PathBuf,
}

/// Saliency map of a set of scanpaths: Gaussians of one degree (`ppd` px).
pub fn scanpath_saliency(paths: &[Scanpath], geometry: Geometry, ppd: f64) -> Result<SaliencyGrid> {
    let all: Vec<FixationPoint> = paths.iter().flat_map(|p| p.fixations.iter().copied()).collect();
    Ok(fixation_saliency_map(&all, geometry, ppd)?)
}

/// Writes `scanpaths.csv`, `scanpath_saliency.sgf` and `scanpath_saliency.png`.
pub fn cmd_generate(args: &GenerateArgs) -> Result<GenerateSummary> {
    let saliency = SaliencyGrid::load(&args.saliency).with_context(|| format!("loading {}", args.saliency.display()))?;
    let profile = args.profile.build()?;
    let mut paths = batch_generate(&saliency, &profile, args.n_scanpaths, args.n_fixations, args.seed)?;
    for p in &mut paths {
        p.image_id = args.image_id.clone();
    }
    ensure_dir(&args.out)?;
    let scanpaths_csv = args.out.join("scanpaths.csv");
    write_scanpath_csv(&paths, fs::File::create(&scanpaths_csv)?)?;
    let map = scanpath_saliency(&paths, Geometry::new(saliency.width(), saliency.height()), profile.ppd)?;
    let saliency_sgf = args.out.join("scanpath_saliency.sgf");
    let saliency_png = args.out.join("scanpath_saliency.png");
    map.save(&saliency_sgf)?;
    map.write_heatmap_png(&saliency_png)?;
    Ok(GenerateSummary { rows: args.n_scanpaths * args.n_fixations, scanpaths_csv, saliency_sgf, saliency_png })
}

// ---------------------------------------------------------------- evaluate

/// `IMAGE:MODEL=PATH`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSpec {
    pub image_id: String,
    pub model: String,
    pub path: PathBuf,
}

impl FromStr for PredictionSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (key, path) = s.split_once('=').ok_or_else(|| format!("expected IMAGE:MODEL=PATH, got `{s}`"))?;
        let (image_id, model) = key.split_once(':').ok_or_else(|| format!("expected IMAGE:MODEL=PATH, got `{s}`"))?;
        Ok(Self { image_id: image_id.into(), model: model.into(), path: path.into() })
    }
}

/// `IMAGE=PATH`.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanMapSpec {
    pub image_id: String,
    pub path: PathBuf,
}

impl FromStr for HumanMapSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (image_id, path) = s.split_once('=').ok_or_else(|| format!("expected IMAGE=PATH, got `{s}`"))?;
        Ok(Self { image_id: image_id.into(), path: path.into() })
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Predicted saliency map or scanpath CSV, as IMAGE:MODEL=PATH (repeatable).
    #[arg(long = "prediction", required = true)]
    pub predictions: Vec<PredictionSpec>,
    /// Human saliency map as IMAGE=PATH (repeatable). Without one, the map is
    /// built from the log's fixations for that image and group.
    #[arg(long = "human")]
    pub human: Vec<HumanMapSpec>,
    /// Fixation log with the observers' fixations.
    #[arg(long)]
    pub fixations: PathBuf,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long = "group")]
    pub groups: Vec<String>,
    /// Reference distribution for KL plausibility of scanpath predictions.
    #[arg(long)]
    pub reference_dist: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PPD)]
    pub ppd: f64,
    #[arg(long, default_value_t = 100)]
    pub borji_splits: usize,
    #[arg(long, default_value_t = 32)]
    pub emd_side: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationRow {
    #[serde(flatten)]
    pub report: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plausibility: Option<Plausibility>,
}

fn check_geometry(what: &str, map: &SaliencyGrid, geometry: Geometry) -> Result<()> {
    if map.width() != geometry.width || map.height() != geometry.height {
        bail!(
            "{what} is {}x{} but the evaluation geometry is {}x{}",
            map.width(),
            map.height(),
            geometry.width,
            geometry.height
        );
    }
    Ok(())
}

enum Prediction {
    Map(SaliencyGrid),
    Scanpaths(Vec<Scanpath>, SaliencyGrid),
}

fn load_prediction(spec: &PredictionSpec, geometry: Geometry, ppd: f64) -> Result<Prediction> {
    let is_csv = spec.path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let ctx = || format!("loading prediction {}", spec.path.display());
    if is_csv {
        let paths = read_scanpath_csv(fs::File::open(&spec.path).with_context(ctx)?, &spec.image_id).with_context(ctx)?;
        for f in paths.iter().flat_map(|p| &p.fixations) {
            if !geometry.contains(f.x, f.y) {
                bail!(
                    "scanpath fixation ({}, {}) in {} lies outside the {}x{} evaluation geometry",
                    f.x,
                    f.y,
                    spec.path.display(),
                    geometry.width,
                    geometry.height
                );
            }
        }
        let map = scanpath_saliency(&paths, geometry, ppd)?;
        Ok(Prediction::Scanpaths(paths, map))
    } else {
        let map = SaliencyGrid::load(&spec.path).with_context(ctx)?;
        check_geometry(&format!("prediction {}", spec.path.display()), &map, geometry)?;
        Ok(Prediction::Map(map))
    }
}

/// One row per (image, group, model); writes `metrics.csv` and `metrics.json`.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<Vec<EvaluationRow>> {
    let geometry = Geometry::new(args.width, args.height);
    let seqs = read_log(&args.fixations, geometry)?;
    let reference = match &args.reference_dist {
        Some(path) => Some(match load_prior(path).with_context(|| format!("loading {}", path.display()))? {
            Prior::Spatial(set) => set.pooled()?,
            Prior::Single(d) => d,
            Prior::Uniform => unreachable!("files never hold a uniform prior"),
        }),
        None => None,
    };
    let options = EvalOptions { emd_side: args.emd_side, borji_splits: args.borji_splits, seed: args.seed };

    let mut images: Vec<&str> = Vec::new();
    for p in &args.predictions {
        if !images.contains(&p.image_id.as_str()) {
            images.push(&p.image_id);
        }
    }
    let mut rows = Vec::new();
    for image in images {
        let on_image: Vec<&FixationSequence> = seqs.iter().filter(|s| s.image_id == image).collect();
        let mut groups: BTreeSet<&str> = on_image.iter().map(|s| s.group_id.as_str()).collect();
        if !args.groups.is_empty() {
            groups.retain(|g| args.groups.iter().any(|a| a == g));
        }
        if groups.is_empty() {
            bail!("no fixations for image `{image}` in {}", args.fixations.display());
        }
        let human_file = match args.human.iter().find(|h| h.image_id == image) {
            Some(h) => {
                let map = SaliencyGrid::load(&h.path).with_context(|| format!("loading {}", h.path.display()))?;
                check_geometry(&format!("human map {}", h.path.display()), &map, geometry)?;
                Some(map)
            }
            None => None,
        };
        let predictions: Vec<(&PredictionSpec, Prediction)> = args
            .predictions
            .iter()
            .filter(|p| p.image_id == image)
            .map(|p| Ok((p, load_prediction(p, geometry, args.ppd)?)))
            .collect::<Result<_>>()?;
        for group in groups {
            let fixations: Vec<FixationPoint> = on_image
                .iter()
                .filter(|s| s.group_id == group)
                .flat_map(|s| s.fixations.iter().copied())
                .collect();
            let human = match &human_file {
                Some(m) => m.clone(),
                None => fixation_saliency_map(&fixations, geometry, args.ppd)?,
            };
            for (spec, prediction) in &predictions {
                let (map, plausibility) = match prediction {
                    Prediction::Map(m) => (m, None),
                    Prediction::Scanpaths(paths, m) => {
                        let p = match &reference {
                            Some(r) => Some(scanpath_plausibility(paths, PlausibilityReference::Distribution(r), args.ppd)?),
                            None => None,
                        };
                        (m, p)
                    }
                };
                let report = evaluate_all(map, &human, &fixations, &options)?.with_labels(image, group, &spec.model);
                rows.push(EvaluationRow { report, plausibility });
            }
        }
    }
    ensure_dir(&args.out)?;
    write_evaluation_csv(&rows, reference.is_some(), &args.out.join("metrics.csv"))?;
    write_json(&args.out.join("metrics.json"), &rows)?;
    Ok(rows)
}

fn write_evaluation_csv(rows: &[EvaluationRow], with_kl: bool, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = METRIC_CSV_HEADER.to_vec();
    if with_kl {
        header.extend(["kl_amplitude", "kl_joint"]);
    }
    w.write_record(&header)?;
    for row in rows {
        let mut rec = row.report.csv_record();
        if with_kl {
            let (a, j) = row.plausibility.map_or((String::new(), String::new()), |p| {
                (p.kl_amplitude.to_string(), p.kl_joint.to_string())
            });
            rec.extend([a, j]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- sweep-nc

/// Inclusive `A-B` or `A..B` range of candidate counts within [1, 64].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NcRange {
    pub start: usize,
    pub end: usize,
}

impl FromStr for NcRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("..")
            .or_else(|| s.split_once('-'))
            .unwrap_or((s, s));
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("invalid candidate count `{v}`"));
        let r = NcRange { start: parse(a)?, end: parse(b)? };
        if r.start < 1 || r.end > 64 || r.start > r.end {
            return Err(format!("nc range must satisfy 1 ≤ start ≤ end ≤ 64, got {s}"));
        }
        Ok(r)
    }
}

impl NcRange {
    pub fn values(&self) -> impl Iterator<Item = usize> {
        self.start..=self.end
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub saliency: PathBuf,
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// Reference distribution for the KL columns (a spatial set is pooled).
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, default_value = "1-9")]
    pub nc_range: NcRange,
    #[arg(long, default_value_t = 1)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 20)]
    pub n_scanpaths: usize,
    #[arg(long, default_value_t = 15)]
    pub n_fixations: usize,
    /// Ground-truth map for the metric columns.
    #[arg(long, requires = "fixations")]
    pub human: Option<PathBuf>,
    /// Ground-truth fixation log for the metric columns.
    #[arg(long, requires = "human")]
    pub fixations: Option<PathBuf>,
    /// Restrict ground-truth fixations to this image.
    #[arg(long)]
    pub image_id: Option<String>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Ground truth for the metric columns of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth<'a> {
    pub map: &'a SaliencyGrid,
    pub fixations: &'a [FixationPoint],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub nc: usize,
    pub kl_amplitude: f64,
    pub kl_joint: f64,
    pub kl_amplitude_reverse: f64,
    pub kl_joint_reverse: f64,
    pub cc: Option<f64>,
    pub sim: Option<f64>,
    pub emd: Option<f64>,
    pub auc_judd: Option<f64>,
    pub auc_borji: Option<f64>,
    pub nss: Option<f64>,
}

pub const SWEEP_CSV_HEADER: [&str; 11] = [
    "nc",
    "kl_amplitude",
    "kl_joint",
    "kl_amplitude_reverse",
    "kl_joint_reverse",
    "cc",
    "sim",
    "emd",
    "auc_judd",
    "auc_borji",
    "nss",
];

/// Master seed of repetition `r`; path `k` inside it is further xor-ed with `k`.
pub fn repetition_seed(seed: u64, r: usize) -> u64 {
    seed ^ ((r as u64) << 32)
}

fn mean_of(values: &[Option<f64>]) -> Option<f64> {
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64)
}

/// Regenerates and scores for every `nc`; values are means over repetitions.
/// All candidate counts share the same repetition seeds.
#[allow(clippy::too_many_arguments)]
pub fn sweep_nc(
    saliency: &SaliencyGrid,
    profile: &ViewerProfile,
    reference: &JointSaccadeDistribution,
    ncs: impl IntoIterator<Item = usize>,
    repetitions: usize,
    n_scanpaths: usize,
    n_fixations: usize,
    seed: u64,
    truth: Option<GroundTruth<'_>>,
) -> Result<Vec<SweepRow>> {
    if repetitions == 0 {
        bail!("repetitions must be ≥ 1");
    }
    let geometry = Geometry::new(saliency.width(), saliency.height());
    let options = EvalOptions { seed, ..EvalOptions::default() };
    let mut rows = Vec::new();
    for nc in ncs {
        let p = profile.clone().with_candidates(nc);
        let mut kl = [0.0; 4];
        let mut metrics: Vec<[Option<f64>; 6]> = Vec::new();
        for r in 0..repetitions {
            let paths = batch_generate(saliency, &p, n_scanpaths, n_fixations, repetition_seed(seed, r))?;
            let q = scanpath_plausibility(&paths, PlausibilityReference::Distribution(reference), p.ppd)?;
            for (acc, v) in kl.iter_mut().zip([q.kl_amplitude, q.kl_joint, q.kl_amplitude_reverse, q.kl_joint_reverse]) {
                *acc += v / repetitions as f64;
            }
            if let Some(t) = truth {
                let map = scanpath_saliency(&paths, geometry, p.ppd)?;
                let m = evaluate_all(&map, t.map, t.fixations, &options)?;
                metrics.push([m.cc, m.sim, m.emd, m.auc_judd, m.auc_borji, m.nss]);
            }
        }
        let col = |k: usize| mean_of(&metrics.iter().map(|m| m[k]).collect::<Vec<_>>());
        rows.push(SweepRow {
            nc,
            kl_amplitude: kl[0],
            kl_joint: kl[1],
            kl_amplitude_reverse: kl[2],
            kl_joint_reverse: kl[3],
            cc: col(0),
            sim: col(1),
            emd: col(2),
            auc_judd: col(3),
            auc_borji: col(4),
            nss: col(5),
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SWEEP_CSV_HEADER)?;
    let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.nc.to_string(),
            r.kl_amplitude.to_string(),
            r.kl_joint.to_string(),
            r.kl_amplitude_reverse.to_string(),
            r.kl_joint_reverse.to_string(),
            f(r.cc),
            f(r.sim),
            f(r.emd),
            f(r.auc_judd),
            f(r.auc_borji),
            f(r.nss),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `sweep_nc.csv`.
pub fn cmd_sweep_nc(args: &SweepArgs) -> Result<Vec<SweepRow>> {
    let saliency = SaliencyGrid::load(&args.saliency).with_context(|| format!("loading {}", args.saliency.display()))?;
    let profile = args.profile.build()?;
    let reference = match load_prior(&args.reference).with_context(|| format!("loading {}", args.reference.display()))? {
        Prior::Spatial(set) => set.pooled()?,
        Prior::Single(d) => d,
        Prior::Uniform => unreachable!("files never hold a uniform prior"),
    };
    let geometry = Geometry::new(saliency.width(), saliency.height());
    let truth = match (&args.human, &args.fixations) {
        (Some(h), Some(f)) => {
            let map = SaliencyGrid::load(h).with_context(|| format!("loading {}", h.display()))?;
            check_geometry(&format!("human map {}", h.display()), &map, geometry)?;
            let fixations: Vec<FixationPoint> = read_log(f, geometry)?
                .into_iter()
                .filter(|s| args.image_id.as_ref().is_none_or(|id| &s.image_id == id))
                .flat_map(|s| s.fixations)
                .collect();
            if fixations.is_empty() {
                bail!("no ground-truth fixations in {}", f.display());
            }
            Some((map, fixations))
        }
        _ => None,
    };
    let rows = sweep_nc(
        &saliency,
        &profile,
        &reference,
        args.nc_range.values(),
        args.repetitions,
        args.n_scanpaths,
        args.n_fixations,
        args.seed,
        truth.as_ref().map(|(m, f)| GroundTruth { map: m, fixations: f }),
    )?;
    ensure_dir(&args.out)?;
    write_sweep_csv(&rows, &args.out.join("sweep_nc.csv"))?;
    Ok(rows)
}

// ---------------------------------------------------------------- analyze

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long, default_value_t = DEFAULT_PPD)]
    pub ppd: f64,
    #[command(flatten)]
    pub kde: KdeArgs,
    /// Saccades drawn per group for the KS test.
    #[arg(long, default_value_t = DEFAULT_KS_DRAW)]
    pub ks_draw: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsCell {
    pub group_a: String,
    pub group_b: String,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeSummary {
    pub groups: Vec<String>,
    pub crowns: Vec<[f64; 10]>,
    pub ks: Vec<KsCell>,
}

/// Writes `crowns.csv`, `ks_matrix.csv`, and per group `<group>_amplitude.csv`
/// and `<group>_joint.json`.
pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<AnalyzeSummary> {
    let geometry = Geometry::new(args.width, args.height);
    let groups = by_group(read_log(&args.log, geometry)?);
    if groups.is_empty() {
        bail!("no fixation sequences in {}", args.log.display());
    }
    let params = args.kde.params()?;
    ensure_dir(&args.out)?;

    let mut crowns_csv = csv::Writer::from_path(args.out.join("crowns.csv"))?;
    let mut header = vec!["group_id".to_string(), "n_fixations".to_string()];
    header.extend((1..=10).map(|k| format!("crown_{k}")));
    header.push("outer_4".into());
    crowns_csv.write_record(&header)?;

    let mut names = Vec::new();
    let mut crowns = Vec::new();
    let mut saccades: Vec<Vec<SaccadeSample>> = Vec::new();
    for (group, seqs) in &groups {
        let fixations: Vec<FixationPoint> = seqs.iter().flat_map(|s| s.fixations.iter().copied()).collect();
        let hist = center_bias_crowns(&fixations, geometry)?;
        let mut rec = vec![group.clone(), fixations.len().to_string()];
        rec.extend(hist.shares.iter().map(|s| s.to_string()));
        rec.push(hist.outer_share(4).to_string());
        crowns_csv.write_record(&rec)?;

        let mut samples = Vec::new();
        for s in seqs {
            samples.extend(saccades_from_sequence(s, args.ppd)?);
        }
        let samples = usable_samples(&samples);
        let dist = estimate_joint(&samples, &params).with_context(|| format!("group `{group}`"))?;
        let stem = file_stem(group);
        dist.save(args.out.join(format!("{stem}_joint.json")))?;
        let mut amp = csv::Writer::from_path(args.out.join(format!("{stem}_amplitude.csv")))?;
        amp.write_record(["amplitude_deg", "probability"])?;
        for (a, p) in dist.amplitude_marginal().iter().enumerate() {
            amp.write_record([params.grid.amp_center(a).to_string(), p.to_string()])?;
        }
        amp.flush()?;

        names.push(group.clone());
        crowns.push(hist.shares);
        saccades.push(samples);
    }
    crowns_csv.flush()?;

    let mut ks = Vec::new();
    let mut ks_csv = csv::Writer::from_path(args.out.join("ks_matrix.csv"))?;
    ks_csv.write_record(["group_a", "group_b", "statistic", "p_value"])?;
    for (i, a) in saccades.iter().enumerate() {
        for (j, b) in saccades.iter().enumerate() {
            let r = ks2d_test(a, b, args.ks_draw, args.seed)
                .with_context(|| format!("KS test {} vs {}", names[i], names[j]))?;
            ks_csv.write_record([names[i].clone(), names[j].clone(), r.statistic.to_string(), r.p_value.to_string()])?;
            ks.push(KsCell { group_a: names[i].clone(), group_b: names[j].clone(), statistic: r.statistic, p_value: r.p_value });
        }
    }
    ks_csv.flush()?;
    Ok(AnalyzeSummary { groups: names, crowns, ks })
}

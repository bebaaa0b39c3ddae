//! Scanpath generation.
//!
//! The next fixation is drawn from a per-pixel transition probability built
//! from three factors: bottom-up saliency, an inhibition-of-return memory and
//! the saccade prior queried at the displacement from the previous fixation.
//! `candidate_count` draws are taken from that map and the one maximizing
//! `saliency · prior / distance` wins.

mod generate;
mod transition;

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use generate::{
    batch_generate, generate_scanpath, plausibility_between, read_scanpath_csv, sample_plausibility,
    scanpath_plausibility, write_scanpath_csv, Plausibility, PlausibilityReference, MIN_PLAUSIBILITY_SACCADES,
};
pub use transition::{sample_candidates, select_fixation, transition_map, TransitionModel};

use crate::error::{Error, Result};
use crate::eyedata::{FixationPoint, DEFAULT_PPD};
use crate::statmodel::{JointSaccadeDistribution, SpatialDistributionSet};

/// Lower bound on the distance term of the selection score, in degrees.
pub const SELECTION_DISTANCE_FLOOR: f64 = 0.25;
/// Saliency is floored at this fraction of its maximum.
pub const SALIENCY_FLOOR: f64 = 1e-9;

pub const DEFAULT_MEMORY_SPAN: usize = 5;
pub const DEFAULT_INHIBITION_RADIUS: f64 = 2.0;
pub const DEFAULT_CANDIDATE_COUNT: usize = 5;

/// Saccade prior `p_B(d, φ)` used by a viewer.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    /// One distribution per 3×3 cell, selected by the previous fixation.
    Spatial(SpatialDistributionSet),
    /// A single distribution for the whole image.
    Single(JointSaccadeDistribution),
    /// `p_B ≡ 1`.
    Uniform,
}

impl Prior {
    /// Number of distinct distributions (lookup tables) the prior needs.
    pub(crate) fn table_count(&self) -> usize {
        match self {
            Prior::Spatial(_) => 9,
            Prior::Single(_) => 1,
            Prior::Uniform => 0,
        }
    }

    /// Distribution slot and distribution governing saccades from `(x, y)`.
    pub(crate) fn slot_for(&self, x: f64, y: f64) -> Option<(usize, &JointSaccadeDistribution)> {
        match self {
            Prior::Spatial(set) => {
                let (r, c) = set.cell_index(x, y);
                Some((r * 3 + c, set.cell(r, c)))
            }
            Prior::Single(d) => Some((0, d)),
            Prior::Uniform => None,
        }
    }

    pub(crate) fn amp_max(&self) -> Option<f64> {
        match self {
            Prior::Spatial(set) => Some(set.cell(0, 0).grid().amp_max),
            Prior::Single(d) => Some(d.grid().amp_max),
            Prior::Uniform => None,
        }
    }

    /// `p_B(d, φ)` for a saccade starting at `from`.
    pub fn density(&self, from: (f64, f64), d: f64, phi: f64) -> f64 {
        match self.slot_for(from.0, from.1) {
            Some((_, dist)) => dist.density_at(d, phi),
            None => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewerProfile {
    pub prior: Prior,
    pub candidate_count: usize,
    pub memory_span: usize,
    pub ppd: f64,
    /// Inhibition-of-return Gaussian std, in degrees.
    pub inhibition_radius: f64,
    /// Divide the prior by saccade amplitude when mapping it onto pixels.
    pub jacobian_correction: bool,
}

impl ViewerProfile {
    pub fn new(prior: Prior) -> Self {
        Self {
            prior,
            candidate_count: DEFAULT_CANDIDATE_COUNT,
            memory_span: DEFAULT_MEMORY_SPAN,
            ppd: DEFAULT_PPD,
            inhibition_radius: DEFAULT_INHIBITION_RADIUS,
            jacobian_correction: false,
        }
    }

    pub fn with_candidates(mut self, n: usize) -> Self {
        self.candidate_count = n;
        self
    }

    pub fn with_memory_span(mut self, t: usize) -> Self {
        self.memory_span = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidate_count == 0 {
            return Err(Error::Config("candidate_count must be ≥ 1".into()));
        }
        if !(self.ppd > 0.0) || !self.ppd.is_finite() {
            return Err(Error::Config(format!("ppd must be positive, got {}", self.ppd)));
        }
        if !(self.inhibition_radius > 0.0) || !self.inhibition_radius.is_finite() {
            return Err(Error::Config(format!(
                "inhibition_radius must be positive, got {}",
                self.inhibition_radius
            )));
        }
        Ok(())
    }

    /// Inhibition Gaussian std in pixels.
    pub fn inhibition_sigma_px(&self) -> f64 {
        self.inhibition_radius * self.ppd
    }
}

/// Profile file: `{candidate_count, memory_span, ppd, inhibition_radius_deg,
/// distribution_path, jacobian_correction}`. `distribution_path` is resolved
/// relative to the profile file and may hold a spatial set or a single
/// distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub candidate_count: usize,
    pub memory_span: usize,
    pub ppd: f64,
    pub inhibition_radius_deg: f64,
    pub distribution_path: String,
    #[serde(default)]
    pub jacobian_correction: bool,
}

impl ProfileFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Loads the referenced distribution and builds a validated profile.
    pub fn into_profile(self, base_dir: &Path) -> Result<ViewerProfile> {
        let prior = load_prior(base_dir.join(&self.distribution_path))?;
        let profile = ViewerProfile {
            prior,
            candidate_count: self.candidate_count,
            memory_span: self.memory_span,
            ppd: self.ppd,
            inhibition_radius: self.inhibition_radius_deg,
            jacobian_correction: self.jacobian_correction,
        };
        profile.validate()?;
        Ok(profile)
    }
}

/// Loads a distribution file holding either a spatial set (has `cells`) or a
/// single joint distribution.
pub fn load_prior(path: impl AsRef<Path>) -> Result<Prior> {
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(if value.get("cells").is_some() {
        Prior::Spatial(serde_json::from_value(value)?)
    } else {
        Prior::Single(serde_json::from_value(value)?)
    })
}

/// Loads a profile file and its distribution.
pub fn load_profile(path: impl AsRef<Path>) -> Result<ViewerProfile> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    ProfileFile::load(path)?.into_profile(base)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryEntry {
    pub point: FixationPoint,
    /// Fixations since this location was attended (0 = the current one).
    pub age: usize,
}

/// The `memory_span` most recent distinct attended locations, newest first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemoryState {
    entries: VecDeque<MemoryEntry>,
    capacity: usize,
}

impl MemoryState {
    pub fn new(capacity: usize) -> Self {
        Self { entries: VecDeque::with_capacity(capacity + 1), capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Records a new fixation. Existing entries age by one; re-attending a
    /// remembered location resets it to age 0.
    pub fn push(&mut self, point: FixationPoint) {
        if self.capacity == 0 {
            return;
        }
        self.entries.retain(|e| !(e.point.x == point.x && e.point.y == point.y));
        for e in &mut self.entries {
            e.age += 1;
        }
        self.entries.push_front(MemoryEntry { point, age: 0 });
        self.entries.retain(|e| e.age < self.capacity);
        self.entries.truncate(self.capacity);
    }

    /// Residual inhibition `max(0, 1 − age/T)`.
    pub fn residual(&self, age: usize) -> f64 {
        if self.capacity == 0 {
            return 0.0;
        }
        (1.0 - age as f64 / self.capacity as f64).max(0.0)
    }
}

/// `Π [1 − ρ(age)·G(‖x − ℓ‖)]` over remembered locations ℓ, with `G` a
/// unit-peak Gaussian of std `inhibition_radius · ppd` pixels.
pub fn memory_weight(x: (f64, f64), memory: &MemoryState, profile: &ViewerProfile) -> f64 {
    let sigma = profile.inhibition_sigma_px();
    let inv = -0.5 / (sigma * sigma);
    memory
        .entries()
        .map(|e| {
            let r2 = (x.0 - e.point.x).powi(2) + (x.1 - e.point.y).powi(2);
            1.0 - memory.residual(e.age) * (r2 * inv).exp()
        })
        .product::<f64>()
        .clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scanpath {
    pub image_id: String,
    pub seed: u64,
    pub fixations: Vec<FixationPoint>,
}

//! Age-dependent saccadic model of visual attention.
//!
//! The crate is organized around four stages:
//!
//! * [`eyedata`]: fixation logs, saccade extraction, human saliency maps and
//!   center-bias crowns.
//! * [`statmodel`]: kernel density estimates of the joint distribution of
//!   saccade amplitudes and orientations, per 3×3 image cell, plus KL and a
//!   2-D Kolmogorov–Smirnov test.
//! * [`engine`]: scanpath generation from a bottom-up saliency map, an
//!   inhibition-of-return memory and the saccade prior.
//! * [`metrics`]: CC, SIM, EMD, AUC-Judd, AUC-Borji and NSS.
//!
//! [`synthetic`] builds reproducible fixtures (priors, fixation logs,
//! saliency maps) for tests, benchmarks and demos.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod eyedata;
pub mod grid;
pub mod metrics;
pub mod statmodel;
pub mod synthetic;

pub use engine::{
    batch_generate, generate_scanpath, memory_weight, scanpath_plausibility, transition_map, MemoryState, Prior,
    Scanpath, ViewerProfile,
};
pub use error::{Error, Result};
pub use eyedata::{
    center_bias_crowns, fixation_saliency_map, parse_fixation_log, saccades_from_sequence, CrownHistogram,
    FixationPoint, FixationSequence, Geometry, SaccadeSample,
};
pub use grid::{Normalization, SaliencyGrid};
pub use metrics::{auc_borji, auc_judd, cc, emd, evaluate_all, nss, sim, EvalOptions, MetricReport};
pub use statmodel::{
    estimate_joint, estimate_spatial_set, evaluate_density, kl_divergence, ks2d_test, BandwidthRule, BinGrid,
    JointSaccadeDistribution, KdeParams, KsResult, SpatialDistributionSet,
};

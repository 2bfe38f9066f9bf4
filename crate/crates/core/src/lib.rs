//! Report-guided correction of lesion pseudo labels for prostate MRI.
//!
//! The crate reads and writes NIFTI volumes, parses radiology report text
//! into PI-RADS sector descriptors, maps descriptors to voxel regions of a
//! prostate mask, extracts connected lesion components from teacher
//! probability maps, filters them against the report, and evaluates the
//! result with Dice, detection tallies and fROC curves. A deterministic
//! synthetic cohort generator exercises the whole chain end to end.

pub mod fsutil;
pub mod label_correction;
pub mod lesion_ops;
pub mod manifest;
pub mod metrics;
pub mod nifti;
pub mod pipeline;
pub mod report_parser;
pub mod sector_map;
pub mod synthgen;
pub mod volume;

pub use label_correction::{
    correct_by_count, correct_by_location, make_pseudo_label, no_correction, Assignment, CorrectionMethod,
    CorrectionRecord, CorrectionResult, LocationMatcher, MatchPredicate, PseudoLabel,
};
pub use lesion_ops::{ensemble_mean, threshold_components, ComponentOptions, Connectivity, LesionComponent, LesionError};
pub use manifest::{CaseEntry, CaseManifest, Settings};
pub use metrics::{dsc, froc, threshold_at_sensitivity, DetectionCriterion, FrocCurve, FrocPoint, MetricsError};
pub use report_parser::{parse_report, LocationDescriptor, ParsedReport, ReportLesion};
pub use sector_map::{build_sector_grid, region_for, SectorCell, SectorGrid};
pub use synthgen::{gen_case, gen_cohort, SynthParams, SyntheticCase};
pub use volume::{load_volume, save_volume, Volume3D, VolumeError, VolumeKind};

//! Cohort manifest: per-case file references plus global settings.
//!
//! Relative paths are resolved against the directory holding the manifest.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label_correction::{Assignment, MatchPredicate};
use crate::lesion_ops::{ComponentOptions, Connectivity};
use crate::sector_map::SectorOptions;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate case id {0:?}")]
    DuplicateId(String),
    #[error("case {id:?}: {message}")]
    Case { id: String, message: String },
    #[error("invalid setting {name}: {message}")]
    Setting { name: &'static str, message: String },
}

/// Which end of the Z axis holds the base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BaseAt {
    #[default]
    #[serde(rename = "+z")]
    PosZ,
    #[serde(rename = "-z")]
    NegZ,
}

impl FromStr for BaseAt {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+z" | "z" => Ok(BaseAt::PosZ),
            "-z" => Ok(BaseAt::NegZ),
            other => Err(format!("expected +z or -z, got {other:?}")),
        }
    }
}

impl fmt::Display for BaseAt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaseAt::PosZ => "+z",
            BaseAt::NegZ => "-z",
        })
    }
}

/// What to do with cases whose report has no significant lesion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NegativePolicy {
    /// Emit an empty pseudo label.
    #[default]
    Keep,
    /// Treat the case as excluded.
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub connectivity: Connectivity,
    #[serde(rename = "match")]
    pub match_predicate: MatchPredicate,
    pub assignment: Assignment,
    pub base_at: BaseAt,
    pub midline_fraction: f64,
    /// Binarization threshold for pseudo labels.
    pub threshold: f64,
    /// fROC thresholds; defaults to 0.05..0.95 in steps of 0.05.
    pub thresholds: Option<Vec<f64>>,
    pub min_component_mm3: f64,
    pub negative_cases: NegativePolicy,
    pub restrict_to_gland: bool,
    pub min_pirads: u8,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::TwentySix,
            match_predicate: MatchPredicate::Overlap,
            assignment: Assignment::Greedy,
            base_at: BaseAt::PosZ,
            midline_fraction: 0.25,
            threshold: 0.5,
            thresholds: None,
            min_component_mm3: 0.0,
            negative_cases: NegativePolicy::Keep,
            restrict_to_gland: false,
            min_pirads: crate::report_parser::DEFAULT_MIN_PIRADS,
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<(), ManifestError> {
        let bad = |name, message: &str| {
            Err(ManifestError::Setting {
                name,
                message: message.to_string(),
            })
        };
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return bad("threshold", "must lie in (0, 1]");
        }
        if let Some(ts) = &self.thresholds {
            if ts.is_empty() {
                return bad("thresholds", "must not be empty");
            }
            if ts.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
                return bad("thresholds", "every threshold must lie in (0, 1]");
            }
            if ts.windows(2).any(|w| w[0] >= w[1]) {
                return bad("thresholds", "must be strictly increasing");
            }
        }
        if !(self.midline_fraction > 0.0 && self.midline_fraction < 1.0) {
            return bad("midline_fraction", "must lie in (0, 1)");
        }
        if !(self.min_component_mm3 >= 0.0 && self.min_component_mm3.is_finite()) {
            return bad("min_component_mm3", "must be non-negative");
        }
        if !(1..=5).contains(&self.min_pirads) {
            return bad("min_pirads", "must lie in 1..=5");
        }
        Ok(())
    }

    pub fn sector_options(&self) -> SectorOptions {
        SectorOptions {
            base_at_pos_z: self.base_at == BaseAt::PosZ,
            midline_fraction: self.midline_fraction,
        }
    }

    pub fn component_options(&self) -> ComponentOptions {
        ComponentOptions {
            connectivity: self.connectivity,
            min_volume_mm3: self.min_component_mm3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseEntry {
    pub id: String,
    pub prostate: PathBuf,
    pub probability_maps: Vec<PathBuf>,
    pub report: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseManifest {
    pub cases: Vec<CaseEntry>,
    #[serde(default)]
    pub settings: Settings,
}

impl CaseManifest {
    /// Parses and validates a manifest. Relative paths are kept as written.
    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        let m: CaseManifest = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    /// Loads a manifest and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let mut m = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        m.resolve(base);
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut seen = HashSet::new();
        for c in &self.cases {
            if c.id.is_empty() || c.id.contains(['/', '\\']) || c.id == "." || c.id == ".." {
                return Err(ManifestError::Case {
                    id: c.id.clone(),
                    message: "id must be a non-empty file name".into(),
                });
            }
            if !seen.insert(c.id.as_str()) {
                return Err(ManifestError::DuplicateId(c.id.clone()));
            }
            if c.probability_maps.is_empty() {
                return Err(ManifestError::Case {
                    id: c.id.clone(),
                    message: "at least one probability map is required".into(),
                });
            }
        }
        self.settings.validate()
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for c in &mut self.cases {
            fix(&mut c.prostate);
            fix(&mut c.report);
            c.probability_maps.iter_mut().for_each(fix);
            if let Some(g) = c.gt.as_mut() {
                fix(g);
            }
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

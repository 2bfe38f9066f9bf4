//! Single-case correction pipeline: ensemble, threshold, parse, correct.

use thiserror::Error;

use crate::label_correction::{correct_by_count, make_pseudo_label, no_correction, CorrectionMethod, CorrectionResult, LocationMatcher, PseudoLabel};
use crate::lesion_ops::{ensemble_mean, threshold_components_with, LesionComponent, LesionError};
use crate::manifest::{NegativePolicy, Settings};
use crate::report_parser::{parse_report, significant_lesions, ParseError, ParsedReport, ReportLesion};
use crate::sector_map::{build_sector_grid_with, SectorError, SectorGrid};
use crate::volume::Volume3D;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("probability map has dims {map:?} but the prostate mask has {mask:?}")]
    GeometryMismatch { mask: [usize; 3], map: [usize; 3] },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Sector(#[from] SectorError),
    #[error(transparent)]
    Lesion(#[from] LesionError),
}

#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub grid: SectorGrid,
    pub report: ParsedReport,
    pub significant: Vec<ReportLesion>,
    /// Thresholded teacher components in canonical order.
    pub components: Vec<LesionComponent>,
    pub result: CorrectionResult,
    pub pseudo_label: PseudoLabel,
}

impl CaseOutcome {
    pub fn is_negative(&self) -> bool {
        self.significant.is_empty()
    }
}

/// Runs the full correction for one case. Several maps are averaged first.
pub fn correct_case(
    prostate: &Volume3D,
    maps: &[Volume3D],
    report_text: &str,
    method: CorrectionMethod,
    settings: &Settings,
) -> Result<CaseOutcome, PipelineError> {
    for m in maps {
        if m.dims() != prostate.dims() {
            return Err(PipelineError::GeometryMismatch {
                mask: prostate.dims(),
                map: m.dims(),
            });
        }
    }
    let teacher;
    let map = match maps {
        [single] => single,
        _ => {
            teacher = ensemble_mean(maps)?;
            &teacher
        }
    };
    let grid = build_sector_grid_with(prostate, &settings.sector_options())?;
    let report = parse_report(report_text)?;
    let significant = significant_lesions(&report, settings.min_pirads)?;
    let components = threshold_components_with(map, settings.threshold, &settings.component_options())?;

    let mut result = match method {
        CorrectionMethod::LocationBased => LocationMatcher::new(&grid)
            .predicate(settings.match_predicate)
            .assignment(settings.assignment)
            .restrict_to_gland(settings.restrict_to_gland.then_some(prostate))
            .correct(&components, &significant),
        CorrectionMethod::CountBased => correct_by_count(&components, significant.len()),
        CorrectionMethod::None => no_correction(&components),
    };
    if significant.is_empty() && method != CorrectionMethod::None && settings.negative_cases == NegativePolicy::Drop {
        result.excluded = true;
    }
    let pseudo_label = make_pseudo_label(&result, map.dims(), map.spacing())?;
    Ok(CaseOutcome {
        grid,
        report,
        significant,
        components,
        result,
        pseudo_label,
    })
}

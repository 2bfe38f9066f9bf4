//! Correction of teacher pseudo labels with report information.
//!
//! Location-based correction keeps only predicted components that can be
//! assigned one-to-one to a significant report lesion whose sector region
//! they touch, and excludes the case when some reported lesion finds no
//! component. Count-based correction keeps the `n` most confident
//! components, `n` being the number of significant lesions in the report.

use serde::{Deserialize, Serialize};

use crate::lesion_ops::{binarize, ComponentSummary, LesionComponent, LesionError};
use crate::report_parser::ReportLesion;
use crate::sector_map::{region_for, SectorGrid, VoxelRegion};
use crate::volume::Volume3D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CorrectionMethod {
    LocationBased,
    CountBased,
    None,
}

/// How a component is tested against a report lesion's region union.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MatchPredicate {
    /// At least one component voxel lies in the region union.
    #[default]
    Overlap,
    /// The rounded component centroid lies in the region union.
    Centroid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Assignment {
    /// Components in descending peak order each take the first assignable
    /// report lesion.
    #[default]
    Greedy,
    /// Maximum-cardinality one-to-one matching by enumeration. Instances
    /// larger than 6x6 fall back to greedy.
    Exhaustive,
}

pub const EXHAUSTIVE_LIMIT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPair {
    pub report_lesion: u32,
    /// Position of the component in the input list.
    pub component: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionResult {
    pub kept: Vec<LesionComponent>,
    pub removed: Vec<LesionComponent>,
    pub matches: Vec<MatchPair>,
    pub unmatched_report_lesions: Vec<u32>,
    pub excluded: bool,
    pub method: CorrectionMethod,
    /// Input position of every kept component, parallel to `kept`.
    pub kept_ordinals: Vec<usize>,
    /// Input position of every removed component, parallel to `removed`.
    pub removed_ordinals: Vec<usize>,
}

impl CorrectionResult {
    fn partition(components: &[LesionComponent], keep: &[bool]) -> (Vec<LesionComponent>, Vec<LesionComponent>, Vec<usize>, Vec<usize>) {
        let (mut kept, mut removed, mut ko, mut ro) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, c) in components.iter().enumerate() {
            if keep[i] {
                kept.push(c.clone());
                ko.push(i);
            } else {
                removed.push(c.clone());
                ro.push(i);
            }
        }
        (kept, removed, ko, ro)
    }

    /// Serializable audit record.
    pub fn record(&self) -> CorrectionRecord {
        let summarize = |cs: &[LesionComponent], ords: &[usize]| {
            cs.iter()
                .zip(ords)
                .map(|(c, &ordinal)| ComponentRecord {
                    ordinal,
                    summary: c.summary(),
                })
                .collect()
        };
        CorrectionRecord {
            method: self.method,
            excluded: self.excluded,
            matches: self.matches.clone(),
            unmatched_report_lesions: self.unmatched_report_lesions.clone(),
            kept: summarize(&self.kept, &self.kept_ordinals),
            removed: summarize(&self.removed, &self.removed_ordinals),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub ordinal: usize,
    #[serde(flatten)]
    pub summary: ComponentSummary,
}

/// JSON audit trail of a correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub method: CorrectionMethod,
    pub excluded: bool,
    pub matches: Vec<MatchPair>,
    pub unmatched_report_lesions: Vec<u32>,
    pub kept: Vec<ComponentRecord>,
    pub removed: Vec<ComponentRecord>,
}

/// Location matching configuration bound to a sector grid.
#[derive(Debug, Clone)]
pub struct LocationMatcher<'a> {
    grid: &'a SectorGrid,
    predicate: MatchPredicate,
    assignment: Assignment,
    gland: Option<&'a Volume3D>,
}

impl<'a> LocationMatcher<'a> {
    pub fn new(grid: &'a SectorGrid) -> Self {
        Self {
            grid,
            predicate: MatchPredicate::Overlap,
            assignment: Assignment::Greedy,
            gland: None,
        }
    }

    pub fn predicate(mut self, predicate: MatchPredicate) -> Self {
        self.predicate = predicate;
        self
    }

    pub fn assignment(mut self, assignment: Assignment) -> Self {
        self.assignment = assignment;
        self
    }

    /// Restricts sector regions to voxels inside the prostate mask.
    pub fn restrict_to_gland(mut self, gland: Option<&'a Volume3D>) -> Self {
        self.gland = gland;
        self
    }

    fn in_gland(&self, v: [usize; 3]) -> bool {
        match self.gland {
            None => true,
            Some(g) => {
                let d = g.dims();
                v[0] < d[0] && v[1] < d[1] && v[2] < d[2] && g.get(v[0], v[1], v[2]) != 0.0
            }
        }
    }

    fn regions(&self, lesion: &ReportLesion) -> Vec<VoxelRegion> {
        lesion
            .locations
            .iter()
            .map(|d| region_for(d, self.grid))
            .filter(|r| !r.is_empty())
            .collect()
    }

    fn in_regions(&self, regions: &[VoxelRegion], v: [usize; 3]) -> bool {
        regions.iter().any(|r| r.contains(v)) && self.in_gland(v)
    }

    /// Whether `component` satisfies the predicate against the union of the
    /// lesion's descriptor regions.
    pub fn matches(&self, component: &LesionComponent, lesion: &ReportLesion) -> bool {
        let regions = self.regions(lesion);
        self.matches_regions(component, &regions)
    }

    fn matches_regions(&self, component: &LesionComponent, regions: &[VoxelRegion]) -> bool {
        match self.predicate {
            MatchPredicate::Overlap => component.voxels().iter().any(|&v| self.in_regions(regions, v)),
            MatchPredicate::Centroid => {
                let c = component.centroid();
                let v = [0, 1, 2].map(|a| c[a].round().max(0.0) as usize);
                self.in_regions(regions, v)
            }
        }
    }

    pub fn correct(&self, components: &[LesionComponent], report_lesions: &[ReportLesion]) -> CorrectionResult {
        let regions: Vec<Vec<VoxelRegion>> = report_lesions.iter().map(|l| self.regions(l)).collect();
        // compatible[c][r]
        let compatible: Vec<Vec<bool>> = components
            .iter()
            .map(|c| regions.iter().map(|rs| self.matches_regions(c, rs)).collect())
            .collect();

        let small = components.len() <= EXHAUSTIVE_LIMIT && report_lesions.len() <= EXHAUSTIVE_LIMIT;
        let assignment = match self.assignment {
            Assignment::Exhaustive if small => exhaustive_assignment(&compatible, report_lesions.len()),
            _ => greedy_assignment(&compatible, report_lesions.len()),
        };

        let mut keep = vec![false; components.len()];
        let mut matched_report = vec![false; report_lesions.len()];
        let mut matches = Vec::new();
        for (c, r) in assignment.iter().enumerate() {
            if let Some(r) = *r {
                keep[c] = true;
                matched_report[r] = true;
                matches.push(MatchPair {
                    report_lesion: report_lesions[r].index,
                    component: c,
                });
            }
        }
        matches.sort_by_key(|m| (m.report_lesion, m.component));
        let unmatched_report_lesions: Vec<u32> = report_lesions
            .iter()
            .zip(&matched_report)
            .filter(|(_, &m)| !m)
            .map(|(l, _)| l.index)
            .collect();
        let (kept, removed, kept_ordinals, removed_ordinals) = CorrectionResult::partition(components, &keep);
        CorrectionResult {
            kept,
            removed,
            matches,
            excluded: !unmatched_report_lesions.is_empty(),
            unmatched_report_lesions,
            method: CorrectionMethod::LocationBased,
            kept_ordinals,
            removed_ordinals,
        }
    }
}

fn greedy_assignment(compatible: &[Vec<bool>], n_report: usize) -> Vec<Option<usize>> {
    let mut taken = vec![false; n_report];
    compatible
        .iter()
        .map(|row| {
            let r = (0..n_report).find(|&r| !taken[r] && row[r])?;
            taken[r] = true;
            Some(r)
        })
        .collect()
}

/// Maximum-cardinality assignment. Among maximal assignments the first in
/// enumeration order wins, where components are visited in input order and
/// report lesions in report order (so greedy-like choices are preferred).
fn exhaustive_assignment(compatible: &[Vec<bool>], n_report: usize) -> Vec<Option<usize>> {
    fn search(
        c: usize,
        compatible: &[Vec<bool>],
        taken: &mut Vec<bool>,
        current: &mut Vec<Option<usize>>,
        count: usize,
        best: &mut (usize, Vec<Option<usize>>),
    ) {
        if c == compatible.len() {
            if count > best.0 {
                *best = (count, current.clone());
            }
            return;
        }
        // Upper bound: even matching every remaining component cannot win.
        if count + (compatible.len() - c) <= best.0 {
            return;
        }
        for r in 0..taken.len() {
            if compatible[c][r] && !taken[r] {
                taken[r] = true;
                current[c] = Some(r);
                search(c + 1, compatible, taken, current, count + 1, best);
                current[c] = None;
                taken[r] = false;
            }
        }
        search(c + 1, compatible, taken, current, count, best);
    }
    let mut best = (0, vec![None; compatible.len()]);
    let mut current = vec![None; compatible.len()];
    search(0, compatible, &mut vec![false; n_report], &mut current, 0, &mut best);
    best.1
}

/// Location-based correction with default matching (any-voxel overlap,
/// greedy assignment).
///
/// `components` must already be in canonical order (descending peak) and
/// `report_lesions` filtered to significant lesions.
pub fn correct_by_location(
    components: &[LesionComponent],
    report_lesions: &[ReportLesion],
    grid: &SectorGrid,
) -> CorrectionResult {
    LocationMatcher::new(grid).correct(components, report_lesions)
}

/// Keeps the first `min(n, |components|)` components; excluded when fewer
/// components than reported lesions exist.
pub fn correct_by_count(components: &[LesionComponent], n_significant: usize) -> CorrectionResult {
    let keep: Vec<bool> = (0..components.len()).map(|i| i < n_significant).collect();
    let (kept, removed, kept_ordinals, removed_ordinals) = CorrectionResult::partition(components, &keep);
    CorrectionResult {
        kept,
        removed,
        matches: Vec::new(),
        unmatched_report_lesions: Vec::new(),
        excluded: components.len() < n_significant,
        method: CorrectionMethod::CountBased,
        kept_ordinals,
        removed_ordinals,
    }
}

/// Pass-through: every component is kept.
pub fn no_correction(components: &[LesionComponent]) -> CorrectionResult {
    let keep = vec![true; components.len()];
    let (kept, removed, kept_ordinals, removed_ordinals) = CorrectionResult::partition(components, &keep);
    CorrectionResult {
        kept,
        removed,
        matches: Vec::new(),
        unmatched_report_lesions: Vec::new(),
        excluded: false,
        method: CorrectionMethod::None,
        kept_ordinals,
        removed_ordinals,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PseudoLabel {
    Mask(Volume3D),
    Excluded,
}

pub fn make_pseudo_label(result: &CorrectionResult, dims: [usize; 3], spacing: [f64; 3]) -> Result<PseudoLabel, LesionError> {
    if result.excluded {
        return Ok(PseudoLabel::Excluded);
    }
    Ok(PseudoLabel::Mask(binarize(&result.kept, dims, spacing)?))
}

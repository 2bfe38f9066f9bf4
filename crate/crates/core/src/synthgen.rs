//! Deterministic synthetic cohorts: ellipsoidal glands, spherical lesions,
//! simulated teacher probability maps and matching report text.
//!
//! Every case draws from its own ChaCha stream `(seed, case_index)`, so a
//! case can be regenerated in isolation and cohorts can be built in any
//! order or in parallel.
//!
//! Teacher blobs are the analytic Gaussian blur of a ball, rescaled so the
//! blob center equals the drawn peak. The ball is widened just enough that the
//! blob crosses 0.5 at the lesion radius, and the blob is truncated 3 sigma
//! beyond the widest such ball.
//! Blob supports never touch each other (not even diagonally), so each blob
//! stays its own connected component at every threshold.

use std::collections::BTreeSet;
use std::f64::consts::{PI, SQRT_2};
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::write_atomic;
use crate::lesion_ops::LesionComponent;
use crate::manifest::CaseEntry;
use crate::report_parser::{ApPosition, Laterality, LocationDescriptor, SiLevel, Zone};
use crate::sector_map::{build_sector_grid_with, locate_voxels, region_for, SectorCell, SectorError, SectorOptions, VoxelRegion};
use crate::volume::{linear_index, save_volume, Volume3D, VolumeError, VolumeKind};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("case {case_index}: could not lay out {lesions} non-touching lesions ({attempts} attempts per lesion)")]
    PlacementFailed {
        case_index: usize,
        lesions: usize,
        attempts: usize,
    },
    #[error(transparent)]
    Sector(#[from] SectorError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("writing case files: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FpPlacement {
    /// Inside the gland and outside every reported sector region.
    #[default]
    OutOfSector,
    /// Anywhere inside the gland.
    InGland,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub prostate_semi_axes_mm: [f64; 3],
    /// Defaults to the volume center.
    pub prostate_center_mm: Option<[f64; 3]>,
    /// `lesion_count_weights[k]` is the relative weight of k lesions.
    pub lesion_count_weights: Vec<f64>,
    pub lesion_radius_mm: [f64; 2],
    pub pirads_range: [u8; 2],
    pub miss_prob: f64,
    pub fp_mean: f64,
    pub fp_placement: FpPlacement,
    pub blur_mm: f64,
    pub peak_range: [f64; 2],
    pub max_attempts: usize,
    pub sectors: SectorOptions,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            dims: [96, 96, 24],
            spacing: [0.5, 0.5, 3.0],
            prostate_semi_axes_mm: [20.0, 16.0, 18.0],
            prostate_center_mm: None,
            lesion_count_weights: vec![0.0, 0.5, 0.35, 0.15],
            lesion_radius_mm: [3.0, 5.0],
            pirads_range: [3, 5],
            miss_prob: 0.1,
            fp_mean: 1.0,
            fp_placement: FpPlacement::OutOfSector,
            blur_mm: 0.75,
            peak_range: [0.6, 0.95],
            max_attempts: 1000,
            sectors: SectorOptions::default(),
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_string()));
        if self.dims.iter().any(|&d| d == 0) {
            return bad("dims must be positive");
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("spacing must be positive");
        }
        if self.prostate_semi_axes_mm.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return bad("prostate semi-axes must be positive");
        }
        if self.lesion_count_weights.is_empty()
            || self.lesion_count_weights.iter().any(|&w| !(w >= 0.0 && w.is_finite()))
            || self.lesion_count_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("lesion_count_weights must be non-negative with a positive sum");
        }
        let [rlo, rhi] = self.lesion_radius_mm;
        if !(rlo > 0.0 && rlo <= rhi && rhi.is_finite()) {
            return bad("lesion_radius_mm must satisfy 0 < min <= max");
        }
        let [plo, phi] = self.pirads_range;
        if !(1 <= plo && plo <= phi && phi <= 5) {
            return bad("pirads_range must lie within 1..=5");
        }
        if !(0.0..=1.0).contains(&self.miss_prob) {
            return bad("miss_prob must lie in [0, 1]");
        }
        if !(self.fp_mean >= 0.0 && self.fp_mean.is_finite()) {
            return bad("fp_mean must be non-negative");
        }
        if !(self.blur_mm >= 0.0 && self.blur_mm.is_finite()) {
            return bad("blur_mm must be non-negative");
        }
        let [klo, khi] = self.peak_range;
        if !(klo > 0.0 && klo <= khi && khi <= 1.0) {
            return bad("peak_range must satisfy 0 < min <= max <= 1");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        let max_lesions = self.lesion_count_weights.len() - 1;
        if max_lesions > 0 && self.prostate_semi_axes_mm.iter().any(|&a| a <= rhi) {
            return bad("largest lesion radius does not fit inside the gland");
        }
        Ok(())
    }

    fn center_mm(&self) -> [f64; 3] {
        self.prostate_center_mm
            .unwrap_or_else(|| [0, 1, 2].map(|a| (self.dims[a] - 1) as f64 * self.spacing[a] / 2.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedLesion {
    pub report_index: u32,
    pub center_mm: [f64; 3],
    pub radius_mm: f64,
    pub pirads: u8,
    pub missed: bool,
    /// Teacher peak; `None` for missed lesions.
    pub peak: Option<f64>,
    pub voxel_count: usize,
    pub cells: Vec<SectorCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBlob {
    pub center_mm: [f64; 3],
    pub radius_mm: f64,
    pub peak: f64,
}

/// Ground-truth record of how a case was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub case_index: usize,
    pub seed: u64,
    pub lesions: Vec<PlantedLesion>,
    pub false_positives: Vec<PlantedBlob>,
    pub fp_requested: usize,
    /// False positives that could not be placed and were dropped.
    pub fp_placement_failures: usize,
    pub fp_placement: FpPlacement,
}

#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub id: String,
    pub prostate: Volume3D,
    pub gt_mask: Volume3D,
    /// One component per planted lesion, in report order.
    pub gt_components: Vec<LesionComponent>,
    pub teacher: Volume3D,
    pub report: String,
    pub provenance: Provenance,
}

impl SyntheticCase {
    /// Writes `<root>/<id>/{prostate,gt,teacher}.nii.gz`, `report.txt` and
    /// `provenance.json`, and returns the manifest entry with paths relative
    /// to `root`.
    pub fn write_to(&self, root: &Path) -> Result<CaseEntry, SynthError> {
        let dir = root.join(&self.id);
        std::fs::create_dir_all(&dir)?;
        save_volume(&self.prostate, dir.join("prostate.nii.gz"))?;
        save_volume(&self.gt_mask, dir.join("gt.nii.gz"))?;
        save_volume(&self.teacher, dir.join("teacher.nii.gz"))?;
        write_atomic(&dir.join("report.txt"), self.report.as_bytes())?;
        let mut prov = serde_json::to_string_pretty(&self.provenance).expect("provenance serializes");
        prov.push('\n');
        write_atomic(&dir.join("provenance.json"), prov.as_bytes())?;
        let rel = PathBuf::from(&self.id);
        Ok(CaseEntry {
            id: self.id.clone(),
            prostate: rel.join("prostate.nii.gz"),
            probability_maps: vec![rel.join("teacher.nii.gz")],
            report: rel.join("report.txt"),
            gt: Some(rel.join("gt.nii.gz")),
        })
    }
}

pub fn case_id(case_index: usize) -> String {
    format!("case_{case_index:04}")
}

/// Blur of a unit ball of radius `r` by an isotropic Gaussian of width
/// `sigma`, evaluated at distance `d` from the ball center.
pub fn blurred_ball(d: f64, r: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return if d <= r { 1.0 } else { 0.0 };
    }
    let s2 = sigma * SQRT_2;
    let norm = sigma / (2.0 * PI).sqrt();
    let v = if d < 1e-9 {
        libm::erf(r / s2) - 2.0 * r / sigma / (2.0 * PI).sqrt() * (-(r * r) / (2.0 * sigma * sigma)).exp()
    } else {
        0.5 * (libm::erf((r - d) / s2) + libm::erf((r + d) / s2))
            - norm / d * ((-(r - d).powi(2) / (2.0 * sigma * sigma)).exp() - (-(r + d).powi(2) / (2.0 * sigma * sigma)).exp())
    };
    v.clamp(0.0, 1.0)
}

struct Geometry<'a> {
    params: &'a SynthParams,
    dims: [usize; 3],
    spacing: [f64; 3],
}

impl Geometry<'_> {
    fn position(&self, v: [usize; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| v[a] as f64 * self.spacing[a])
    }

    fn distance(&self, v: [usize; 3], c: [f64; 3]) -> f64 {
        let p = self.position(v);
        ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt()
    }

    /// Voxels whose centers lie within `radius` of `center`.
    fn ball(&self, center: [f64; 3], radius: f64) -> Vec<[usize; 3]> {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let l = ((center[a] - radius) / self.spacing[a]).floor().max(0.0) as usize;
            let h = ((center[a] + radius) / self.spacing[a]).ceil();
            if h < 0.0 {
                return Vec::new();
            }
            lo[a] = l;
            hi[a] = (h as usize).min(self.dims[a] - 1);
        }
        let mut out = Vec::new();
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    if self.distance([x, y, z], center) <= radius {
                        out.push([x, y, z]);
                    }
                }
            }
        }
        out
    }

    /// Largest support any blob for a lesion of `radius` can need: the
    /// smallest peak widens the blurred ball the most.
    fn support_radius(&self, radius: f64) -> f64 {
        let sigma = self.params.blur_mm;
        blob_radius(radius, sigma, self.params.peak_range[0]) + 3.0 * sigma
    }
}

/// Occupancy of blob supports dilated by one voxel in every direction.
struct Occupancy {
    dims: [usize; 3],
    taken: Vec<bool>,
}

impl Occupancy {
    fn free(&self, voxels: &[[usize; 3]]) -> bool {
        voxels.iter().all(|&v| !self.taken[linear_index(self.dims, v)])
    }

    fn claim(&mut self, voxels: &[[usize; 3]]) {
        for &v in voxels {
            for dz in -1isize..=1 {
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let n = [v[0] as isize + dx, v[1] as isize + dy, v[2] as isize + dz];
                        if (0..3).all(|a| n[a] >= 0 && (n[a] as usize) < self.dims[a]) {
                            let n = n.map(|c| c as usize);
                            self.taken[linear_index(self.dims, n)] = true;
                        }
                    }
                }
            }
        }
    }
}

fn sample_in_ellipsoid(rng: &mut ChaCha8Rng, center: [f64; 3], semi: [f64; 3]) -> [f64; 3] {
    loop {
        let u: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if u.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return [0, 1, 2].map(|a| center[a] + u[a] * semi[a]);
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Descriptors whose union covers every touched cell: the product of the
/// touched values on each axis. This is exactly what the parser recovers from
/// the rendered phrase.
pub fn descriptors_for_cells(cells: &BTreeSet<SectorCell>) -> Vec<LocationDescriptor> {
    let lat: BTreeSet<Laterality> = cells.iter().map(|c| c.laterality).collect();
    let ap: BTreeSet<ApPosition> = cells.iter().map(|c| c.ap).collect();
    let si: BTreeSet<SiLevel> = cells.iter().map(|c| c.si).collect();
    let mut out = Vec::new();
    for &l in &lat {
        for &a in &ap {
            for &s in &si {
                out.push(LocationDescriptor::new(l, a, s));
            }
        }
    }
    out
}

fn location_phrase(cells: &BTreeSet<SectorCell>, zone: Zone) -> String {
    let lat: BTreeSet<Laterality> = cells.iter().map(|c| c.laterality).collect();
    let ap: BTreeSet<ApPosition> = cells.iter().map(|c| c.ap).collect();
    let si: BTreeSet<SiLevel> = cells.iter().map(|c| c.si).collect();
    let lat = if lat.len() == 2 {
        "bilateral".to_string()
    } else {
        lat.iter().next().unwrap().to_string()
    };
    let ap = ap.iter().map(ToString::to_string).collect::<Vec<_>>().join(" and ");
    let si = si.iter().map(ToString::to_string).collect::<Vec<_>>().join(" to ");
    format!("{lat} {ap} {si} {zone}")
}

/// Full layouts tried before a case is declared infeasible.
const LAYOUT_RESTARTS: usize = 25;

struct Placed {
    center: [f64; 3],
    radius: f64,
    body: Vec<[usize; 3]>,
    support: Vec<[usize; 3]>,
}

fn inside(gland: &[bool], dims: [usize; 3], voxels: &[[usize; 3]]) -> bool {
    voxels.iter().all(|&v| gland[linear_index(dims, v)])
}

/// Places `n` non-touching lesions inside the gland. A lesion that finds no
/// spot restarts the whole layout, so early unlucky placements cannot block
/// later lesions.
fn place_lesions(rng: &mut ChaCha8Rng, geo: &Geometry, gland: &[bool], center: [f64; 3], n: usize) -> Option<Vec<Placed>> {
    let params = geo.params;
    'layout: for _ in 0..LAYOUT_RESTARTS {
        let mut occupancy = Occupancy {
            dims: geo.dims,
            taken: vec![false; gland.len()],
        };
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let radius = uniform(rng, params.lesion_radius_mm);
            let inner = params.prostate_semi_axes_mm.map(|a| a - radius);
            let mut placed = None;
            for _ in 0..params.max_attempts {
                let c = sample_in_ellipsoid(rng, center, inner);
                let body = geo.ball(c, radius);
                if body.is_empty() || !inside(gland, geo.dims, &body) {
                    continue;
                }
                let support = geo.ball(c, geo.support_radius(radius));
                if occupancy.free(&support) {
                    placed = Some(Placed {
                        center: c,
                        radius,
                        body,
                        support,
                    });
                    break;
                }
            }
            let Some(p) = placed else { continue 'layout };
            occupancy.claim(&p.support);
            out.push(p);
        }
        return Some(out);
    }
    None
}

/// Generates case `case_index` of the cohort described by `params`.
pub fn gen_case(params: &SynthParams, case_index: usize) -> Result<SyntheticCase, SynthError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(case_index as u64);

    let geo = Geometry {
        params,
        dims: params.dims,
        spacing: params.spacing,
    };
    let dims = params.dims;
    let n_vox: usize = dims.iter().product();
    let center = params.center_mm();
    let semi = params.prostate_semi_axes_mm;

    let mut gland = vec![false; n_vox];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = geo.position([x, y, z]);
                let r2: f64 = (0..3).map(|a| ((p[a] - center[a]) / semi[a]).powi(2)).sum();
                gland[linear_index(dims, [x, y, z])] = r2 <= 1.0;
            }
        }
    }
    let prostate = Volume3D::from_mask(dims, params.spacing, &gland)?;
    let grid = build_sector_grid_with(&prostate, &params.sectors)?;
    let in_gland = |vs: &[[usize; 3]]| inside(&gland, dims, vs);

    let count_dist = WeightedIndex::new(&params.lesion_count_weights)
        .map_err(|e| SynthError::InvalidParams(format!("lesion_count_weights: {e}")))?;
    let n_lesions = count_dist.sample(&mut rng);

    let mut occupancy = Occupancy {
        dims,
        taken: vec![false; n_vox],
    };
    let mut gt_mask = vec![false; n_vox];
    let mut teacher = vec![0.0f64; n_vox];
    let mut lesions = Vec::with_capacity(n_lesions);
    let mut gt_components = Vec::with_capacity(n_lesions);
    let mut phrases = Vec::with_capacity(n_lesions);
    let mut reported_regions: Vec<VoxelRegion> = Vec::new();

    let layout = place_lesions(&mut rng, &geo, &gland, center, n_lesions).ok_or(SynthError::PlacementFailed {
        case_index,
        lesions: n_lesions,
        attempts: params.max_attempts,
    })?;
    for (k, Placed { center: c, radius, body, support }) in layout.into_iter().enumerate() {
        occupancy.claim(&support);
        for &v in &body {
            gt_mask[linear_index(dims, v)] = true;
        }
        let pirads = rng.gen_range(params.pirads_range[0]..=params.pirads_range[1]);
        let zone = if rng.gen_bool(0.7) { Zone::Pz } else { Zone::Tz };
        let missed = rng.gen_bool(params.miss_prob);
        let peak = uniform(&mut rng, params.peak_range);
        let cells = locate_voxels(&body, &grid);
        for d in descriptors_for_cells(&cells) {
            reported_regions.push(region_for(&d, &grid));
        }
        phrases.push((location_phrase(&cells, zone), 2.0 * radius, pirads));
        if !missed {
            paint_blob(&geo, &mut teacher, &support, c, radius, peak);
        }
        gt_components.push(LesionComponent::new(body.clone(), 1.0, params.spacing).expect("non-empty"));
        lesions.push(PlantedLesion {
            report_index: k as u32 + 1,
            center_mm: c,
            radius_mm: radius,
            pirads,
            missed,
            peak: (!missed).then_some(peak),
            voxel_count: body.len(),
            cells: cells.into_iter().collect(),
        });
    }

    let fp_requested = if params.fp_mean > 0.0 {
        Poisson::new(params.fp_mean)
            .map_err(|e| SynthError::InvalidParams(format!("fp_mean: {e}")))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    let mut false_positives = Vec::new();
    let mut fp_placement_failures = 0;
    for _ in 0..fp_requested {
        let radius = uniform(&mut rng, params.lesion_radius_mm);
        let peak = uniform(&mut rng, params.peak_range);
        let inner = semi.map(|a| (a - radius).max(0.0));
        let mut placed = None;
        if inner.iter().all(|&a| a > 0.0) {
            for _ in 0..params.max_attempts {
                let c = sample_in_ellipsoid(&mut rng, center, inner);
                let body = geo.ball(c, radius);
                if body.is_empty() || !in_gland(&body) {
                    continue;
                }
                let support = geo.ball(c, geo.support_radius(radius));
                if !occupancy.free(&support) {
                    continue;
                }
                if params.fp_placement == FpPlacement::OutOfSector
                    && support.iter().any(|&v| reported_regions.iter().any(|r| r.contains(v)))
                {
                    continue;
                }
                placed = Some((c, support));
                break;
            }
        }
        match placed {
            Some((c, support)) => {
                occupancy.claim(&support);
                paint_blob(&geo, &mut teacher, &support, c, radius, peak);
                false_positives.push(PlantedBlob {
                    center_mm: c,
                    radius_mm: radius,
                    peak,
                });
            }
            None => fp_placement_failures += 1,
        }
    }

    let report = render_report(&phrases, &prostate, &lesions, &mut rng);
    let provenance = Provenance {
        case_index,
        seed: params.seed,
        lesions,
        false_positives,
        fp_requested,
        fp_placement_failures,
        fp_placement: params.fp_placement,
    };
    Ok(SyntheticCase {
        id: case_id(case_index),
        gt_mask: Volume3D::from_mask(dims, params.spacing, &gt_mask)?,
        prostate,
        gt_components,
        teacher: Volume3D::new(dims, params.spacing, teacher, VolumeKind::ProbabilityMap)?,
        report,
        provenance,
    })
}

/// Radius of the ball whose blur, scaled to `peak` at the center, crosses 0.5
/// at distance `radius`. The 0.5 superlevel set then matches the lesion body.
/// Peaks at or below 0.5 never cross, so the search stops at `radius + 4 sigma`.
pub fn blob_radius(radius: f64, sigma: f64, peak: f64) -> f64 {
    let crossing = |r: f64| peak * blurred_ball(radius, r, sigma) / blurred_ball(0.0, r, sigma);
    if sigma == 0.0 || crossing(radius) >= 0.5 {
        return radius;
    }
    let (mut lo, mut hi) = (radius, radius + 4.0 * sigma);
    if crossing(hi) < 0.5 {
        return hi;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if crossing(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn paint_blob(geo: &Geometry, teacher: &mut [f64], support: &[[usize; 3]], c: [f64; 3], radius: f64, peak: f64) {
    let sigma = geo.params.blur_mm;
    let ball = blob_radius(radius, sigma, peak);
    let at_center = blurred_ball(0.0, ball, sigma);
    for &v in support {
        let value = peak * blurred_ball(geo.distance(v, c), ball, sigma) / at_center;
        let slot = &mut teacher[linear_index(geo.dims, v)];
        *slot = slot.max(value.clamp(0.0, 1.0));
    }
}

const FILLER: [&str; 4] = [
    "Technique: multiparametric MRI of the prostate without endorectal coil.",
    "Seminal vesicles are unremarkable.",
    "No pelvic lymphadenopathy. No suspicious osseous lesions.",
    "Neurovascular bundles are symmetric.",
];

fn render_report(
    phrases: &[(String, f64, u8)],
    prostate: &Volume3D,
    lesions: &[PlantedLesion],
    rng: &mut ChaCha8Rng,
) -> String {
    let volume_cc = prostate.count_nonzero() as f64 * prostate.voxel_volume_mm3() / 1000.0;
    let mut out = String::new();
    out.push_str("MRI PROSTATE WITHOUT CONTRAST\n\n");
    out.push_str(FILLER[0]);
    out.push_str("\n\nFINDINGS:\n");
    out.push_str(&format!("Prostate volume: {volume_cc:.0} cc.\n"));
    if phrases.is_empty() {
        out.push_str("No focal abnormality suspicious for clinically significant cancer.\n");
    }
    for (i, (phrase, diameter, pirads)) in phrases.iter().enumerate() {
        out.push_str(&format!("Lesion {}: {:.0} mm, {}, PI-RADS {}.\n", i + 1, diameter, phrase, pirads));
    }
    let filler = rng.gen_range(1..FILLER.len());
    out.push_str(FILLER[filler]);
    out.push_str("\n\nIMPRESSION:\n");
    match lesions.iter().map(|l| l.pirads).max() {
        Some(max) => out.push_str(&format!("Overall PI-RADS assessment category {max}.\n")),
        None => out.push_str("Overall PI-RADS assessment category 1.\n"),
    }
    out
}

/// Cases `0..n` of the cohort.
pub fn gen_cohort(params: &SynthParams, n: usize) -> Result<Vec<SyntheticCase>, SynthError> {
    if n == 0 {
        return Err(SynthError::InvalidParams("cohort size must be at least 1".into()));
    }
    (0..n).map(|i| gen_case(params, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blurred_ball_shape() {
        let (r, s) = (4.0, 0.75);
        let at0 = blurred_ball(0.0, r, s);
        assert!(at0 > 0.99 && at0 <= 1.0);
        // continuous at the origin
        assert!((blurred_ball(1e-6, r, s) - at0).abs() < 1e-6);
        // slightly below half height at the edge: the ball is convex
        let edge = blurred_ball(r, r, s);
        assert!(edge > 0.35 && edge < 0.5, "{edge}");
        let mut prev = at0;
        for i in 1..100 {
            let v = blurred_ball(i as f64 * 0.1, r, s);
            assert!(v <= prev + 1e-12);
            prev = v;
        }
        assert!(blurred_ball(r + 3.0 * s, r, s) < 0.01);
        assert_eq!(blurred_ball(4.0, 4.0, 0.0), 1.0);
        assert_eq!(blurred_ball(4.1, 4.0, 0.0), 0.0);
    }

    #[test]
    fn blob_crosses_one_half_at_the_lesion_radius() {
        for &(r, sigma, peak) in &[(3.0, 0.75, 0.6), (5.0, 0.75, 0.95), (3.5, 1.5, 0.7)] {
            let b = blob_radius(r, sigma, peak);
            assert!(b >= r);
            let at_r = peak * blurred_ball(r, b, sigma) / blurred_ball(0.0, b, sigma);
            assert!((at_r - 0.5).abs() < 1e-9, "{r} {sigma} {peak}: {at_r}");
        }
        assert_eq!(blob_radius(3.0, 0.0, 0.7), 3.0);
        assert_eq!(blob_radius(3.0, 0.75, 0.4), 6.0);
    }

    #[test]
    fn blurred_ball_matches_numeric_convolution() {
        // Radial quadrature of the ball indicator against a 3D Gaussian
        // centered at distance d on the z axis.
        let (r, s) = (2.0, 1.0);
        for d in [0.0, 1.0, 2.0, 3.5] {
            let n = 400;
            let mut acc = 0.0;
            for i in 0..n {
                let rho = (i as f64 + 0.5) * r / n as f64;
                for j in 0..n {
                    let cos_t = -1.0 + (j as f64 + 0.5) * 2.0 / n as f64;
                    let dist2 = rho * rho + d * d - 2.0 * rho * d * cos_t;
                    let g = (-dist2 / (2.0 * s * s)).exp() / (2.0 * PI * s * s).powf(1.5);
                    acc += g * 2.0 * PI * rho * rho * (r / n as f64) * (2.0 / n as f64);
                }
            }
            assert!((acc - blurred_ball(d, r, s)).abs() < 1e-3, "d={d}: {acc} vs {}", blurred_ball(d, r, s));
        }
    }

    #[test]
    fn params_validation() {
        assert!(SynthParams::default().validate().is_ok());
        let mut p = SynthParams::default();
        p.miss_prob = 1.5;
        assert!(p.validate().is_err());
        let mut p = SynthParams::default();
        p.lesion_radius_mm = [30.0, 30.0];
        assert!(matches!(p.validate(), Err(SynthError::InvalidParams(_))));
        let mut p = SynthParams::default();
        p.peak_range = [0.0, 0.5];
        assert!(p.validate().is_err());
    }

    #[test]
    fn forced_zero_lesions() {
        let p = SynthParams {
            lesion_count_weights: vec![1.0],
            fp_mean: 0.0,
            ..Default::default()
        };
        let c = gen_case(&p, 3).unwrap();
        assert_eq!(c.gt_mask.count_nonzero(), 0);
        assert!(c.gt_components.is_empty());
        assert!(!c.report.to_lowercase().contains("lesion 1"));
        assert!(crate::report_parser::parse_report(&c.report).unwrap().lesions.is_empty());
    }

    #[test]
    fn deterministic_per_seed_and_index() {
        let p = SynthParams::default();
        let a = gen_case(&p, 5).unwrap();
        let b = gen_case(&p, 5).unwrap();
        assert_eq!(a.teacher, b.teacher);
        assert_eq!(a.report, b.report);
        assert_eq!(a.provenance, b.provenance);
        let other = gen_case(&p, 6).unwrap();
        assert_ne!(a.provenance, other.provenance);
    }
}

//! Probability maps to discrete lesion candidates.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::{coords_of, linear_index, Volume3D, VolumeError, VolumeKind};

#[derive(Debug, Error)]
pub enum LesionError {
    #[error("threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("ensemble needs at least one map")]
    EmptyEnsemble,
    #[error("map {index} has dims {dims:?} / spacing {spacing:?}, expected {expected_dims:?} / {expected_spacing:?}")]
    ShapeMismatch {
        index: usize,
        dims: [usize; 3],
        spacing: [f64; 3],
        expected_dims: [usize; 3],
        expected_spacing: [f64; 3],
    },
    #[error("expected a probability map or binary mask, got {0:?}")]
    WrongKind(VolumeKind),
    #[error("voxel set is empty")]
    EmptyVoxelSet,
    #[error("voxel {voxel:?} lies outside dims {dims:?}")]
    VoxelOutOfRange { voxel: [usize; 3], dims: [usize; 3] },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Connectivity {
    /// Face neighbors only.
    #[serde(rename = "6")]
    Six,
    /// Face, edge and corner neighbors.
    #[default]
    #[serde(rename = "26")]
    TwentySix,
}

impl Connectivity {
    fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentOptions {
    pub connectivity: Connectivity,
    /// Components smaller than this (in mm³) are dropped. Zero keeps all.
    pub min_volume_mm3: f64,
}

impl Default for ComponentOptions {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::TwentySix,
            min_volume_mm3: 0.0,
        }
    }
}

/// One connected component of a thresholded map.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionComponent {
    voxels: Vec<[usize; 3]>,
    peak_prob: f64,
    centroid: [f64; 3],
    volume_mm3: f64,
}

impl LesionComponent {
    /// Voxels are sorted and deduplicated; `voxels` must be non-empty.
    pub fn new(mut voxels: Vec<[usize; 3]>, peak_prob: f64, spacing: [f64; 3]) -> Result<Self, LesionError> {
        if voxels.is_empty() {
            return Err(LesionError::EmptyVoxelSet);
        }
        voxels.sort_unstable();
        voxels.dedup();
        let n = voxels.len() as f64;
        let mut centroid = [0.0; 3];
        for v in &voxels {
            for a in 0..3 {
                centroid[a] += v[a] as f64;
            }
        }
        for c in &mut centroid {
            *c /= n;
        }
        let volume_mm3 = n * spacing.iter().product::<f64>();
        Ok(Self {
            voxels,
            peak_prob,
            centroid,
            volume_mm3,
        })
    }

    /// Sorted lexicographically by `(x, y, z)`.
    pub fn voxels(&self) -> &[[usize; 3]] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn peak_prob(&self) -> f64 {
        self.peak_prob
    }

    pub fn centroid(&self) -> [f64; 3] {
        self.centroid
    }

    pub fn volume_mm3(&self) -> f64 {
        self.volume_mm3
    }

    pub fn bbox(&self) -> ([usize; 3], [usize; 3]) {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0; 3];
        for v in &self.voxels {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        (lo, hi)
    }

    pub fn contains(&self, v: [usize; 3]) -> bool {
        self.voxels.binary_search(&v).is_ok()
    }

    pub fn intersection_len(&self, other: &LesionComponent) -> usize {
        sorted_intersection_len(&self.voxels, &other.voxels)
    }

    pub fn iou(&self, other: &LesionComponent) -> f64 {
        let inter = self.intersection_len(other);
        inter as f64 / (self.len() + other.len() - inter) as f64
    }

    pub fn summary(&self) -> ComponentSummary {
        let (bbox_min, bbox_max) = self.bbox();
        ComponentSummary {
            voxel_count: self.len(),
            peak_prob: self.peak_prob,
            centroid: self.centroid,
            bbox_min,
            bbox_max,
            volume_mm3: self.volume_mm3,
        }
    }
}

/// JSON-friendly view of a component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub voxel_count: usize,
    pub peak_prob: f64,
    pub centroid: [f64; 3],
    pub bbox_min: [usize; 3],
    pub bbox_max: [usize; 3],
    pub volume_mm3: f64,
}

fn sorted_intersection_len(a: &[[usize; 3]], b: &[[usize; 3]]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Voxelwise mean of probability maps with identical geometry.
///
/// Values at each voxel are summed in sorted order, so the result does not
/// depend on argument order.
pub fn ensemble_mean(maps: &[Volume3D]) -> Result<Volume3D, LesionError> {
    let first = maps.first().ok_or(LesionError::EmptyEnsemble)?;
    for (index, m) in maps.iter().enumerate() {
        if m.kind() != VolumeKind::ProbabilityMap {
            return Err(LesionError::WrongKind(m.kind()));
        }
        if !m.same_geometry(first) {
            return Err(LesionError::ShapeMismatch {
                index,
                dims: m.dims(),
                spacing: m.spacing(),
                expected_dims: first.dims(),
                expected_spacing: first.spacing(),
            });
        }
    }
    if maps.len() == 1 {
        return Ok(first.clone());
    }
    let n = maps.len() as f64;
    let mut scratch = vec![0.0; maps.len()];
    let data = (0..first.len())
        .map(|i| {
            for (s, m) in scratch.iter_mut().zip(maps) {
                *s = m.data()[i];
            }
            scratch.sort_unstable_by(f64::total_cmp);
            (scratch.iter().sum::<f64>() / n).clamp(0.0, 1.0)
        })
        .collect();
    Ok(Volume3D::new(first.dims(), first.spacing(), data, VolumeKind::ProbabilityMap)?)
}

/// Connected components of a boolean grid, as lists of linear indices.
/// Components are discovered in increasing order of their smallest linear
/// index.
pub fn label_foreground(foreground: &[bool], dims: [usize; 3], connectivity: Connectivity) -> Vec<Vec<usize>> {
    let offsets = connectivity.offsets();
    let mut visited = vec![false; foreground.len()];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..foreground.len() {
        if !foreground[seed] || visited[seed] {
            continue;
        }
        visited[seed] = true;
        stack.push(seed);
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            let c = coords_of(dims, i);
            for off in &offsets {
                let mut n = [0usize; 3];
                let mut inside = true;
                for a in 0..3 {
                    let v = c[a] as isize + off[a];
                    if v < 0 || v >= dims[a] as isize {
                        inside = false;
                        break;
                    }
                    n[a] = v as usize;
                }
                if !inside {
                    continue;
                }
                let j = linear_index(dims, n);
                if foreground[j] && !visited[j] {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
        components.push(members);
    }
    components
}

fn check_thresholdable(map: &Volume3D) -> Result<(), LesionError> {
    match map.kind() {
        VolumeKind::ProbabilityMap | VolumeKind::BinaryMask => Ok(()),
        other => Err(LesionError::WrongKind(other)),
    }
}

pub fn threshold_components(map: &Volume3D, threshold: f64) -> Result<Vec<LesionComponent>, LesionError> {
    threshold_components_with(map, threshold, &ComponentOptions::default())
}

/// Components of `{v : map[v] >= threshold}`, sorted by peak probability
/// (descending), then voxel count (descending), then smallest voxel.
pub fn threshold_components_with(
    map: &Volume3D,
    threshold: f64,
    opts: &ComponentOptions,
) -> Result<Vec<LesionComponent>, LesionError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(LesionError::InvalidThreshold(threshold));
    }
    check_thresholdable(map)?;
    let foreground: Vec<bool> = map.data().iter().map(|&v| v >= threshold).collect();
    components_from_foreground(map, &foreground, opts)
}

/// Components of the nonzero voxels of a mask (or any map); the peak is the
/// maximum voxel value.
pub fn mask_components(mask: &Volume3D, opts: &ComponentOptions) -> Result<Vec<LesionComponent>, LesionError> {
    components_from_foreground(mask, &mask.nonzero(), opts)
}

fn components_from_foreground(
    map: &Volume3D,
    foreground: &[bool],
    opts: &ComponentOptions,
) -> Result<Vec<LesionComponent>, LesionError> {
    let dims = map.dims();
    let data = map.data();
    let mut out = Vec::new();
    for members in label_foreground(foreground, dims, opts.connectivity) {
        let peak = members.iter().map(|&i| data[i]).fold(f64::NEG_INFINITY, f64::max);
        let voxels = members.iter().map(|&i| coords_of(dims, i)).collect();
        let comp = LesionComponent::new(voxels, peak, map.spacing())?;
        if comp.volume_mm3 >= opts.min_volume_mm3 {
            out.push(comp);
        }
    }
    sort_components(&mut out);
    Ok(out)
}

/// Canonical component ordering used everywhere downstream.
pub fn sort_components(components: &mut [LesionComponent]) {
    components.sort_by(|a, b| {
        b.peak_prob
            .total_cmp(&a.peak_prob)
            .then_with(|| b.len().cmp(&a.len()))
            .then_with(|| a.voxels[0].cmp(&b.voxels[0]))
    });
}

/// |a ∩ b| / |a ∪ b| for two voxel sets (duplicates are ignored).
pub fn component_iou(a: &[[usize; 3]], b: &[[usize; 3]]) -> Result<f64, LesionError> {
    if a.is_empty() || b.is_empty() {
        return Err(LesionError::EmptyVoxelSet);
    }
    let prep = |s: &[[usize; 3]]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v.dedup();
        v
    };
    let (a, b) = (prep(a), prep(b));
    let inter = sorted_intersection_len(&a, &b);
    Ok(inter as f64 / (a.len() + b.len() - inter) as f64)
}

/// Union of component voxels as a binary mask.
pub fn binarize(components: &[LesionComponent], dims: [usize; 3], spacing: [f64; 3]) -> Result<Volume3D, LesionError> {
    let mut mask = vec![false; dims.iter().product()];
    for c in components {
        for &v in c.voxels() {
            if (0..3).any(|a| v[a] >= dims[a]) {
                return Err(LesionError::VoxelOutOfRange { voxel: v, dims });
            }
            mask[linear_index(dims, v)] = true;
        }
    }
    Ok(Volume3D::from_mask(dims, spacing, &mask)?)
}

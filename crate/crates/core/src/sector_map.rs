//! Approximate PI-RADS sector geometry derived from a prostate mask.
//!
//! The gland's bounding box is halved along X (right/left) and Y
//! (anterior/posterior) and cut into thirds along Z (base/mid/apex), giving
//! twelve box-shaped cells. Report locations resolve to unions of those
//! boxes. Cells are not intersected with the gland itself.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lesion_ops::LesionComponent;
use crate::report_parser::{ApPosition, Laterality, LocationDescriptor, SiLevel};
use crate::volume::{Volume3D, VolumeKind};

#[derive(Debug, Error)]
pub enum SectorError {
    #[error("prostate mask has no foreground voxels")]
    EmptyMask,
    #[error("expected a BinaryMask, got {0:?}")]
    NotAMask(VolumeKind),
    #[error("prostate Z extent is {0} voxels; at least 3 are needed for thirds")]
    ZTooShort(usize),
    #[error("midline fraction must be in (0, 1], got {0}")]
    InvalidMidlineFraction(f64),
}

/// Inclusive voxel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BBox {
    pub fn extent(&self, axis: usize) -> usize {
        self.max[axis] - self.min[axis] + 1
    }

    pub fn voxel_count(&self) -> usize {
        (0..3).map(|a| self.extent(a)).product()
    }

    pub fn contains(&self, v: [usize; 3]) -> bool {
        (0..3).all(|a| v[a] >= self.min[a] && v[a] <= self.max[a])
    }

    pub fn clamp(&self, v: [usize; 3]) -> [usize; 3] {
        let mut out = v;
        for a in 0..3 {
            out[a] = v[a].clamp(self.min[a], self.max[a]);
        }
        out
    }

    pub fn as_region(&self) -> VoxelRegion {
        VoxelRegion {
            start: self.min,
            end: [self.max[0] + 1, self.max[1] + 1, self.max[2] + 1],
        }
    }
}

/// Half-open axis-aligned voxel box `[start, end)` per axis. Empty when any
/// axis has `start >= end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelRegion {
    pub start: [usize; 3],
    pub end: [usize; 3],
}

impl VoxelRegion {
    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.start[a] >= self.end[a])
    }

    pub fn contains(&self, v: [usize; 3]) -> bool {
        (0..3).all(|a| v[a] >= self.start[a] && v[a] < self.end[a])
    }

    pub fn voxel_count(&self) -> usize {
        (0..3).map(|a| self.end[a].saturating_sub(self.start[a])).product()
    }

    pub fn intersect(&self, other: &VoxelRegion) -> VoxelRegion {
        let mut out = *self;
        for a in 0..3 {
            out.start[a] = self.start[a].max(other.start[a]);
            out.end[a] = self.end[a].min(other.end[a]);
        }
        out
    }

    pub fn translate(&self, offset: [isize; 3]) -> VoxelRegion {
        let shift = |v: usize, d: isize| (v as isize + d) as usize;
        VoxelRegion {
            start: [0, 1, 2].map(|a| shift(self.start[a], offset[a])),
            end: [0, 1, 2].map(|a| shift(self.end[a], offset[a])),
        }
    }
}

/// One of the twelve sector cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SectorCell {
    pub laterality: Laterality,
    pub ap: ApPosition,
    pub si: SiLevel,
}

impl SectorCell {
    pub fn all() -> [SectorCell; 12] {
        let mut out = [SectorCell {
            laterality: Laterality::Left,
            ap: ApPosition::Anterior,
            si: SiLevel::Base,
        }; 12];
        let mut i = 0;
        for laterality in [Laterality::Left, Laterality::Right] {
            for ap in [ApPosition::Anterior, ApPosition::Posterior] {
                for si in [SiLevel::Base, SiLevel::Mid, SiLevel::Apex] {
                    out[i] = SectorCell { laterality, ap, si };
                    i += 1;
                }
            }
        }
        out
    }

    pub fn descriptor(&self) -> LocationDescriptor {
        LocationDescriptor::new(self.laterality, self.ap, self.si)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SectorOptions {
    /// Base occupies the superior (+Z) third when true.
    pub base_at_pos_z: bool,
    /// Width of the midline band as a fraction of the bbox X extent.
    pub midline_fraction: f64,
}

impl Default for SectorOptions {
    fn default() -> Self {
        Self {
            base_at_pos_z: true,
            midline_fraction: 0.25,
        }
    }
}

/// The 2x2x3 partition of the prostate bounding box.
///
/// Splits are stored as the first index of the upper part: voxels with
/// `x < x_split` are patient-right, `y < y_split` anterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorGrid {
    pub bbox: BBox,
    pub x_split: usize,
    pub y_split: usize,
    pub z_splits: [usize; 2],
    pub base_at_pos_z: bool,
    /// Half-open X range selected by a midline descriptor.
    pub midline_band: [usize; 2],
}

/// Tight bounding box of the nonzero voxels.
pub fn prostate_bbox(mask: &Volume3D) -> Result<BBox, SectorError> {
    if mask.kind() != VolumeKind::BinaryMask {
        return Err(SectorError::NotAMask(mask.kind()));
    }
    let [nx, ny, nz] = mask.dims();
    let mut min = [usize::MAX; 3];
    let mut max = [0usize; 3];
    let data = mask.data();
    let mut i = 0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if data[i] != 0.0 {
                    let v = [x, y, z];
                    for a in 0..3 {
                        min[a] = min[a].min(v[a]);
                        max[a] = max[a].max(v[a]);
                    }
                }
                i += 1;
            }
        }
    }
    if min[0] == usize::MAX {
        return Err(SectorError::EmptyMask);
    }
    Ok(BBox { min, max })
}

pub fn build_sector_grid(mask: &Volume3D) -> Result<SectorGrid, SectorError> {
    build_sector_grid_with(mask, &SectorOptions::default())
}

pub fn build_sector_grid_with(mask: &Volume3D, opts: &SectorOptions) -> Result<SectorGrid, SectorError> {
    SectorGrid::from_bbox(prostate_bbox(mask)?, opts)
}

impl SectorGrid {
    pub fn from_bbox(bbox: BBox, opts: &SectorOptions) -> Result<Self, SectorError> {
        if !(opts.midline_fraction > 0.0 && opts.midline_fraction <= 1.0) {
            return Err(SectorError::InvalidMidlineFraction(opts.midline_fraction));
        }
        let ez = bbox.extent(2);
        if ez < 3 {
            return Err(SectorError::ZTooShort(ez));
        }
        let ex = bbox.extent(0);
        let x_split = bbox.min[0] + ex / 2;
        let y_split = bbox.min[1] + bbox.extent(1) / 2;
        let z_splits = [bbox.min[2] + ez / 3, bbox.min[2] + 2 * ez / 3];

        let width = ((ex as f64 * opts.midline_fraction).round() as usize).max(1);
        let start = x_split.saturating_sub(width / 2).max(bbox.min[0]);
        let end = (start + width).min(bbox.max[0] + 1);
        Ok(Self {
            bbox,
            x_split,
            y_split,
            z_splits,
            base_at_pos_z: opts.base_at_pos_z,
            midline_band: [start, end],
        })
    }

    fn x_range(&self, l: Laterality) -> [usize; 2] {
        match l {
            Laterality::Right => [self.bbox.min[0], self.x_split],
            Laterality::Left => [self.x_split, self.bbox.max[0] + 1],
            Laterality::Midline => self.midline_band,
            Laterality::Unspecified => [self.bbox.min[0], self.bbox.max[0] + 1],
        }
    }

    fn y_range(&self, ap: ApPosition) -> [usize; 2] {
        match ap {
            ApPosition::Anterior => [self.bbox.min[1], self.y_split],
            ApPosition::Posterior => [self.y_split, self.bbox.max[1] + 1],
            ApPosition::Unspecified => [self.bbox.min[1], self.bbox.max[1] + 1],
        }
    }

    fn z_range(&self, si: SiLevel) -> [usize; 2] {
        let lower = [self.bbox.min[2], self.z_splits[0]];
        let middle = [self.z_splits[0], self.z_splits[1]];
        let upper = [self.z_splits[1], self.bbox.max[2] + 1];
        match (si, self.base_at_pos_z) {
            (SiLevel::Base, true) | (SiLevel::Apex, false) => upper,
            (SiLevel::Apex, true) | (SiLevel::Base, false) => lower,
            (SiLevel::Mid, _) => middle,
            (SiLevel::Unspecified, _) => [self.bbox.min[2], self.bbox.max[2] + 1],
        }
    }

    /// Sector cell of a voxel; coordinates outside the bbox are clamped.
    pub fn classify(&self, v: [usize; 3]) -> SectorCell {
        let [x, y, z] = self.bbox.clamp(v);
        let laterality = if x < self.x_split {
            Laterality::Right
        } else {
            Laterality::Left
        };
        let ap = if y < self.y_split {
            ApPosition::Anterior
        } else {
            ApPosition::Posterior
        };
        let si = if z < self.z_splits[0] {
            if self.base_at_pos_z {
                SiLevel::Apex
            } else {
                SiLevel::Base
            }
        } else if z < self.z_splits[1] {
            SiLevel::Mid
        } else if self.base_at_pos_z {
            SiLevel::Base
        } else {
            SiLevel::Apex
        };
        SectorCell { laterality, ap, si }
    }

    pub fn cell_region(&self, cell: SectorCell) -> VoxelRegion {
        region_for(&cell.descriptor(), self)
    }

    pub fn cells(&self) -> Vec<(SectorCell, VoxelRegion)> {
        SectorCell::all()
            .into_iter()
            .map(|c| (c, self.cell_region(c)))
            .collect()
    }
}

/// Box selected by a descriptor: the intersection of the slab chosen on each
/// axis. Unspecified axes span the whole bbox; the zone is ignored.
pub fn region_for(descriptor: &LocationDescriptor, grid: &SectorGrid) -> VoxelRegion {
    let x = grid.x_range(descriptor.laterality);
    let y = grid.y_range(descriptor.ap);
    let z = grid.z_range(descriptor.si);
    VoxelRegion {
        start: [x[0], y[0], z[0]],
        end: [x[1], y[1], z[1]],
    }
}

/// Every cell holding at least one voxel of the component.
pub fn locate_component(component: &LesionComponent, grid: &SectorGrid) -> BTreeSet<SectorCell> {
    locate_voxels(component.voxels(), grid)
}

pub fn locate_voxels(voxels: &[[usize; 3]], grid: &SectorGrid) -> BTreeSet<SectorCell> {
    voxels.iter().map(|&v| grid.classify(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_with(dims: [usize; 3], voxels: &[[usize; 3]]) -> Volume3D {
        let mut data = vec![0.0; dims.iter().product()];
        for &[x, y, z] in voxels {
            data[x + dims[0] * (y + dims[1] * z)] = 1.0;
        }
        Volume3D::new(dims, [1.0; 3], data, VolumeKind::BinaryMask).unwrap()
    }

    fn box_grid(max: [usize; 3]) -> SectorGrid {
        SectorGrid::from_bbox(BBox { min: [0; 3], max }, &SectorOptions::default()).unwrap()
    }

    #[test]
    fn bbox_examples() {
        let full = Volume3D::new([8; 3], [1.0; 3], vec![1.0; 512], VolumeKind::BinaryMask).unwrap();
        assert_eq!(prostate_bbox(&full).unwrap(), BBox { min: [0; 3], max: [7; 3] });
        let single = mask_with([8; 3], &[[3, 4, 5]]);
        assert_eq!(prostate_bbox(&single).unwrap(), BBox { min: [3, 4, 5], max: [3, 4, 5] });
        let empty = mask_with([4; 3], &[]);
        assert!(matches!(prostate_bbox(&empty), Err(SectorError::EmptyMask)));
    }

    #[test]
    fn z_too_short() {
        let m = mask_with([4; 3], &[[0, 0, 0], [3, 3, 1]]);
        assert!(matches!(build_sector_grid(&m), Err(SectorError::ZTooShort(2))));
    }

    #[test]
    fn split_arithmetic() {
        let g = box_grid([9, 9, 8]);
        assert_eq!(g.x_split, 5);
        assert_eq!(g.y_split, 5);
        assert_eq!(g.z_splits, [3, 6]);
        let r = region_for(&LocationDescriptor::new(Laterality::Right, ApPosition::Unspecified, SiLevel::Unspecified), &g);
        assert_eq!(r.end[0] - r.start[0], 5);
    }

    #[test]
    fn right_posterior_apex() {
        let g = box_grid([9, 9, 8]);
        let r = region_for(&LocationDescriptor::new(Laterality::Right, ApPosition::Posterior, SiLevel::Apex), &g);
        assert_eq!(r, VoxelRegion { start: [0, 5, 0], end: [5, 10, 3] });
        let base = region_for(&LocationDescriptor::new(Laterality::Right, ApPosition::Posterior, SiLevel::Base), &g);
        assert_eq!(base.start[2], 6);
        let flipped = SectorGrid::from_bbox(
            g.bbox,
            &SectorOptions {
                base_at_pos_z: false,
                ..Default::default()
            },
        )
        .unwrap();
        let apex = region_for(&LocationDescriptor::new(Laterality::Right, ApPosition::Posterior, SiLevel::Apex), &flipped);
        assert_eq!((apex.start[2], apex.end[2]), (6, 9));
    }

    #[test]
    fn unspecified_is_full_bbox() {
        let g = box_grid([9, 9, 8]);
        assert_eq!(region_for(&LocationDescriptor::UNSPECIFIED, &g), g.bbox.as_region());
    }

    #[test]
    fn left_and_right_disjoint() {
        let g = box_grid([9, 9, 8]);
        let l = region_for(&LocationDescriptor::new(Laterality::Left, ApPosition::Anterior, SiLevel::Mid), &g);
        let r = region_for(&LocationDescriptor::new(Laterality::Right, ApPosition::Anterior, SiLevel::Mid), &g);
        assert!(l.intersect(&r).is_empty());
    }

    #[test]
    fn midline_band() {
        let g = box_grid([9, 9, 8]);
        // width round(10/4) = 3 (2.5 rounds away from zero), centered on 5
        assert_eq!(g.midline_band, [4, 7]);
        let g1 = box_grid([1, 9, 8]);
        assert_eq!(g1.midline_band, [1, 2]);
    }

    #[test]
    fn cells_tile_bbox() {
        let g = box_grid([9, 6, 10]);
        let cells = g.cells();
        let total: usize = cells.iter().map(|(_, r)| r.voxel_count()).sum();
        assert_eq!(total, g.bbox.voxel_count());
        for (i, (_, a)) in cells.iter().enumerate() {
            for (_, b) in &cells[i + 1..] {
                assert!(a.intersect(b).is_empty());
            }
        }
    }

    #[test]
    fn locate_examples() {
        let g = box_grid([9, 9, 8]);
        let one = locate_voxels(&[[7, 7, 7]], &g);
        assert_eq!(
            one.into_iter().collect::<Vec<_>>(),
            vec![SectorCell {
                laterality: Laterality::Left,
                ap: ApPosition::Posterior,
                si: SiLevel::Base
            }]
        );
        let straddle = locate_voxels(&[[4, 1, 4], [5, 1, 4]], &g);
        assert_eq!(straddle.len(), 2);
        // Out-of-bbox voxels clamp to the nearest cell.
        let g2 = SectorGrid::from_bbox(BBox { min: [2, 2, 2], max: [11, 11, 10] }, &SectorOptions::default()).unwrap();
        let outside = locate_voxels(&[[0, 0, 0]], &g2);
        assert_eq!(
            outside.into_iter().next().unwrap(),
            SectorCell {
                laterality: Laterality::Right,
                ap: ApPosition::Anterior,
                si: SiLevel::Apex
            }
        );
    }
}

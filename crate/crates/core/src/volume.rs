//! Dense 3D voxel grids with spacing metadata, plus resampling and
//! intensity normalization.
//!
//! Axis convention used throughout the crate: +X points to patient-left,
//! +Y to patient-posterior and +Z to patient-superior. Voxel data is stored
//! x-fastest, i.e. the linear index of `(x, y, z)` is `x + nx * (y + ny * z)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::nifti::{load_volume, save_volume, save_volume_as, NiftiDatatype};

/// What a volume's voxel values mean. Determines value-range validation and
/// which resampling modes are permitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VolumeKind {
    BinaryMask,
    LabelMap,
    ProbabilityMap,
    Intensity,
}

impl VolumeKind {
    pub fn is_mask(self) -> bool {
        matches!(self, VolumeKind::BinaryMask | VolumeKind::LabelMap)
    }
}

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("dimensions must be positive, got {0:?}")]
    InvalidDims([usize; 3]),
    #[error("voxel spacing must be positive and finite, got {0:?}")]
    InvalidSpacing([f64; 3]),
    #[error("data length {actual} does not match dims product {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value at voxel {0}")]
    NonFinite(usize),
    #[error("value {value} at voxel {index} is out of range for {kind:?}")]
    OutOfRange {
        kind: VolumeKind,
        index: usize,
        value: f64,
    },
    #[error("trilinear interpolation is not allowed for {0:?} volumes")]
    TrilinearOnMask(VolumeKind),
    #[error("z-score normalization requires an Intensity volume, got {0:?}")]
    NotIntensity(VolumeKind),
    #[error("z-score normalization needs at least 2 voxels")]
    TooFewVoxels,
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("unsupported NIFTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("expected a 3D volume, header declares {0} dimensions")]
    NotThreeDimensional(i16),
    #[error("header orientation is not axis-aligned")]
    ObliqueOrientation,
    #[error("corrupt NIFTI file: {0}")]
    Corrupt(String),
    #[error("values do not fit datatype {0:?}")]
    DatatypeOverflow(NiftiDatatype),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = VolumeError> = std::result::Result<T, E>;

/// Immutable 3D scalar volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<f64>,
    kind: VolumeKind,
}

impl Volume3D {
    /// Validates every invariant of the kind before constructing.
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<f64>, kind: VolumeKind) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(VolumeError::InvalidDims(dims));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(VolumeError::InvalidSpacing(spacing));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(VolumeError::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        for (index, &value) in data.iter().enumerate() {
            if !value.is_finite() {
                return Err(VolumeError::NonFinite(index));
            }
            let ok = match kind {
                VolumeKind::BinaryMask => value == 0.0 || value == 1.0,
                VolumeKind::ProbabilityMap => (0.0..=1.0).contains(&value),
                VolumeKind::LabelMap => value >= 0.0 && value.fract() == 0.0,
                VolumeKind::Intensity => true,
            };
            if !ok {
                return Err(VolumeError::OutOfRange { kind, index, value });
            }
        }
        Ok(Self {
            dims,
            spacing,
            data,
            kind,
        })
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3], kind: VolumeKind) -> Result<Self> {
        let len = dims.iter().product();
        Self::new(dims, spacing, vec![0.0; len], kind)
    }

    /// Builds a binary mask from a boolean grid in x-fastest order.
    pub fn from_mask(dims: [usize; 3], spacing: [f64; 3], mask: &[bool]) -> Result<Self> {
        let data = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self::new(dims, spacing, data, VolumeKind::BinaryMask)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Reinterprets the volume under another kind, re-running validation.
    pub fn with_kind(self, kind: VolumeKind) -> Result<Self> {
        Self::new(self.dims, self.spacing, self.data, kind)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        linear_index(self.dims, [x, y, z])
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    /// Voxels whose value is nonzero, as a boolean grid.
    pub fn nonzero(&self) -> Vec<bool> {
        self.data.iter().map(|&v| v != 0.0).collect()
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn same_geometry(&self, other: &Volume3D) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }
}

#[inline]
pub fn linear_index(dims: [usize; 3], [x, y, z]: [usize; 3]) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

#[inline]
pub fn coords_of(dims: [usize; 3], index: usize) -> [usize; 3] {
    let x = index % dims[0];
    let rest = index / dims[0];
    [x, rest % dims[1], rest / dims[1]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    Nearest,
    Trilinear,
}

/// Resamples onto a grid with `target_spacing`, keeping the physical extent.
///
/// Output voxel centers are mapped into source index space through the
/// voxel-center convention `src = (i + 0.5) * target / source - 0.5`, clamped
/// to the source grid.
pub fn resample(vol: &Volume3D, target_spacing: [f64; 3], mode: Interpolation) -> Result<Volume3D> {
    if target_spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(VolumeError::InvalidSpacing(target_spacing));
    }
    if mode == Interpolation::Trilinear && vol.kind.is_mask() {
        return Err(VolumeError::TrilinearOnMask(vol.kind));
    }
    let src_dims = vol.dims;
    let mut dims = [0usize; 3];
    let mut scale = [0f64; 3];
    for a in 0..3 {
        let extent = src_dims[a] as f64 * vol.spacing[a];
        dims[a] = ((extent / target_spacing[a]).round() as usize).max(1);
        scale[a] = target_spacing[a] / vol.spacing[a];
    }
    if dims == src_dims && target_spacing == vol.spacing {
        return Ok(vol.clone());
    }

    let src_coord = |a: usize, i: usize| -> f64 {
        let c = (i as f64 + 0.5) * scale[a] - 0.5;
        c.clamp(0.0, (src_dims[a] - 1) as f64)
    };
    let axis_coords: Vec<Vec<f64>> = (0..3)
        .map(|a| (0..dims[a]).map(|i| src_coord(a, i)).collect())
        .collect();

    let mut data = Vec::with_capacity(dims.iter().product());
    match mode {
        Interpolation::Nearest => {
            let nearest: Vec<Vec<usize>> = axis_coords
                .iter()
                .map(|cs| cs.iter().map(|c| (c + 0.5).floor() as usize).collect())
                .collect();
            for &sz in &nearest[2] {
                for &sy in &nearest[1] {
                    for &sx in &nearest[0] {
                        data.push(vol.get(sx, sy, sz));
                    }
                }
            }
        }
        Interpolation::Trilinear => {
            // (lower index, upper index, weight of upper)
            let taps: Vec<Vec<(usize, usize, f64)>> = (0..3)
                .map(|a| {
                    axis_coords[a]
                        .iter()
                        .map(|&c| {
                            let lo = c.floor() as usize;
                            let hi = (lo + 1).min(src_dims[a] - 1);
                            (lo, hi, c - lo as f64)
                        })
                        .collect()
                })
                .collect();
            for &(z0, z1, wz) in &taps[2] {
                for &(y0, y1, wy) in &taps[1] {
                    for &(x0, x1, wx) in &taps[0] {
                        let c00 = lerp(vol.get(x0, y0, z0), vol.get(x1, y0, z0), wx);
                        let c10 = lerp(vol.get(x0, y1, z0), vol.get(x1, y1, z0), wx);
                        let c01 = lerp(vol.get(x0, y0, z1), vol.get(x1, y0, z1), wx);
                        let c11 = lerp(vol.get(x0, y1, z1), vol.get(x1, y1, z1), wx);
                        let c0 = lerp(c00, c10, wy);
                        let c1 = lerp(c01, c11, wy);
                        data.push(lerp(c0, c1, wz));
                    }
                }
            }
            if vol.kind == VolumeKind::ProbabilityMap {
                for v in &mut data {
                    *v = v.clamp(0.0, 1.0);
                }
            }
        }
    }
    Volume3D::new(dims, target_spacing, data, vol.kind)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Shifts and scales an intensity volume to zero mean and unit (population)
/// standard deviation.
pub fn zscore_normalize(vol: &Volume3D) -> Result<Volume3D> {
    if vol.kind != VolumeKind::Intensity {
        return Err(VolumeError::NotIntensity(vol.kind));
    }
    let n = vol.data.len();
    if n < 2 {
        return Err(VolumeError::TooFewVoxels);
    }
    let first = vol.data[0];
    if vol.data.iter().all(|&v| v == first) {
        return Err(VolumeError::ZeroVariance);
    }
    let mean = vol.data.iter().sum::<f64>() / n as f64;
    let var = vol.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return Err(VolumeError::ZeroVariance);
    }
    let data = vol.data.iter().map(|v| (v - mean) / std).collect();
    Volume3D::new(vol.dims, vol.spacing, data, VolumeKind::Intensity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask(dims: [usize; 3], f: impl Fn(usize, usize, usize) -> bool) -> Volume3D {
        let mut data = Vec::new();
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(if f(x, y, z) { 1.0 } else { 0.0 });
                }
            }
        }
        Volume3D::new(dims, [1.0; 3], data, VolumeKind::BinaryMask).unwrap()
    }

    #[test]
    fn rejects_invalid_construction() {
        assert!(matches!(
            Volume3D::new([2, 2, 0], [1.0; 3], vec![], VolumeKind::Intensity),
            Err(VolumeError::InvalidDims(_))
        ));
        assert!(matches!(
            Volume3D::new([1, 1, 1], [1.0, 0.0, 1.0], vec![0.0], VolumeKind::Intensity),
            Err(VolumeError::InvalidSpacing(_))
        ));
        assert!(matches!(
            Volume3D::new([1, 1, 2], [1.0; 3], vec![0.0], VolumeKind::Intensity),
            Err(VolumeError::LengthMismatch { .. })
        ));
        assert!(matches!(
            Volume3D::new([1, 1, 1], [1.0; 3], vec![f64::NAN], VolumeKind::Intensity),
            Err(VolumeError::NonFinite(0))
        ));
        assert!(matches!(
            Volume3D::new([1, 1, 1], [1.0; 3], vec![1.01], VolumeKind::ProbabilityMap),
            Err(VolumeError::OutOfRange { .. })
        ));
        assert!(matches!(
            Volume3D::new([1, 1, 1], [1.0; 3], vec![0.5], VolumeKind::BinaryMask),
            Err(VolumeError::OutOfRange { .. })
        ));
    }

    #[test]
    fn index_roundtrip() {
        let dims = [3, 4, 5];
        for i in 0..60 {
            assert_eq!(linear_index(dims, coords_of(dims, i)), i);
        }
    }

    #[test]
    fn resample_identity() {
        let m = mask([5, 6, 7], |x, y, z| (x + y * z) % 3 == 0);
        let out = resample(&m, [1.0; 3], Interpolation::Nearest).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn nearest_upsample_replicates_blocks() {
        let m = mask([10, 10, 10], |x, y, z| (x * 7 + y * 3 + z) % 4 == 1);
        let out = resample(&m, [0.5; 3], Interpolation::Nearest).unwrap();
        assert_eq!(out.dims(), [20, 20, 20]);
        for z in 0..20 {
            for y in 0..20 {
                for x in 0..20 {
                    assert_eq!(out.get(x, y, z), m.get(x / 2, y / 2, z / 2));
                }
            }
        }
    }

    #[test]
    fn trilinear_downsample_matches_direct_interpolation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f64> = (0..64).map(|_| rng.gen::<f64>()).collect();
        let v = Volume3D::new([4, 4, 4], [1.0; 3], data.clone(), VolumeKind::ProbabilityMap).unwrap();
        let out = resample(&v, [2.0; 3], Interpolation::Trilinear).unwrap();
        assert_eq!(out.dims(), [2, 2, 2]);
        // Output voxel i covers source voxels 2i and 2i+1; its center lies
        // exactly halfway, so the value is the mean of the 2x2x2 block.
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    let mut sum = 0.0;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                sum += data[(2 * x + dx) + 4 * ((2 * y + dy) + 4 * (2 * z + dz))];
                            }
                        }
                    }
                    assert!((out.get(x, y, z) - sum / 8.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn trilinear_rejected_for_masks() {
        let m = mask([2, 2, 2], |_, _, _| true);
        assert!(matches!(
            resample(&m, [0.5; 3], Interpolation::Trilinear),
            Err(VolumeError::TrilinearOnMask(_))
        ));
    }

    #[test]
    fn resample_dims_have_floor_of_one() {
        let m = mask([2, 2, 2], |_, _, _| true);
        let out = resample(&m, [10.0; 3], Interpolation::Nearest).unwrap();
        assert_eq!(out.dims(), [1, 1, 1]);
    }

    #[test]
    fn zscore_examples() {
        let c = Volume3D::new([2, 1, 1], [1.0; 3], vec![3.0, 3.0], VolumeKind::Intensity).unwrap();
        assert!(matches!(zscore_normalize(&c), Err(VolumeError::ZeroVariance)));
        let v = Volume3D::new([2, 1, 1], [1.0; 3], vec![0.0, 2.0], VolumeKind::Intensity).unwrap();
        assert_eq!(zscore_normalize(&v).unwrap().data(), &[-1.0, 1.0]);
        let one = Volume3D::new([1, 1, 1], [1.0; 3], vec![3.0], VolumeKind::Intensity).unwrap();
        assert!(matches!(zscore_normalize(&one), Err(VolumeError::TooFewVoxels)));
    }

    #[test]
    fn zscore_random_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..16 * 16 * 16).map(|_| rng.gen_range(-50.0..300.0)).collect();
        let v = Volume3D::new([16; 3], [1.0; 3], data, VolumeKind::Intensity).unwrap();
        let out = zscore_normalize(&v).unwrap();
        let n = out.len() as f64;
        let mean = out.data().iter().sum::<f64>() / n;
        let sd = (out.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-6);
        assert!((sd - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn nearest_output_values_subset_of_input(
            seed in any::<u64>(),
            tx in 0.3f64..3.0, ty in 0.3f64..3.0, tz in 0.5f64..6.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..6 * 5 * 4).map(|_| rng.gen_range(0..4) as f64).collect();
            let v = Volume3D::new([6, 5, 4], [1.0, 1.0, 3.0], data.clone(), VolumeKind::LabelMap).unwrap();
            let out = resample(&v, [tx, ty, tz], Interpolation::Nearest).unwrap();
            for a in 0..3 {
                let extent = v.dims()[a] as f64 * v.spacing()[a];
                let new_extent = out.dims()[a] as f64 * out.spacing()[a];
                prop_assert!((extent - new_extent).abs() <= out.spacing()[a] * 0.5 + 1e-9 || out.dims()[a] == 1);
            }
            for val in out.data() {
                prop_assert!(data.contains(val));
            }
        }

        #[test]
        fn zscore_is_idempotent(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..128).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let v = Volume3D::new([8, 4, 4], [1.0; 3], data, VolumeKind::Intensity).unwrap();
            let once = zscore_normalize(&v).unwrap();
            let twice = zscore_normalize(&once).unwrap();
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}

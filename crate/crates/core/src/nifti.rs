//! Minimal NIFTI-1 single-file (`.nii` / `.nii.gz`) reader and writer.
//!
//! Only 3D volumes with uint8, int16 or float32 payloads are supported.
//! Orientation is reduced to voxel spacing: any header whose qform or sform
//! rotation has off-diagonal terms is rejected instead of being reoriented.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::fsutil::write_atomic;
use crate::volume::{Result, Volume3D, VolumeError, VolumeKind};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag.
pub const DATA_OFFSET: usize = 352;
pub const MAGIC: &[u8; 4] = b"n+1\0";

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const NIFTI_UNITS_MM: u8 = 2;

/// On-disk voxel type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NiftiDatatype {
    U8,
    I16,
    F32,
}

impl NiftiDatatype {
    fn code(self) -> i16 {
        match self {
            NiftiDatatype::U8 => DT_UINT8,
            NiftiDatatype::I16 => DT_INT16,
            NiftiDatatype::F32 => DT_FLOAT32,
        }
    }

    fn from_code(code: i16) -> Result<Self> {
        match code {
            DT_UINT8 => Ok(NiftiDatatype::U8),
            DT_INT16 => Ok(NiftiDatatype::I16),
            DT_FLOAT32 => Ok(NiftiDatatype::F32),
            other => Err(VolumeError::UnsupportedDatatype(other)),
        }
    }

    fn bytes(self) -> usize {
        match self {
            NiftiDatatype::U8 => 1,
            NiftiDatatype::I16 => 2,
            NiftiDatatype::F32 => 4,
        }
    }

    /// Default on-disk type for a volume kind: masks as uint8, everything
    /// else as float32.
    pub fn for_volume(vol: &Volume3D) -> Self {
        match vol.kind() {
            VolumeKind::BinaryMask => NiftiDatatype::U8,
            VolumeKind::LabelMap => {
                if vol.data().iter().all(|&v| v <= u8::MAX as f64) {
                    NiftiDatatype::U8
                } else {
                    NiftiDatatype::I16
                }
            }
            VolumeKind::ProbabilityMap | VolumeKind::Intensity => NiftiDatatype::F32,
        }
    }
}

/// Reads a NIFTI-1 file. `kind` defaults to [`VolumeKind::Intensity`]; the
/// decoded values are validated against it.
pub fn load_volume(path: impl AsRef<Path>, kind: Option<VolumeKind>) -> Result<Volume3D> {
    let raw = fs::read(path.as_ref())?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| VolumeError::Corrupt(format!("gzip stream: {e}")))?;
        out
    } else {
        raw
    };
    decode(&bytes, kind.unwrap_or(VolumeKind::Intensity))
}

/// Writes with the default datatype for the volume's kind. Paths ending in
/// `.gz` are gzip-compressed. The file is written atomically.
pub fn save_volume(vol: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    save_volume_as(vol, path, NiftiDatatype::for_volume(vol))
}

pub fn save_volume_as(vol: &Volume3D, path: impl AsRef<Path>, datatype: NiftiDatatype) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(vol, datatype)?;
    let gz = path.extension().map_or(false, |e| e == "gz");
    let payload = if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes)?;
        enc.finish()?
    } else {
        bytes
    };
    write_atomic(path, &payload)?;
    Ok(())
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn i16(&self, off: usize) -> i16 {
        i16::from_le_bytes([self.0[off], self.0[off + 1]])
    }
    fn i32(&self, off: usize) -> i32 {
        i32::from_le_bytes(self.0[off..off + 4].try_into().unwrap())
    }
    fn f32(&self, off: usize) -> f32 {
        f32::from_le_bytes(self.0[off..off + 4].try_into().unwrap())
    }
}

fn decode(bytes: &[u8], kind: VolumeKind) -> Result<Volume3D> {
    if bytes.len() < HEADER_SIZE {
        return Err(VolumeError::Corrupt(format!(
            "file is {} bytes, shorter than the header",
            bytes.len()
        )));
    }
    let h = Reader(bytes);
    match h.i32(0) {
        348 => {}
        v if v.swap_bytes() == 348 => {
            return Err(VolumeError::Corrupt("big-endian files are not supported".into()))
        }
        v => return Err(VolumeError::Corrupt(format!("sizeof_hdr is {v}"))),
    }
    if &bytes[344..348] != MAGIC {
        return Err(VolumeError::Corrupt("missing n+1 magic".into()));
    }
    let ndim = h.i16(40);
    if !(3..=7).contains(&ndim) {
        return Err(VolumeError::NotThreeDimensional(ndim));
    }
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let d = h.i16(42 + 2 * a);
        if d < 1 {
            return Err(VolumeError::Corrupt(format!("dim[{}] = {d}", a + 1)));
        }
        dims[a] = d as usize;
    }
    // Trailing dimensions must all be singleton.
    for a in 3..ndim as usize {
        if h.i16(42 + 2 * a) > 1 {
            return Err(VolumeError::NotThreeDimensional(ndim));
        }
    }
    let datatype = NiftiDatatype::from_code(h.i16(70))?;
    let mut spacing = [0f64; 3];
    for a in 0..3 {
        spacing[a] = h.f32(80 + 4 * a).abs() as f64;
    }
    check_orientation(&h)?;

    let vox_offset = h.f32(108);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(VolumeError::Corrupt(format!("vox_offset {vox_offset}")));
    }
    let offset = vox_offset as usize;
    let n = dims[0] * dims[1] * dims[2];
    let end = offset + n * datatype.bytes();
    if bytes.len() < end {
        return Err(VolumeError::Corrupt(format!(
            "payload truncated: need {end} bytes, have {}",
            bytes.len()
        )));
    }
    let payload = &bytes[offset..end];
    let mut data: Vec<f64> = match datatype {
        NiftiDatatype::U8 => payload.iter().map(|&b| b as f64).collect(),
        NiftiDatatype::I16 => payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        NiftiDatatype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
    };
    let slope = h.f32(112);
    let inter = h.f32(116);
    if slope.is_finite() && slope != 0.0 && !(slope == 1.0 && inter == 0.0) {
        let (slope, inter) = (slope as f64, if inter.is_finite() { inter as f64 } else { 0.0 });
        for v in &mut data {
            *v = *v * slope + inter;
        }
    }
    Volume3D::new(dims, spacing, data, kind)
}

fn check_orientation(h: &Reader) -> Result<()> {
    const EPS: f64 = 1e-6;
    let qform_code = h.i16(252);
    let sform_code = h.i16(254);
    if sform_code > 0 {
        for row in 0..3 {
            for col in 0..3 {
                let v = h.f32(280 + 16 * row + 4 * col) as f64;
                if row != col && v.abs() > EPS {
                    return Err(VolumeError::ObliqueOrientation);
                }
            }
        }
    } else if qform_code > 0 {
        let b = h.f32(256) as f64;
        let c = h.f32(260) as f64;
        let d = h.f32(264) as f64;
        let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
        // Off-diagonal entries of the quaternion rotation matrix.
        let off = [
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c),
            2.0 * (b * c + a * d),
            2.0 * (c * d - a * b),
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
        ];
        if off.iter().any(|v| v.abs() > EPS) {
            return Err(VolumeError::ObliqueOrientation);
        }
    }
    Ok(())
}

fn encode(vol: &Volume3D, datatype: NiftiDatatype) -> Result<Vec<u8>> {
    let dims = vol.dims();
    if dims.iter().any(|&d| d > i16::MAX as usize) {
        return Err(VolumeError::Corrupt(format!("dims {dims:?} exceed NIFTI-1 limits")));
    }
    let mut out = vec![0u8; DATA_OFFSET + vol.len() * datatype.bytes()];
    let put_i16 = |out: &mut [u8], off: usize, v: i16| out[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |out: &mut [u8], off: usize, v: f32| out[off..off + 4].copy_from_slice(&v.to_le_bytes());

    out[0..4].copy_from_slice(&348i32.to_le_bytes());
    put_i16(&mut out, 40, 3);
    for a in 0..3 {
        put_i16(&mut out, 42 + 2 * a, dims[a] as i16);
    }
    for a in 3..7 {
        put_i16(&mut out, 42 + 2 * a, 1);
    }
    put_i16(&mut out, 70, datatype.code());
    put_i16(&mut out, 72, (datatype.bytes() * 8) as i16);
    put_f32(&mut out, 76, 1.0);
    for a in 0..3 {
        put_f32(&mut out, 80 + 4 * a, vol.spacing()[a] as f32);
    }
    put_f32(&mut out, 108, DATA_OFFSET as f32);
    put_f32(&mut out, 112, 1.0);
    out[123] = NIFTI_UNITS_MM;
    out[344..348].copy_from_slice(MAGIC);

    let payload = &mut out[DATA_OFFSET..];
    match datatype {
        NiftiDatatype::U8 => {
            for (dst, &v) in payload.iter_mut().zip(vol.data()) {
                if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                    return Err(VolumeError::DatatypeOverflow(datatype));
                }
                *dst = v as u8;
            }
        }
        NiftiDatatype::I16 => {
            for (dst, &v) in payload.chunks_exact_mut(2).zip(vol.data()) {
                if !(i16::MIN as f64..=i16::MAX as f64).contains(&v) || v.fract() != 0.0 {
                    return Err(VolumeError::DatatypeOverflow(datatype));
                }
                dst.copy_from_slice(&(v as i16).to_le_bytes());
            }
        }
        NiftiDatatype::F32 => {
            for (dst, &v) in payload.chunks_exact_mut(4).zip(vol.data()) {
                dst.copy_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

//! NIfTI-1 reader: uncompressed single-file volumes (.nii), datatypes
//! uint8 / int16 / float32 / int8, with scl_slope / scl_inter applied.
//! Byte order is detected from sizeof_hdr.

use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};

use crate::error::{VxError, VxResult};
use crate::tensor::Tensor;

const HEADER_SIZE: usize = 348;

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const MAGIC: usize = 344;
}

mod datatype {
    pub const UINT8: i16 = 2;
    pub const INT16: i16 = 4;
    pub const FLOAT32: i16 = 16;
    pub const INT8: i16 = 256;
}

/// Reads a 3D NIfTI-1 volume; returns the scalar grid in (z, y, x) axis
/// order (matching the file's x-fastest layout) and the voxel spacing in
/// mm, (z, y, x).
pub fn read_nifti(path: &Path) -> VxResult<(Tensor<f32>, [f64; 3])> {
    let bytes = std::fs::read(path).map_err(|e| VxError::io(path.display().to_string(), e))?;
    let fmt = |m: String| VxError::format(path.display().to_string(), m);
    if bytes.len() < HEADER_SIZE {
        return Err(fmt(format!(
            "file is {} bytes, NIfTI-1 header needs {HEADER_SIZE}",
            bytes.len()
        )));
    }
    let le = LittleEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]);
    let swapped = if le == HEADER_SIZE as i32 {
        false
    } else if BigEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]) == HEADER_SIZE as i32 {
        true
    } else {
        return Err(fmt(format!("sizeof_hdr is {le}, expected {HEADER_SIZE}")));
    };
    let magic = &bytes[offsets::MAGIC..offsets::MAGIC + 4];
    if magic != b"n+1\0" && magic != b"ni1\0" {
        return Err(fmt(format!("magic is {magic:?}, expected \"n+1\" or \"ni1\"")));
    }
    if magic == b"ni1\0" {
        return Err(fmt("two-file (.hdr/.img) NIfTI is not supported".into()));
    }

    let rd_i16 = |o: usize| -> i16 {
        if swapped {
            BigEndian::read_i16(&bytes[o..])
        } else {
            LittleEndian::read_i16(&bytes[o..])
        }
    };
    let rd_f32 = |o: usize| -> f32 {
        if swapped {
            BigEndian::read_f32(&bytes[o..])
        } else {
            LittleEndian::read_f32(&bytes[o..])
        }
    };

    let ndim = rd_i16(offsets::DIM);
    if !(1..=7).contains(&ndim) {
        return Err(fmt(format!("dim[0] is {ndim}, expected 1..=7")));
    }
    let mut dims = [1usize; 7];
    for (i, dim) in dims.iter_mut().enumerate().take(ndim as usize) {
        let v = rd_i16(offsets::DIM + 2 * (i + 1));
        if v < 1 {
            return Err(fmt(format!("dim[{}] is {v}, must be >= 1", i + 1)));
        }
        *dim = v as usize;
    }
    if dims[3..].iter().any(|&d| d != 1) {
        return Err(fmt(format!(
            "only 3D volumes are supported, dims are {dims:?}"
        )));
    }
    let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
    let voxels = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nz))
        .ok_or_else(|| fmt("extents overflow".into()))?;

    let dt = rd_i16(offsets::DATATYPE);
    let bitpix = rd_i16(offsets::BITPIX);
    let elem_size = match (dt, bitpix) {
        (datatype::UINT8, 8) | (datatype::INT8, 8) => 1usize,
        (datatype::INT16, 16) => 2,
        (datatype::FLOAT32, 32) => 4,
        _ => {
            return Err(fmt(format!(
                "datatype {dt} / bitpix {bitpix} is not supported (uint8, int8, int16, float32 are)"
            )))
        }
    };

    let vox_offset = rd_f32(offsets::VOX_OFFSET);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(fmt(format!("vox_offset is {vox_offset}")));
    }
    let data_start = vox_offset as usize;
    let needed = data_start + voxels * elem_size;
    if bytes.len() < needed {
        return Err(fmt(format!(
            "file is {} bytes, header promises {needed}",
            bytes.len()
        )));
    }

    let mut slope = rd_f32(offsets::SCL_SLOPE);
    let inter = rd_f32(offsets::SCL_INTER);
    if slope == 0.0 || !slope.is_finite() {
        slope = 1.0;
    }
    let inter = if inter.is_finite() { inter } else { 0.0 };

    let raw = &bytes[data_start..needed];
    let data: Vec<f32> = match dt {
        datatype::UINT8 => raw.iter().map(|&b| b as f32 * slope + inter).collect(),
        datatype::INT8 => raw.iter().map(|&b| b as i8 as f32 * slope + inter).collect(),
        datatype::INT16 => raw
            .chunks_exact(2)
            .map(|c| {
                let v = if swapped {
                    BigEndian::read_i16(c)
                } else {
                    LittleEndian::read_i16(c)
                };
                v as f32 * slope + inter
            })
            .collect(),
        datatype::FLOAT32 => raw
            .chunks_exact(4)
            .map(|c| {
                let v = if swapped {
                    BigEndian::read_f32(c)
                } else {
                    LittleEndian::read_f32(c)
                };
                v * slope + inter
            })
            .collect(),
        _ => unreachable!(),
    };

    // NIfTI stores x fastest; our [D, H, W] = [z, y, x] layout matches it
    let grid = Tensor::new(vec![nz, ny, nx], data)?;
    let spacing = [
        rd_f32(offsets::PIXDIM + 4 * 3) as f64,
        rd_f32(offsets::PIXDIM + 4 * 2) as f64,
        rd_f32(offsets::PIXDIM + 4 * 1) as f64,
    ];
    let spacing = spacing.map(|s| if s > 0.0 && s.is_finite() { s } else { 1.0 });
    Ok((grid, spacing))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Builds a minimal little-endian NIfTI-1 file in memory.
    fn build_nifti(dims: [i16; 3], datatype: i16, bitpix: i16, payload: &[u8]) -> Vec<u8> {
        let mut h = vec![0u8; 352];
        LittleEndian::write_i32(&mut h[offsets::SIZEOF_HDR..], 348);
        LittleEndian::write_i16(&mut h[offsets::DIM..], 3);
        for i in 0..3 {
            LittleEndian::write_i16(&mut h[offsets::DIM + 2 * (i + 1)..], dims[i]);
        }
        LittleEndian::write_i16(&mut h[offsets::DATATYPE..], datatype);
        LittleEndian::write_i16(&mut h[offsets::BITPIX..], bitpix);
        // pixdim[1..3] = (x, y, z) spacing
        LittleEndian::write_f32(&mut h[offsets::PIXDIM + 4..], 2.0);
        LittleEndian::write_f32(&mut h[offsets::PIXDIM + 8..], 3.0);
        LittleEndian::write_f32(&mut h[offsets::PIXDIM + 12..], 4.0);
        LittleEndian::write_f32(&mut h[offsets::VOX_OFFSET..], 352.0);
        LittleEndian::write_f32(&mut h[offsets::SCL_SLOPE..], 2.0);
        LittleEndian::write_f32(&mut h[offsets::SCL_INTER..], 1.0);
        h[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(b"n+1\0");
        h.extend_from_slice(payload);
        h
    }

    #[test]
    fn hand_built_file_reads_exact_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.nii");
        // 2x2x2 uint8 with values 0..8; slope 2, inter 1 => v*2+1
        let payload: Vec<u8> = (0..8u8).collect();
        std::fs::write(&path, build_nifti([2, 2, 2], 2, 8, &payload)).unwrap();
        let (grid, spacing) = read_nifti(&path).unwrap();
        assert_eq!(grid.shape(), &[2, 2, 2]);
        let expected: Vec<f32> = (0..8).map(|v| v as f32 * 2.0 + 1.0).collect();
        assert_eq!(grid.data(), expected.as_slice());
        // spacing comes back in (z, y, x)
        assert_eq!(spacing, [4.0, 3.0, 2.0]);
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.nii");
        let payload: Vec<u8> = (0..7u8).collect(); // one voxel short
        std::fs::write(&path, build_nifti([2, 2, 2], 2, 8, &payload)).unwrap();
        let err = read_nifti(&path).unwrap_err();
        assert!(err.to_string().contains("promises"), "{err}");
    }

    #[test]
    fn bad_magic_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.nii");
        let mut bytes = build_nifti([2, 2, 2], 2, 8, &[0u8; 8]);
        bytes[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(b"xxx\0");
        std::fs::write(&path, bytes).unwrap();
        let err = read_nifti(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn int16_and_float32_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.nii");
        let mut payload = Vec::new();
        for v in [-5i16, 300, 0, 1, -1, 2, 7, 100] {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, build_nifti([2, 2, 2], 4, 16, &payload)).unwrap();
        let (grid, _) = read_nifti(&path).unwrap();
        assert_eq!(grid.data()[0], -5.0 * 2.0 + 1.0);
        assert_eq!(grid.data()[1], 300.0 * 2.0 + 1.0);

        let mut payload = Vec::new();
        for v in [0.5f32, -1.25, 3.0, 0.0, 1.0, 2.0, -7.5, 9.0] {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, build_nifti([2, 2, 2], 16, 32, &payload)).unwrap();
        let (grid, _) = read_nifti(&path).unwrap();
        assert_eq!(grid.data()[1], -1.25 * 2.0 + 1.0);
    }
}

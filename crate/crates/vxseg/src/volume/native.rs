//! Native volume format: a JSON sidecar describing extents, spacing and
//! file names, plus one little-endian raw buffer per grid. Lossless, no
//! binary fixtures needed in tests.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{VxError, VxResult};
use crate::tensor::{IntGrid, Tensor};
use crate::volume::{LabeledVolume, Modality, NUM_CLASSES};

const MAX_ELEMENTS: u64 = 1 << 33;

#[derive(Debug, Serialize, Deserialize)]
struct ModalityEntry {
    name: String,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    extents: [usize; 3],
    spacing_mm: [f64; 3],
    dtype: String,
    modalities: Vec<ModalityEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<String>,
}

/// Writes `<stem>.json` plus `<stem>.<modality>.raw` buffers (and
/// `<stem>.labels.raw` when labels are present) next to `json_path`.
pub fn write_volume(volume: &LabeledVolume, json_path: &Path) -> VxResult<()> {
    volume.validate()?;
    let extents = volume.extents()?;
    let stem = json_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| VxError::InvalidArgument(format!("bad volume path {json_path:?}")))?
        .to_string();
    let dir = json_path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| VxError::io(dir.display().to_string(), e))?;

    let mut sidecar = Sidecar {
        extents,
        spacing_mm: volume.spacing_mm,
        dtype: "f32".into(),
        modalities: Vec::new(),
        labels: None,
    };
    for m in &volume.modalities {
        let file = format!("{stem}.{}.raw", m.name);
        let path = dir.join(&file);
        let mut buf = Vec::with_capacity(m.data.len() * 4);
        for &v in m.data.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, &buf).map_err(|e| VxError::io(path.display().to_string(), e))?;
        sidecar.modalities.push(ModalityEntry { name: m.name.clone(), file });
    }
    if let Some(labels) = &volume.labels {
        let file = format!("{stem}.labels.raw");
        let path = dir.join(&file);
        std::fs::write(&path, labels.data())
            .map_err(|e| VxError::io(path.display().to_string(), e))?;
        sidecar.labels = Some(file);
    }
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| VxError::format(json_path.display().to_string(), e.to_string()))?;
    let mut f =
        File::create(json_path).map_err(|e| VxError::io(json_path.display().to_string(), e))?;
    f.write_all(json.as_bytes())
        .map_err(|e| VxError::io(json_path.display().to_string(), e))
}

/// Reads exactly `expected` bytes from `path`; a short or long file is a
/// format error, never partially used, and no more than `expected` bytes
/// are ever allocated.
fn read_raw_exact(path: &Path, expected: usize) -> VxResult<Vec<u8>> {
    let meta =
        std::fs::metadata(path).map_err(|e| VxError::io(path.display().to_string(), e))?;
    if meta.len() != expected as u64 {
        return Err(VxError::format(
            path.display().to_string(),
            format!("raw buffer is {} bytes, extents require {expected}", meta.len()),
        ));
    }
    let mut buf = vec![0u8; expected];
    let mut f = File::open(path).map_err(|e| VxError::io(path.display().to_string(), e))?;
    f.read_exact(&mut buf)
        .map_err(|e| VxError::io(path.display().to_string(), e))?;
    Ok(buf)
}

pub fn read_volume(json_path: &Path) -> VxResult<LabeledVolume> {
    let text = std::fs::read_to_string(json_path)
        .map_err(|e| VxError::io(json_path.display().to_string(), e))?;
    let sidecar: Sidecar = serde_json::from_str(&text)
        .map_err(|e| VxError::format(json_path.display().to_string(), e.to_string()))?;
    if sidecar.dtype != "f32" {
        return Err(VxError::format(
            json_path.display().to_string(),
            format!("unsupported dtype '{}'", sidecar.dtype),
        ));
    }
    let [d, h, w] = sidecar.extents;
    let elements = (d as u64).saturating_mul(h as u64).saturating_mul(w as u64);
    if elements == 0 || elements > MAX_ELEMENTS {
        return Err(VxError::format(
            json_path.display().to_string(),
            format!("implausible extents {:?}", sidecar.extents),
        ));
    }
    let n = elements as usize;
    let dir = json_path.parent().unwrap_or_else(|| Path::new("."));

    let mut modalities = Vec::with_capacity(sidecar.modalities.len());
    for entry in &sidecar.modalities {
        let raw = read_raw_exact(&dir.join(&entry.file), n * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        modalities.push(Modality {
            name: entry.name.clone(),
            data: Tensor::new(vec![d, h, w], data)?,
        });
    }
    let labels = match &sidecar.labels {
        Some(file) => {
            let raw = read_raw_exact(&dir.join(file), n)?;
            let grid = IntGrid::new(vec![d, h, w], raw)?;
            grid.validate_labels(NUM_CLASSES)?;
            Some(grid)
        }
        None => None,
    };
    let volume = LabeledVolume {
        modalities,
        labels,
        spacing_mm: sidecar.spacing_mm,
    };
    volume.validate()?;
    Ok(volume)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sample_volume() -> LabeledVolume {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        LabeledVolume {
            modalities: vec![
                Modality {
                    name: "t1".into(),
                    data: Tensor::from_fn(&[3, 4, 5], |_| rng.random_range(-1.0..1.0)),
                },
                Modality {
                    name: "t2".into(),
                    data: Tensor::from_fn(&[3, 4, 5], |_| rng.random_range(-1.0..1.0)),
                },
            ],
            labels: Some(
                IntGrid::new(vec![3, 4, 5], (0..60).map(|_| rng.random_range(0..4u8)).collect())
                    .unwrap(),
            ),
            spacing_mm: [1.0, 0.5, 2.0],
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.json");
        let vol = sample_volume();
        write_volume(&vol, &path).unwrap();
        let back = read_volume(&path).unwrap();
        assert_eq!(back.spacing_mm, vol.spacing_mm);
        for (a, b) in vol.modalities.iter().zip(&back.modalities) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.data.data(), b.data.data());
        }
        assert_eq!(vol.labels, back.labels);
    }

    #[test]
    fn truncated_raw_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.json");
        let vol = sample_volume();
        write_volume(&vol, &path).unwrap();
        let raw = dir.path().join("vol.t1.raw");
        let bytes = std::fs::read(&raw).unwrap();
        std::fs::write(&raw, &bytes[..bytes.len() - 4]).unwrap();
        assert!(read_volume(&path).is_err());
    }

    #[test]
    fn oversized_extents_are_rejected_before_allocation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.json");
        std::fs::write(
            &path,
            r#"{"extents":[99999999,99999999,99999999],"spacing_mm":[1,1,1],"dtype":"f32","modalities":[{"name":"t1","file":"x.raw"}]}"#,
        )
        .unwrap();
        let err = read_volume(&path).unwrap_err();
        assert!(err.to_string().contains("extents"), "{err}");
    }
}

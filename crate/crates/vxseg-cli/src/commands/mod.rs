pub mod eval;
pub mod gradcheck;
pub mod infer;
pub mod phantom;
pub mod train;

use std::path::{Path, PathBuf};

use vxseg::error::{VxError, VxResult};
use vxseg::net::{build_network, NetworkParams, NetworkSpec};
use vxseg::train::load_checkpoint_partial;
use vxseg::volume::{read_volume, LabeledVolume};

use crate::config::RunConfig;

/// All native volumes of a directory, sorted by file stem.
pub fn load_dataset(dir: &Path) -> VxResult<Vec<(String, LabeledVolume)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| VxError::io(dir.display().to_string(), e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(VxError::InvalidArgument(format!(
            "no .json volumes found in {}",
            dir.display()
        )));
    }
    paths
        .into_iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("volume")
                .to_string();
            Ok((stem, read_volume(&p)?))
        })
        .collect()
}

/// Spec sidecar path for a checkpoint.
pub fn spec_sidecar(ckpt: &Path) -> PathBuf {
    let mut name = ckpt.file_name().unwrap_or_default().to_os_string();
    name.push(".spec");
    ckpt.with_file_name(name)
}

/// Loads a checkpoint with its network spec: the `<ckpt>.spec` sidecar wins,
/// otherwise the run configuration's topology for the given stage is used.
/// The parameter store is validated against the spec before any compute.
pub fn load_network(
    ckpt: &Path,
    cfg: &RunConfig,
    stage: u8,
) -> VxResult<(NetworkSpec, NetworkParams<f32>)> {
    let sidecar = spec_sidecar(ckpt);
    let spec = if sidecar.exists() {
        NetworkSpec::load(&sidecar)?
    } else {
        cfg.network_spec(stage)?
    };
    let mut params = build_network::<f32>(&spec, 0)?;
    let report = load_checkpoint_partial(ckpt, &mut params, "*")?;
    if report.loaded_count() == 0 {
        return Err(VxError::Checkpoint(format!(
            "checkpoint {} holds no tensors matching the network",
            ckpt.display()
        )));
    }
    vxseg::context::check_compatible(&spec, &params)?;
    Ok((spec, params))
}

//! eval: DOC / ASD / MHD of predicted label volumes against ground truth.

use std::path::{Path, PathBuf};

use vxseg::error::{VxError, VxResult};
use vxseg::infer::{evaluate_batch, MhdMode};
use vxseg::tensor::IntGrid;
use vxseg::volume::read_volume;

fn labels_of(path: &Path) -> VxResult<(IntGrid, [f64; 3])> {
    let vol = read_volume(path)?;
    let spacing = vol.spacing_mm;
    let labels = vol.labels.ok_or_else(|| {
        VxError::InvalidArgument(format!("{} carries no label grid", path.display()))
    })?;
    Ok((labels, spacing))
}

/// Pairs of (id, pred path, truth path): directories pair by sorted file
/// name, single files form one pair.
fn pair_inputs(pred: &Path, truth: &Path) -> VxResult<Vec<(String, PathBuf, PathBuf)>> {
    if pred.is_dir() != truth.is_dir() {
        return Err(VxError::InvalidArgument(
            "--pred and --truth must both be files or both be directories".into(),
        ));
    }
    if !pred.is_dir() {
        let id = pred
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("volume")
            .to_string();
        return Ok(vec![(id, pred.to_path_buf(), truth.to_path_buf())]);
    }
    let list = |dir: &Path| -> VxResult<Vec<PathBuf>> {
        let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| VxError::io(dir.display().to_string(), e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        v.sort();
        Ok(v)
    };
    let (preds, truths) = (list(pred)?, list(truth)?);
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(VxError::InvalidArgument(format!(
            "prediction and truth directories hold {} vs {} volumes",
            preds.len(),
            truths.len()
        )));
    }
    Ok(preds
        .into_iter()
        .zip(truths)
        .map(|(p, t)| {
            let id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("volume")
                .to_string();
            (id, p, t)
        })
        .collect())
}

pub fn run(pred: &Path, truth: &Path, csv_out: &Path, mhd_mode: MhdMode) -> VxResult<()> {
    let pairs = pair_inputs(pred, truth)?;
    let mut loaded = Vec::with_capacity(pairs.len());
    for (id, p, t) in &pairs {
        let (seg, seg_spacing) = labels_of(p)?;
        let (gt, gt_spacing) = labels_of(t)?;
        if seg.shape() != gt.shape() {
            return Err(VxError::ShapeMismatch {
                context: format!("{id}: prediction vs truth extents"),
                lhs: seg.shape().to_vec(),
                rhs: gt.shape().to_vec(),
            });
        }
        if seg_spacing != gt_spacing {
            return Err(VxError::InvalidArgument(format!(
                "{id}: spacing mismatch {seg_spacing:?} vs {gt_spacing:?}"
            )));
        }
        loaded.push((id.clone(), seg, gt, gt_spacing));
    }
    let borrowed: Vec<(String, &IntGrid, &IntGrid, [f64; 3])> = loaded
        .iter()
        .map(|(id, s, t, sp)| (id.clone(), s, t, *sp))
        .collect();
    let (reports, csv) = evaluate_batch(&borrowed, mhd_mode)?;
    for (id, report) in &reports {
        println!("{id}:");
        print!("{report}");
    }
    std::fs::write(csv_out, csv).map_err(|e| VxError::io(csv_out.display().to_string(), e))?;
    log::info!("wrote {}", csv_out.display());
    Ok(())
}

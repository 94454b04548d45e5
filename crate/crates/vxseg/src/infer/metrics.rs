//! Segmentation metrics: Dice overlap coefficient, symmetric average
//! surface distance, and percentile (default 95th) symmetric Hausdorff
//! distance, all surface distances Euclidean in mm.
//!
//! Directed surface distances are evaluated through the exact distance
//! transform of the opposing surface, which agrees with the all-pairs
//! definition because both surfaces live on the voxel grid.

use crate::context::edt_exact_mm;
use crate::error::{VxError, VxResult};
use crate::tensor::IntGrid;
use crate::volume::TISSUE_NAMES;

/// Binary voxel mask with its extents.
#[derive(Debug, Clone)]
pub struct Mask {
    pub extents: [usize; 3],
    pub data: Vec<bool>,
}

impl Mask {
    pub fn from_labels(seg: &IntGrid, label: u8) -> VxResult<Mask> {
        Ok(Mask {
            extents: seg.dims3()?,
            data: seg.data().iter().map(|&v| v == label).collect(),
        })
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_emptyset(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }
}

/// Boundary voxels of a mask: members with at least one 6-neighbor outside
/// it (out-of-volume counts as outside).
#[derive(Debug, Clone)]
pub struct SurfaceSet {
    pub extents: [usize; 3],
    pub points: Vec<[usize; 3]>,
}

impl SurfaceSet {
    pub fn from_mask(mask: &Mask) -> SurfaceSet {
        let [d, h, w] = mask.extents;
        let at = |z: isize, y: isize, x: isize| -> bool {
            if z < 0 || y < 0 || x < 0 || z >= d as isize || y >= h as isize || x >= w as isize {
                false
            } else {
                mask.data[(z as usize * h + y as usize) * w + x as usize]
            }
        };
        let mut points = Vec::new();
        for z in 0..d as isize {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    if !at(z, y, x) {
                        continue;
                    }
                    if !at(z - 1, y, x)
                        || !at(z + 1, y, x)
                        || !at(z, y - 1, x)
                        || !at(z, y + 1, x)
                        || !at(z, y, x - 1)
                        || !at(z, y, x + 1)
                    {
                        points.push([z as usize, y as usize, x as usize]);
                    }
                }
            }
        }
        SurfaceSet {
            extents: mask.extents,
            points,
        }
    }
}

fn check_extents(a: &Mask, b: &Mask, what: &str) -> VxResult<()> {
    if a.extents != b.extents {
        return Err(VxError::ShapeMismatch {
            context: what.into(),
            lhs: a.extents.to_vec(),
            rhs: b.extents.to_vec(),
        });
    }
    Ok(())
}

/// Dice overlap 2|A n B| / (|A| + |B|); two empty masks count as identical.
pub fn dice(a: &Mask, b: &Mask) -> VxResult<f64> {
    check_extents(a, b, "dice masks")?;
    let inter = a
        .data
        .iter()
        .zip(&b.data)
        .filter(|(x, y)| **x && **y)
        .count();
    let total = a.count() + b.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Distances (mm) from every surface point of `from` to the nearest surface
/// point of `to`, via the exact distance transform of `to`'s surface.
fn directed_surface_distances(
    from: &SurfaceSet,
    to: &SurfaceSet,
    spacing_mm: [f64; 3],
) -> Vec<f64> {
    let [d, h, w] = to.extents;
    let mut target = vec![false; d * h * w];
    for p in &to.points {
        target[(p[0] * h + p[1]) * w + p[2]] = true;
    }
    let dist = edt_exact_mm(&target, to.extents, spacing_mm);
    from.points
        .iter()
        .map(|p| dist[(p[0] * h + p[1]) * w + p[2]])
        .collect()
}

fn surfaces_or_error(a: &Mask, b: &Mask, what: &str) -> VxResult<(SurfaceSet, SurfaceSet)> {
    check_extents(a, b, what)?;
    if a.is_emptyset() || b.is_emptyset() {
        return Err(VxError::Metric(format!(
            "{what} undefined for an empty mask"
        )));
    }
    Ok((SurfaceSet::from_mask(a), SurfaceSet::from_mask(b)))
}

/// Symmetric average surface distance in mm.
pub fn asd(a: &Mask, b: &Mask, spacing_mm: [f64; 3]) -> VxResult<f64> {
    let (sa, sb) = surfaces_or_error(a, b, "asd")?;
    let dab = directed_surface_distances(&sa, &sb, spacing_mm);
    let dba = directed_surface_distances(&sb, &sa, spacing_mm);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(0.5 * (mean(&dab) + mean(&dba)))
}

/// Hausdorff aggregation: a nearest-rank percentile of the directed
/// distances, or the plain maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MhdMode {
    Percentile(f64),
    Max,
}

impl Default for MhdMode {
    fn default() -> Self {
        MhdMode::Percentile(95.0)
    }
}

/// Symmetric (modified) Hausdorff distance in mm: the larger of the two
/// directed aggregates.
pub fn mhd(a: &Mask, b: &Mask, spacing_mm: [f64; 3], mode: MhdMode) -> VxResult<f64> {
    if let MhdMode::Percentile(p) = mode {
        if !(0.0 < p && p <= 100.0) {
            return Err(VxError::InvalidArgument(format!(
                "percentile must be in (0, 100], got {p}"
            )));
        }
    }
    let (sa, sb) = surfaces_or_error(a, b, "mhd")?;
    let aggregate = |mut v: Vec<f64>| -> f64 {
        match mode {
            MhdMode::Max => v.iter().copied().fold(0.0, f64::max),
            MhdMode::Percentile(p) => {
                v.sort_by(|x, y| x.partial_cmp(y).unwrap());
                let n = v.len();
                let rank = ((p / 100.0) * n as f64).ceil() as usize;
                v[rank.clamp(1, n) - 1]
            }
        }
    };
    let dab = aggregate(directed_surface_distances(&sa, &sb, spacing_mm));
    let dba = aggregate(directed_surface_distances(&sb, &sa, spacing_mm));
    Ok(dab.max(dba))
}

/// One tissue's metrics; a metric that cannot be computed carries its
/// error text instead of aborting the others.
#[derive(Debug, Clone)]
pub struct TissueRow {
    pub tissue: String,
    pub label: u8,
    pub doc: Result<f64, String>,
    pub asd_mm: Result<f64, String>,
    pub mhd_mm: Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<TissueRow>,
}

impl EvalReport {
    /// Mean Dice over the rows where it exists.
    pub fn mean_doc(&self) -> Option<f64> {
        let vals: Vec<f64> = self.rows.iter().filter_map(|r| r.doc.clone().ok()).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let cell = |r: &Result<f64, String>| match r {
            Ok(v) => format!("{v:.4}"),
            Err(e) => format!("({e})"),
        };
        for r in &self.rows {
            writeln!(
                f,
                "  {:<4} DOC {:<10} ASD {:<10} MHD {}",
                r.tissue,
                cell(&r.doc),
                cell(&r.asd_mm),
                cell(&r.mhd_mm)
            )?;
        }
        Ok(())
    }
}

/// Per-tissue DOC / ASD / MHD of a segmentation against ground truth.
pub fn evaluate(
    seg: &IntGrid,
    truth: &IntGrid,
    spacing_mm: [f64; 3],
    mhd_mode: MhdMode,
) -> VxResult<EvalReport> {
    if seg.shape() != truth.shape() {
        return Err(VxError::ShapeMismatch {
            context: "evaluate segmentation vs truth".into(),
            lhs: seg.shape().to_vec(),
            rhs: truth.shape().to_vec(),
        });
    }
    let mut rows = Vec::with_capacity(3);
    for (i, name) in TISSUE_NAMES.iter().enumerate() {
        let label = (i + 1) as u8;
        let a = Mask::from_labels(seg, label)?;
        let b = Mask::from_labels(truth, label)?;
        rows.push(TissueRow {
            tissue: (*name).to_string(),
            label,
            doc: dice(&a, &b).map_err(|e| e.to_string()),
            asd_mm: asd(&a, &b, spacing_mm).map_err(|e| e.to_string()),
            mhd_mm: mhd(&a, &b, spacing_mm, mhd_mode).map_err(|e| e.to_string()),
        });
    }
    Ok(EvalReport { rows })
}

/// Batch evaluation with a CSV: one row per (volume, tissue) plus mean and
/// std rows per tissue across volumes.
pub fn evaluate_batch(
    volumes: &[(String, &IntGrid, &IntGrid, [f64; 3])],
    mhd_mode: MhdMode,
) -> VxResult<(Vec<(String, EvalReport)>, String)> {
    let mut reports = Vec::with_capacity(volumes.len());
    for (id, seg, truth, spacing) in volumes {
        reports.push((id.clone(), evaluate(seg, truth, *spacing, mhd_mode)?));
    }
    let mut csv = String::from("volume_id,tissue,doc,asd_mm,mhd_mm\n");
    let cell = |r: &Result<f64, String>| match r {
        Ok(v) => format!("{v}"),
        Err(_) => "NA".into(),
    };
    for (id, report) in &reports {
        for row in &report.rows {
            csv.push_str(&format!(
                "{id},{},{},{},{}\n",
                row.tissue,
                cell(&row.doc),
                cell(&row.asd_mm),
                cell(&row.mhd_mm)
            ));
        }
    }
    if reports.len() > 1 {
        for (i, name) in TISSUE_NAMES.iter().enumerate() {
            let stats = |pick: &dyn Fn(&TissueRow) -> Option<f64>| -> Option<(f64, f64)> {
                let vals: Vec<f64> = reports
                    .iter()
                    .filter_map(|(_, r)| pick(&r.rows[i]))
                    .collect();
                if vals.is_empty() {
                    return None;
                }
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var =
                    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
                Some((mean, var.sqrt()))
            };
            let fmt_stats = |s: Option<(f64, f64)>| match s {
                Some((m, _)) => format!("{m}"),
                None => "NA".into(),
            };
            let fmt_std = |s: Option<(f64, f64)>| match s {
                Some((_, sd)) => format!("{sd}"),
                None => "NA".into(),
            };
            let d = stats(&|r: &TissueRow| r.doc.clone().ok());
            let a = stats(&|r: &TissueRow| r.asd_mm.clone().ok());
            let m = stats(&|r: &TissueRow| r.mhd_mm.clone().ok());
            csv.push_str(&format!(
                "mean,{name},{},{},{}\n",
                fmt_stats(d),
                fmt_stats(a),
                fmt_stats(m)
            ));
            csv.push_str(&format!(
                "std,{name},{},{},{}\n",
                fmt_std(d),
                fmt_std(a),
                fmt_std(m)
            ));
        }
    }
    Ok((reports, csv))
}

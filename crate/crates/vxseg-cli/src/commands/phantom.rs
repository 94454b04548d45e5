//! phantom-gen: writes synthetic labeled volumes in the native format.

use std::path::Path;

use vxseg::error::{VxError, VxResult};
use vxseg::volume::{generate_phantom, tissue_means, write_volume, NUM_CLASSES};

use crate::config::RunConfig;

pub fn run(cfg: &RunConfig, out: &Path) -> VxResult<()> {
    if cfg.count == 0 {
        return Err(VxError::InvalidArgument("count must be >= 1".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| VxError::io(out.display().to_string(), e))?;
    let means = tissue_means(cfg.contrast, cfg.noise);
    for i in 0..cfg.count {
        let seed = cfg.seed + i as u64;
        let vol = generate_phantom(seed, cfg.extent, cfg.noise, cfg.contrast)?;
        let path = out.join(format!("vol_{i:03}.json"));
        write_volume(&vol, &path)?;

        let labels = vol.labels.as_ref().expect("phantoms carry labels");
        let hist = labels.histogram(NUM_CLASSES);
        let total = labels.len() as f64;
        let fractions: Vec<String> = hist
            .iter()
            .map(|&c| format!("{:.1}%", 100.0 * c as f64 / total))
            .collect();
        // observed per-tissue means, for the isointense separation report
        let mut sums = [[0.0f64; NUM_CLASSES]; 2];
        for (mi, m) in vol.modalities.iter().enumerate() {
            for (&v, &l) in m.data.data().iter().zip(labels.data()) {
                sums[mi][l as usize] += v as f64;
            }
        }
        println!(
            "wrote {} (seed {seed}, labels bg/csf/gm/wm = {})",
            path.display(),
            fractions.join("/")
        );
        for (mi, name) in ["t1", "t2"].iter().enumerate() {
            let mean = |l: usize| sums[mi][l] / hist[l].max(1) as f64;
            let sep = (mean(3) - mean(2)).abs();
            println!(
                "  {name}: mean csf {:.4} gm {:.4} wm {:.4}; |wm-gm| = {:.4} ({:.2} sigma, target {:.4})",
                mean(1),
                mean(2),
                mean(3),
                sep,
                if cfg.noise > 0.0 { sep / cfg.noise } else { 0.0 },
                (means[mi][3] - means[mi][2]).abs(),
            );
        }
    }
    Ok(())
}

//! Finite-difference verification of the analytic gradients, in f64.
//!
//! Central differences with step h are compared per coordinate against the
//! backward pass. Coordinates whose +h / -h evaluations take different
//! data-dependent branches (a ReLU sign flip, a pool argmax change, a loss
//! clamp engaging) straddle a non-differentiable point where the comparison
//! is meaningless; they are excluded and counted, the subgradient policy
//! for pooling ties included.

use rayon::prelude::*;

use crate::dtype::Scalar;
use crate::error::VxResult;
use crate::net::{forward, ForwardOpts, NetworkParams, NetworkSpec};
use crate::tensor::{IntGrid, Tensor};
use crate::train::loss::{multiscale_loss_nodes, LossConfig};
use crate::Mode;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Cap on checked coordinates per tensor (evenly strided); None = all.
    pub max_coords_per_tensor: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-4,
            tolerance: 1e-4,
            max_coords_per_tensor: None,
        }
    }
}

/// One loss evaluation: value plus the hash of every branch decision taken.
#[derive(Debug, Clone, Copy)]
pub struct EvalOutput {
    pub loss: f64,
    pub decisions: u64,
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_coord: usize,
    pub checked: usize,
    pub skipped_nondifferentiable: usize,
}

#[derive(Debug)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub step: f64,
    /// Per-tensor results, worst first.
    pub entries: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }

    pub fn checked_coords(&self) -> usize {
        self.entries.iter().map(|e| e.checked).sum()
    }

    pub fn skipped_coords(&self) -> usize {
        self.entries.iter().map(|e| e.skipped_nondifferentiable).sum()
    }

    pub fn pass(&self) -> bool {
        self.checked_coords() > 0 && self.max_rel_err() < self.tolerance
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "gradcheck: {} (max rel err {:.3e}, tolerance {:.1e}, h {:.1e}, {} coords checked, {} skipped at non-differentiable points)",
            if self.pass() { "PASS" } else { "FAIL" },
            self.max_rel_err(),
            self.tolerance,
            self.step,
            self.checked_coords(),
            self.skipped_coords(),
        )?;
        writeln!(f, "worst offenders:")?;
        for e in self.entries.iter().take(8) {
            writeln!(
                f,
                "  {:<44} max rel err {:.3e} at [{}] ({} checked, {} skipped)",
                e.name, e.max_rel_err, e.worst_coord, e.checked, e.skipped_nondifferentiable
            )?;
        }
        Ok(())
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Checks analytic gradients of all trainable parameters against central
/// differences of `eval`. `analytic` maps parameter slots to gradients
/// (one backward pass of the same loss).
pub fn gradcheck_params<F>(
    params: &NetworkParams<f64>,
    analytic: &[(usize, Tensor<f64>)],
    eval: F,
    cfg: &GradCheckConfig,
) -> VxResult<GradCheckReport>
where
    F: Fn(&NetworkParams<f64>) -> VxResult<EvalOutput> + Sync,
{
    let mut grads: Vec<Option<&Tensor<f64>>> = vec![None; params.len()];
    for (idx, g) in analytic {
        grads[*idx] = Some(g);
    }

    // (slot, coords) jobs, chunked so rayon can balance the big tensors
    let mut jobs: Vec<(usize, Vec<usize>)> = Vec::new();
    for idx in 0..params.len() {
        let p = params.by_index(idx);
        if !p.trainable || grads[idx].is_none() {
            continue;
        }
        let len = p.value.len();
        let coords: Vec<usize> = match cfg.max_coords_per_tensor {
            Some(max) if len > max => (0..max).map(|i| i * len / max).collect(),
            _ => (0..len).collect(),
        };
        for chunk in coords.chunks(256) {
            jobs.push((idx, chunk.to_vec()));
        }
    }

    struct JobResult {
        slot: usize,
        max_rel_err: f64,
        worst_coord: usize,
        checked: usize,
        skipped: usize,
    }

    let results: Vec<VxResult<JobResult>> = jobs
        .par_iter()
        .map(|(idx, coords)| {
            let mut scratch = params.clone();
            let grad = grads[*idx].unwrap();
            let mut worst = JobResult {
                slot: *idx,
                max_rel_err: 0.0,
                worst_coord: 0,
                checked: 0,
                skipped: 0,
            };
            for &coord in coords {
                let original = scratch.by_index(*idx).value.data()[coord];
                scratch.by_index_mut(*idx).value.data_mut()[coord] = original + cfg.step;
                let plus = eval(&scratch)?;
                scratch.by_index_mut(*idx).value.data_mut()[coord] = original - cfg.step;
                let minus = eval(&scratch)?;
                scratch.by_index_mut(*idx).value.data_mut()[coord] = original;
                if plus.decisions != minus.decisions {
                    worst.skipped += 1;
                    continue;
                }
                let numeric = (plus.loss - minus.loss) / (2.0 * cfg.step);
                let err = rel_err(grad.data()[coord], numeric);
                worst.checked += 1;
                if err > worst.max_rel_err {
                    worst.max_rel_err = err;
                    worst.worst_coord = coord;
                }
            }
            Ok(worst)
        })
        .collect();

    let mut per_tensor: Vec<TensorCheck> = Vec::new();
    let mut slot_entry: Vec<Option<usize>> = vec![None; params.len()];
    for r in results {
        let r = r?;
        let entry_idx = match slot_entry[r.slot] {
            Some(i) => i,
            None => {
                per_tensor.push(TensorCheck {
                    name: params.by_index(r.slot).name.clone(),
                    max_rel_err: 0.0,
                    worst_coord: 0,
                    checked: 0,
                    skipped_nondifferentiable: 0,
                });
                slot_entry[r.slot] = Some(per_tensor.len() - 1);
                per_tensor.len() - 1
            }
        };
        let e = &mut per_tensor[entry_idx];
        e.checked += r.checked;
        e.skipped_nondifferentiable += r.skipped;
        if r.max_rel_err > e.max_rel_err {
            e.max_rel_err = r.max_rel_err;
            e.worst_coord = r.worst_coord;
        }
    }
    per_tensor.sort_by(|a, b| b.max_rel_err.partial_cmp(&a.max_rel_err).unwrap());

    Ok(GradCheckReport {
        tolerance: cfg.tolerance,
        step: cfg.step,
        entries: per_tensor,
    })
}

/// Full-network gradient check: train-mode forward plus the complete
/// multi-scale loss (including the L2 term), all trainable parameters.
pub fn gradcheck_network(
    spec: &NetworkSpec,
    params: &NetworkParams<f64>,
    inputs: &[Tensor<f64>],
    labels: &IntGrid,
    loss_cfg: &LossConfig,
    cfg: &GradCheckConfig,
) -> VxResult<GradCheckReport> {
    let opts = ForwardOpts {
        mode: Mode::Train,
        zero_long_skips: false,
        track_decisions: true,
    };
    let build = |p: &NetworkParams<f64>, want_grads: bool| -> VxResult<(EvalOutput, Option<Vec<(usize, Tensor<f64>)>>)> {
        let mut pass = forward(spec, p, inputs, &opts)?;
        let reg_nodes: Vec<_> = pass
            .param_nodes
            .iter()
            .filter(|&&(idx, _)| p.by_index(idx).regularized)
            .map(|&(_, node)| node)
            .collect();
        let nodes = multiscale_loss_nodes(
            &mut pass.graph,
            &pass.branch_logits,
            labels,
            loss_cfg,
            &reg_nodes,
        )?;
        let out = EvalOutput {
            loss: pass.graph.value(nodes.total).item()?.cast_f64(),
            decisions: pass.graph.decision_hash(),
        };
        let grads = if want_grads {
            pass.graph.backward(nodes.total)?;
            Some(pass.graph.param_grads())
        } else {
            None
        };
        Ok((out, grads))
    };

    let (_, analytic) = build(params, true)?;
    let analytic = analytic.expect("gradients requested");
    gradcheck_params(
        params,
        &analytic,
        |p| build(p, false).map(|(out, _)| out),
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::net::{build_network, ParamTensor, StreamSpec};
    use crate::ops;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Single conv layer + softmax + cross-entropy, checked at 1e-5.
    #[test]
    fn single_conv_layer_passes_tight_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let mut params: NetworkParams<f64> = NetworkParams::new();
        let w = Tensor::from_fn(&[4, 1, 3, 3, 3], |_| rng.random_range(-0.3..0.3));
        let b = Tensor::from_fn(&[4], |_| rng.random_range(-0.1..0.1));
        params
            .push(ParamTensor {
                name: "w".into(),
                grad: Tensor::zeros(w.shape()),
                value: w,
                trainable: true,
                regularized: true,
            })
            .unwrap();
        params
            .push(ParamTensor {
                name: "b".into(),
                grad: Tensor::zeros(b.shape()),
                value: b,
                trainable: true,
                regularized: false,
            })
            .unwrap();
        let x = Tensor::from_fn(&[1, 1, 4, 4, 4], |_| rng.random_range(-1.0..1.0));
        let labels = IntGrid::new(
            vec![1, 4, 4, 4],
            (0..64).map(|_| rng.random_range(0..4u8)).collect(),
        )
        .unwrap();

        let build = |p: &NetworkParams<f64>, want: bool| {
            let mut g = Graph::with_decision_tracking();
            let xn = g.leaf(x.clone());
            let wn = g.param_leaf(p.get("w").unwrap().value.clone(), 0);
            let bn = g.param_leaf(p.get("b").unwrap().value.clone(), 1);
            let c = g.conv3d(xn, wn, bn).unwrap();
            let sm = g.softmax_channels(c).unwrap();
            let loss = g.cross_entropy_mean(sm, labels.clone()).unwrap();
            let out = EvalOutput {
                loss: g.value(loss).item().unwrap(),
                decisions: g.decision_hash(),
            };
            let grads = want.then(|| {
                g.backward(loss).unwrap();
                g.param_grads()
            });
            (out, grads)
        };
        let (_, grads) = build(&params, true);
        let cfg = GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-5,
            max_coords_per_tensor: None,
        };
        let report =
            gradcheck_params(&params, &grads.unwrap(), |p| Ok(build(p, false).0), &cfg).unwrap();
        assert!(report.pass(), "{report}");
    }

    /// A tied pool block: all inputs to the pool equal (zero conv weights,
    /// constant bias); perturbing a weight breaks the tie in one direction
    /// only, so those coordinates are flagged non-differentiable, not failed.
    #[test]
    fn maxpool_ties_are_excluded() {
        let mut params: NetworkParams<f64> = NetworkParams::new();
        params
            .push(ParamTensor {
                name: "w".into(),
                value: Tensor::zeros(&[1, 1, 3, 3, 3]),
                grad: Tensor::zeros(&[1, 1, 3, 3, 3]),
                trainable: true,
                regularized: false,
            })
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        let x = Tensor::from_fn(&[1, 1, 2, 2, 2], |_| rng.random_range(0.5..1.0));
        let build = |p: &NetworkParams<f64>, want: bool| {
            let mut g = Graph::with_decision_tracking();
            let xn = g.leaf(x.clone());
            let wn = g.param_leaf(p.get("w").unwrap().value.clone(), 0);
            let bias = g.leaf(Tensor::full(&[1], 1.0));
            let c = g.conv3d(xn, wn, bias).unwrap(); // all outputs == 1 at w == 0
            let (pool, loss) = {
                let pl = g.maxpool3d(c).unwrap();
                (pl, g.sum_squares(pl))
            };
            let _ = pool;
            let out = EvalOutput {
                loss: g.value(loss).item().unwrap(),
                decisions: g.decision_hash(),
            };
            let grads = want.then(|| {
                g.backward(loss).unwrap();
                g.param_grads()
            });
            (out, grads)
        };
        let (_, grads) = build(&params, true);
        let report = gradcheck_params(
            &params,
            &grads.unwrap(),
            |p| Ok(build(p, false).0),
            &GradCheckConfig::default(),
        )
        .unwrap();
        // every weight coordinate shifts exactly one competitor of an
        // 8-way tie, so each perturbation changes the argmax
        assert!(report.skipped_coords() > 0);
        assert!(report.max_rel_err() < 1e-4, "{report}");
    }

    /// Small two-stream network with batchnorm in train mode.
    #[test]
    fn tiny_network_with_batchnorm_passes() {
        let spec = NetworkSpec {
            streams: vec![
                StreamSpec {
                    name: "t1".into(),
                    in_channels: 1,
                },
                StreamSpec {
                    name: "t2".into(),
                    in_channels: 1,
                },
            ],
            levels: 1,
            base_channels: 2,
            num_classes: 4,
            num_branches: 1,
        };
        let params = build_network::<f64>(&spec, 33).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(93);
        let inputs: Vec<Tensor<f64>> = (0..2)
            .map(|_| Tensor::from_fn(&[1, 1, 4, 4, 4], |_| rng.random_range(-1.0..1.0)))
            .collect();
        let labels = IntGrid::new(
            vec![4, 4, 4],
            (0..64).map(|_| rng.random_range(0..4u8)).collect(),
        )
        .unwrap();
        let cfg = GradCheckConfig {
            step: 1e-4,
            tolerance: 1e-4,
            max_coords_per_tensor: Some(24),
        };
        let report = gradcheck_network(
            &spec,
            &params,
            &inputs,
            &labels,
            &LossConfig {
                alphas: vec![1.0],
                lambda: 0.005,
            },
            &cfg,
        )
        .unwrap();
        assert!(report.pass(), "{report}");
    }
}

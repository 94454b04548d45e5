//! Checkpoint file format and partial (name-filtered) loading.
//!
//! Layout, all little-endian:
//!   magic "VXSG1"
//!   u32 tensor count
//!   per tensor: u32 name length, name bytes (UTF-8), u8 dtype tag
//!               (0 = f32, 1 = f64), u32 rank, u64 x rank extents,
//!               raw values.
//!
//! Optimizer state rides along under reserved names: one
//! "optim/momentum/<param>" tensor per parameter plus "optim/iteration".

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::dtype::{Dtype, Scalar};
use crate::error::{VxError, VxResult};
use crate::glob::glob_match;
use crate::net::NetworkParams;
use crate::tensor::Tensor;
use crate::train::optim::{OptimConfig, OptimizerState};

const MAGIC: &[u8; 5] = b"VXSG1";
const MAX_NAME_LEN: u32 = 4096;
const MAX_RANK: u32 = 8;
const MAX_ELEMENTS: u64 = 1 << 33;

const OPTIM_PREFIX: &str = "optim/momentum/";
const OPTIM_ITERATION: &str = "optim/iteration";

/// One tensor as stored on disk.
#[derive(Debug, Clone)]
pub enum CkptData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct CkptTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: CkptData,
}

impl CkptTensor {
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data: Vec<T> = match &self.data {
            CkptData::F32(v) => v.iter().map(|&x| T::cast_from(x as f64)).collect(),
            CkptData::F64(v) => v.iter().map(|&x| T::cast_from(x)).collect(),
        };
        Tensor::new(self.shape.clone(), data).expect("shape validated on read")
    }

    /// Bit-exact when the stored and requested dtypes agree.
    pub fn dtype(&self) -> Dtype {
        match self.data {
            CkptData::F32(_) => Dtype::F32,
            CkptData::F64(_) => Dtype::F64,
        }
    }
}

fn write_tensor<W: Write, T: Scalar>(
    out: &mut W,
    name: &str,
    tensor: &Tensor<T>,
) -> std::io::Result<()> {
    out.write_u32::<LittleEndian>(name.len() as u32)?;
    out.write_all(name.as_bytes())?;
    out.write_u8(T::DTYPE.tag())?;
    out.write_u32::<LittleEndian>(tensor.rank() as u32)?;
    for &e in tensor.shape() {
        out.write_u64::<LittleEndian>(e as u64)?;
    }
    let mut buf = Vec::with_capacity(tensor.len() * T::DTYPE.size_bytes());
    for &v in tensor.data() {
        v.write_le(&mut buf);
    }
    out.write_all(&buf)
}

/// Saves every parameter tensor (including running statistics) and, when
/// given, the optimizer momentum buffers and iteration counter.
pub fn save_checkpoint<T: Scalar>(
    params: &NetworkParams<T>,
    optim: Option<&OptimizerState<T>>,
    path: &Path,
) -> VxResult<()> {
    let file = File::create(path).map_err(|e| VxError::io(path.display().to_string(), e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e: std::io::Error| VxError::io(path.display().to_string(), e);

    let count = params.len() + optim.map_or(0, |o| o.momentum_bufs.len() + 1);
    out.write_all(MAGIC).map_err(io_err)?;
    out.write_u32::<LittleEndian>(count as u32).map_err(io_err)?;
    for p in params.iter() {
        write_tensor(&mut out, &p.name, &p.value).map_err(io_err)?;
    }
    if let Some(state) = optim {
        for (idx, buf) in state.momentum_bufs.iter().enumerate() {
            let name = format!("{OPTIM_PREFIX}{}", params.by_index(idx).name);
            write_tensor(&mut out, &name, buf).map_err(io_err)?;
        }
        let iter_tensor = Tensor::<f64>::scalar(state.iteration as f64);
        write_tensor(&mut out, OPTIM_ITERATION, &iter_tensor).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Reads every tensor in a checkpoint file. Allocation is bounded by the
/// declared extents, which are validated before any buffer is created, and
/// a truncated file fails instead of returning partial data.
pub fn read_checkpoint(path: &Path) -> VxResult<Vec<CkptTensor>> {
    let file = File::open(path).map_err(|e| VxError::io(path.display().to_string(), e))?;
    let mut input = BufReader::new(file);
    let fmt = |m: String| VxError::format(path.display().to_string(), m);
    let io_err = |e: std::io::Error| VxError::io(path.display().to_string(), e);

    let mut magic = [0u8; 5];
    input.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(fmt(format!("bad magic {magic:?}, expected \"VXSG1\"")));
    }
    let count = input.read_u32::<LittleEndian>().map_err(io_err)?;
    let mut tensors = Vec::with_capacity(count.min(65536) as usize);
    for _ in 0..count {
        let name_len = input.read_u32::<LittleEndian>().map_err(io_err)?;
        if name_len > MAX_NAME_LEN {
            return Err(fmt(format!("tensor name length {name_len} exceeds limit")));
        }
        let mut name_bytes = vec![0u8; name_len as usize];
        input.read_exact(&mut name_bytes).map_err(io_err)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| fmt("tensor name is not UTF-8".into()))?;
        let tag = input.read_u8().map_err(io_err)?;
        let dtype = Dtype::from_tag(tag)
            .ok_or_else(|| fmt(format!("unknown dtype tag {tag} for '{name}'")))?;
        let rank = input.read_u32::<LittleEndian>().map_err(io_err)?;
        if rank > MAX_RANK {
            return Err(fmt(format!("rank {rank} exceeds limit for '{name}'")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut elements: u64 = 1;
        for _ in 0..rank {
            let e = input.read_u64::<LittleEndian>().map_err(io_err)?;
            if e == 0 {
                return Err(fmt(format!("zero extent in '{name}'")));
            }
            elements = elements.saturating_mul(e);
            shape.push(e as usize);
        }
        if elements > MAX_ELEMENTS {
            return Err(fmt(format!("'{name}' declares {elements} elements")));
        }
        let n = elements as usize;
        let mut raw = vec![0u8; n * dtype.size_bytes()];
        input.read_exact(&mut raw).map_err(io_err)?;
        let data = match dtype {
            Dtype::F32 => CkptData::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            Dtype::F64 => CkptData::F64(
                raw.chunks_exact(8)
                    .map(|c| {
                        f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]])
                    })
                    .collect(),
            ),
        };
        tensors.push(CkptTensor { name, shape, data });
    }
    Ok(tensors)
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub loaded: Vec<String>,
    /// (name, reason) for filter matches that could not be applied.
    pub skipped: Vec<(String, String)>,
}

impl LoadReport {
    pub fn loaded_count(&self) -> usize {
        self.loaded.len()
    }
}

/// Overwrites every parameter whose name matches `name_filter` and whose
/// shape agrees with the stored tensor; everything else keeps its current
/// (e.g. freshly initialized) value. Shape mismatches are skipped and
/// reported, not fatal.
pub fn load_checkpoint_partial<T: Scalar>(
    path: &Path,
    params: &mut NetworkParams<T>,
    name_filter: &str,
) -> VxResult<LoadReport> {
    let tensors = read_checkpoint(path)?;
    let mut report = LoadReport::default();
    for t in tensors {
        if t.name.starts_with("optim/") || !glob_match(name_filter, &t.name) {
            continue;
        }
        match params.get_mut(&t.name) {
            Some(p) => {
                if p.value.shape() == t.shape.as_slice() {
                    p.value = t.to_tensor();
                    report.loaded.push(t.name);
                } else {
                    report.skipped.push((
                        t.name.clone(),
                        format!(
                            "shape mismatch: file {:?} vs store {:?}",
                            t.shape,
                            p.value.shape()
                        ),
                    ));
                }
            }
            None => report
                .skipped
                .push((t.name.clone(), "no such parameter in store".into())),
        }
    }
    if report.loaded.is_empty() {
        log::warn!("checkpoint filter '{name_filter}' matched no loadable tensors in {path:?}");
    }
    Ok(report)
}

/// Restores momentum buffers and the iteration counter for a resume.
pub fn load_optimizer_state<T: Scalar>(
    path: &Path,
    params: &NetworkParams<T>,
    config: OptimConfig,
) -> VxResult<OptimizerState<T>> {
    let tensors = read_checkpoint(path)?;
    let mut state = OptimizerState::new(params, config)?;
    let mut found_any = false;
    for t in &tensors {
        if t.name == OPTIM_ITERATION {
            state.iteration = t.to_tensor::<f64>().item()?.cast_f64() as u64;
            found_any = true;
        } else if let Some(pname) = t.name.strip_prefix(OPTIM_PREFIX) {
            if let Some(idx) = params.index_of(pname) {
                if state.momentum_bufs[idx].shape() == t.shape.as_slice() {
                    state.momentum_bufs[idx] = t.to_tensor();
                    found_any = true;
                }
            }
        }
    }
    if !found_any {
        return Err(VxError::Checkpoint(format!(
            "{} holds no optimizer state to resume from",
            path.display()
        )));
    }
    Ok(state)
}

//! Named parameter store. Names partition into the main network ("main/…")
//! and the per-scale classifier branches ("branch{m}/…").

use std::collections::HashMap;

use crate::dtype::Scalar;
use crate::error::{VxError, VxResult};
use crate::tensor::Tensor;

/// Role of a parameter tensor; decides initialization, trainability and
/// whether weight decay / L2 regularization applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Convolution / classifier weight (He-initialized, decayed, regularized).
    ConvWeight { fan_in: usize },
    Bias,
    BnGamma,
    BnBeta,
    BnRunningMean,
    BnRunningVar,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::BnRunningMean | ParamKind::BnRunningVar)
    }

    /// Only plain weights are pulled by weight decay and the L2 term;
    /// biases and batchnorm affine parameters are exempt.
    pub fn regularized(self) -> bool {
        matches!(self, ParamKind::ConvWeight { .. })
    }
}

#[derive(Debug, Clone)]
pub struct ParamTensor<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub trainable: bool,
    pub regularized: bool,
}

#[derive(Debug, Clone)]
pub struct NetworkParams<T> {
    entries: Vec<ParamTensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> NetworkParams<T> {
    pub fn new() -> Self {
        NetworkParams {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn push(&mut self, param: ParamTensor<T>) -> VxResult<usize> {
        if self.index.contains_key(&param.name) {
            return Err(VxError::InvalidArgument(format!(
                "duplicate parameter name '{}'",
                param.name
            )));
        }
        if param.value.shape() != param.grad.shape() {
            return Err(VxError::ShapeMismatch {
                context: format!("parameter '{}' value vs grad", param.name),
                lhs: param.value.shape().to_vec(),
                rhs: param.grad.shape().to_vec(),
            });
        }
        let idx = self.entries.len();
        self.index.insert(param.name.clone(), idx);
        self.entries.push(param);
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor<T>> {
        let i = *self.index.get(name)?;
        Some(&mut self.entries[i])
    }

    pub fn by_index(&self, idx: usize) -> &ParamTensor<T> {
        &self.entries[idx]
    }

    pub fn by_index_mut(&mut self, idx: usize) -> &mut ParamTensor<T> {
        &mut self.entries[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor<T>> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor<T>> {
        self.entries.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.entries {
            for g in p.grad.data_mut() {
                *g = T::zero();
            }
        }
    }

    /// Writes gradients produced by a backward pass, keyed by slot index.
    pub fn set_grads(&mut self, grads: Vec<(usize, Tensor<T>)>) {
        for (idx, g) in grads {
            self.entries[idx].grad = g;
        }
    }

    pub fn trainable_scalar_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    /// Sum of squared values over all regularized weights.
    pub fn regularized_sq_norm(&self) -> f64 {
        self.entries
            .iter()
            .filter(|p| p.regularized)
            .flat_map(|p| p.value.data().iter())
            .map(|v| v.cast_f64() * v.cast_f64())
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        let mut out = NetworkParams::new();
        for p in &self.entries {
            out.push(ParamTensor {
                name: p.name.clone(),
                value: p.value.cast(),
                grad: p.grad.cast(),
                trainable: p.trainable,
                regularized: p.regularized,
            })
            .expect("names already unique");
        }
        out
    }
}

impl<T: Scalar> Default for NetworkParams<T> {
    fn default() -> Self {
        Self::new()
    }
}

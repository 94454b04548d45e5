//! Dense N-dimensional tensors: contiguous row-major storage, last axis
//! fastest. 5-D activations use the (batch, channels, depth, height, width)
//! axis order throughout the crate.

use crate::dtype::Scalar;
use crate::error::{VxError, VxResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> VxResult<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(VxError::InvalidArgument(format!(
                "tensor extents must all be >= 1, got {shape:?}"
            )));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(VxError::InvalidArgument(format!(
                "shape {shape:?} implies {len} elements, buffer has {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..len).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Single element of a shape-`[1]` tensor.
    pub fn item(&self) -> VxResult<T> {
        if self.data.len() != 1 {
            return Err(VxError::InvalidArgument(format!(
                "item() requires a scalar tensor, shape is {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    /// Interprets the shape as (N, C, D, H, W).
    pub fn dims5(&self) -> VxResult<[usize; 5]> {
        match self.shape.as_slice() {
            &[n, c, d, h, w] => Ok([n, c, d, h, w]),
            _ => Err(VxError::InvalidArgument(format!(
                "expected a rank-5 tensor, shape is {:?}",
                self.shape
            ))),
        }
    }

    pub fn dims3(&self) -> VxResult<[usize; 3]> {
        match self.shape.as_slice() {
            &[d, h, w] => Ok([d, h, w]),
            _ => Err(VxError::InvalidArgument(format!(
                "expected a rank-3 tensor, shape is {:?}",
                self.shape
            ))),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshaped(&self, shape: &[usize]) -> VxResult<Tensor<T>> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(VxError::ShapeMismatch {
                context: "reshape".into(),
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::cast_from(v.cast_f64())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a.cast_f64() - b.cast_f64()).abs())
            .fold(0.0, f64::max)
    }
}

/// Integer label grid, values in `0..num_classes` (4 tissue classes here:
/// background, CSF, GM, WM). Shares the row-major layout of [`Tensor`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntGrid {
    shape: Vec<usize>,
    data: Vec<u8>,
}

impl IntGrid {
    pub fn new(shape: Vec<usize>, data: Vec<u8>) -> VxResult<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(VxError::InvalidArgument(format!(
                "grid extents must all be >= 1, got {shape:?}"
            )));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(VxError::InvalidArgument(format!(
                "shape {shape:?} implies {len} elements, buffer has {}",
                data.len()
            )));
        }
        Ok(IntGrid { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        IntGrid {
            shape: shape.to_vec(),
            data: vec![0u8; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dims3(&self) -> VxResult<[usize; 3]> {
        match self.shape.as_slice() {
            &[d, h, w] => Ok([d, h, w]),
            _ => Err(VxError::InvalidArgument(format!(
                "expected a rank-3 grid, shape is {:?}",
                self.shape
            ))),
        }
    }

    pub fn validate_labels(&self, num_classes: usize) -> VxResult<()> {
        for &v in &self.data {
            if (v as usize) >= num_classes {
                return Err(VxError::LabelOutOfRange {
                    value: v,
                    num_classes,
                });
            }
        }
        Ok(())
    }

    /// Count of voxels carrying each label in `0..num_classes`.
    pub fn histogram(&self, num_classes: usize) -> Vec<usize> {
        let mut h = vec![0usize; num_classes];
        for &v in &self.data {
            if (v as usize) < num_classes {
                h[v as usize] += 1;
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_length_must_agree() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn dims5_rejects_wrong_rank() {
        let t = Tensor::<f32>::zeros(&[2, 3, 4]);
        assert!(t.dims5().is_err());
        assert_eq!(t.dims3().unwrap(), [2, 3, 4]);
    }

    #[test]
    fn label_validation() {
        let g = IntGrid::new(vec![2, 2], vec![0, 1, 2, 3]).unwrap();
        assert!(g.validate_labels(4).is_ok());
        assert!(g.validate_labels(3).is_err());
        assert_eq!(g.histogram(4), vec![1, 1, 1, 1]);
    }
}

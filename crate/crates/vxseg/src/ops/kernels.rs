//! Inner-loop primitives shared by the layer kernels.
//!
//! Reduction order is fixed in source (8 independent lanes combined in a
//! fixed tree) so results are bit-reproducible across runs and thread
//! counts while still autovectorizing.

use crate::dtype::Scalar;

/// y[i] += a * x[i]
#[inline]
pub fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x.iter()) {
        *yi += a * xi;
    }
}

/// Dot product with a fixed 8-lane accumulation tree.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [T::zero(); 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let (pa, pb) = (&a[i * 8..i * 8 + 8], &b[i * 8..i * 8 + 8]);
        for l in 0..8 {
            lanes[l] += pa[l] * pb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    let s01 = lanes[0] + lanes[1];
    let s23 = lanes[2] + lanes[3];
    let s45 = lanes[4] + lanes[5];
    let s67 = lanes[6] + lanes[7];
    ((s01 + s23) + (s45 + s67)) + tail
}

/// Sum with the same fixed 8-lane tree as [`dot`].
#[inline]
pub fn sum<T: Scalar>(a: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let p = &a[i * 8..i * 8 + 8];
        for l in 0..8 {
            lanes[l] += p[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i];
    }
    let s01 = lanes[0] + lanes[1];
    let s23 = lanes[2] + lanes[3];
    let s45 = lanes[4] + lanes[5];
    let s67 = lanes[6] + lanes[7];
    ((s01 + s23) + (s45 + s67)) + tail
}

/// Sum of squared differences against a constant, 8-lane tree.
#[inline]
pub fn sum_sq_diff<T: Scalar>(a: &[T], c: T) -> T {
    let mut lanes = [T::zero(); 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let p = &a[i * 8..i * 8 + 8];
        for l in 0..8 {
            let d = p[l] - c;
            lanes[l] += d * d;
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        let d = a[i] - c;
        tail += d * d;
    }
    let s01 = lanes[0] + lanes[1];
    let s23 = lanes[2] + lanes[3];
    let s45 = lanes[4] + lanes[5];
    let s67 = lanes[6] + lanes[7];
    ((s01 + s23) + (s45 + s67)) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_scalar_loop() {
        let a: Vec<f64> = (0..37).map(|i| (i as f64) * 0.37 - 2.0).collect();
        let b: Vec<f64> = (0..37).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn sum_matches_scalar_loop() {
        let a: Vec<f32> = (0..101).map(|i| (i as f32).sin()).collect();
        let naive: f32 = a.iter().sum();
        assert!((sum(&a) - naive).abs() < 1e-4);
    }
}

//! Dense row-major tensors.
//!
//! The engine runs in `f32`. Every operation is generic over [`Element`] so
//! that gradient checks can re-run the same code path in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;

/// Scalar element type of a tensor.
pub trait Element:
    Float
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    fn of(x: f64) -> Self;
    fn widen(self) -> f64;
}

impl Element for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn widen(self) -> f64 {
        self
    }
}

/// Extents of a tensor, outermost first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidShape(dims));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidShape(dims.clone()))?;
        Ok(Self(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = Error;
    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Shape::new(dims)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(s: Shape) -> Self {
        s.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn fill(dims: &[usize], value: T) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = vec![value; shape.numel()];
        Ok(Self { shape, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::fill(dims, T::zero())
    }

    pub fn zeros_like(other: &Tensor<T>) -> Self {
        Self {
            shape: other.shape.clone(),
            data: vec![T::zero(); other.data.len()],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::ShapeMismatch {
                context: "from_vec",
                expected: shape.0,
                actual: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    /// Identity matrix of size `n`.
    pub fn eye(n: usize) -> Result<Self> {
        let mut t = Self::zeros(&[n, n])?;
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        Ok(t)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Same data, new shape. Element count must be preserved.
    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.data.len() {
            return Err(Error::ShapeMismatch {
                context: "reshape",
                expected: self.shape.0,
                actual: shape.0,
            });
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::of(x.widen())).collect(),
        }
    }

    pub(crate) fn ensure_same_shape(&self, other: &Tensor<T>, context: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context,
                expected: self.shape.0.clone(),
                actual: other.shape.0.clone(),
            });
        }
        Ok(())
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        self.ensure_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for a in &mut self.data {
            *a *= factor;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Index of the maximum of a rank-1 tensor; ties go to the lowest index.
    pub fn argmax(&self) -> Result<usize> {
        if self.shape.rank() != 1 {
            return Err(Error::InvalidArgument(format!(
                "argmax expects a rank-1 tensor, got shape {:?}",
                self.dims()
            )));
        }
        argmax(&self.data).ok_or(Error::Empty("argmax"))
    }

    /// Standard matrix product, accumulated row-major.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Self> {
        let (&[m, k], &[k2, n]) = (self.dims(), other.dims()) else {
            return Err(Error::InvalidArgument(format!(
                "matmul expects rank-2 operands, got {:?} and {:?}",
                self.dims(),
                other.dims()
            )));
        };
        if k != k2 {
            return Err(Error::ShapeMismatch {
                context: "matmul inner dimension",
                expected: vec![k],
                actual: vec![k2],
            });
        }
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Self::from_vec(&[m, n], out)
    }
}

impl Tensor<f32> {
    /// Uniform samples in `[lo, hi)` drawn from `rng`.
    pub fn seeded_uniform(dims: &[usize], lo: f32, hi: f32, rng: &mut RngState) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "seeded_uniform requires finite lo < hi, got [{lo}, {hi})"
            )));
        }
        let shape = Shape::new(dims)?;
        let span = hi - lo;
        let data = (0..shape.numel())
            .map(|_| {
                let v = lo + span * rng.next_f32();
                if v >= hi {
                    hi.next_down()
                } else {
                    v
                }
            })
            .collect();
        Ok(Self { shape, data })
    }
}

/// Index of the largest value, lowest index on ties. `None` when empty.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut iter = values.iter().enumerate();
    let (mut best, mut best_val) = iter.next().map(|(i, &v)| (i, v))?;
    for (i, &v) in iter {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fill_examples() {
        let t = Tensor::<f32>::fill(&[2, 2], 0.0).unwrap();
        assert_eq!(t.as_slice(), &[0.0; 4]);
        let t = Tensor::<f32>::fill(&[3], 1.5).unwrap();
        assert_eq!(t.as_slice(), &[1.5; 3]);
        let t = Tensor::<f32>::fill(&[1, 1, 1], -1.0).unwrap();
        assert_eq!(t.dims(), &[1, 1, 1]);
        assert_eq!(t.as_slice(), &[-1.0]);
    }

    #[test]
    fn fill_rejects_zero_extent() {
        assert!(matches!(
            Tensor::<f32>::fill(&[2, 0], 1.0),
            Err(Error::InvalidShape(_))
        ));
        assert!(Tensor::<f32>::fill(&[], 1.0).is_err());
    }

    #[test]
    fn matmul_examples() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let i = Tensor::<f32>::eye(2).unwrap();
        assert_eq!(i.matmul(&a).unwrap(), a);

        let row = Tensor::from_vec(&[1, 2], vec![1.0f32, 2.0]).unwrap();
        let col = Tensor::from_vec(&[2, 1], vec![3.0f32, 4.0]).unwrap();
        assert_eq!(row.matmul(&col).unwrap().as_slice(), &[11.0]);

        let a = Tensor::<f32>::zeros(&[3, 5]).unwrap();
        let b = Tensor::<f32>::zeros(&[5, 2]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().dims(), &[3, 2]);
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = Tensor::<f32>::zeros(&[3, 4]).unwrap();
        let b = Tensor::<f32>::zeros(&[5, 2]).unwrap();
        assert!(matches!(a.matmul(&b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn argmax_examples() {
        let t = |v: Vec<f32>| Tensor::from_vec(&[v.len()], v).unwrap();
        assert_eq!(t(vec![0.1, 0.7, 0.2]).argmax().unwrap(), 1);
        assert_eq!(t(vec![0.5, 0.5]).argmax().unwrap(), 0);
        assert_eq!(t(vec![3.0]).argmax().unwrap(), 0);
        assert_eq!(argmax::<f32>(&[]), None);
    }

    #[test]
    fn seeded_uniform_examples() {
        let a = Tensor::seeded_uniform(&[64], 0.0, 1.0, &mut RngState::new(7)).unwrap();
        let b = Tensor::seeded_uniform(&[64], 0.0, 1.0, &mut RngState::new(7)).unwrap();
        assert_eq!(
            a.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert!(a.as_slice().iter().all(|&x| (0.0..1.0).contains(&x)));

        let big = Tensor::seeded_uniform(&[100_000], -1.0, 1.0, &mut RngState::new(1)).unwrap();
        let mean = big.as_slice().iter().map(|&x| x as f64).sum::<f64>() / 1e5;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn seeded_uniform_rejects_empty_interval() {
        let mut rng = RngState::new(0);
        assert!(Tensor::seeded_uniform(&[2], 1.0, 1.0, &mut rng).is_err());
        assert!(Tensor::seeded_uniform(&[2], 2.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn reshape_preserves_order() {
        let t = Tensor::from_vec(&[2, 3], vec![1.0f32, 2., 3., 4., 5., 6.]).unwrap();
        let r = t.clone().reshape(&[3, 2]).unwrap();
        assert_eq!(r.as_slice(), t.as_slice());
        assert!(t.reshape(&[4]).is_err());
    }

    proptest! {
        #[test]
        fn identity_is_neutral(m in 1usize..6, n in 1usize..6, seed in any::<u64>()) {
            let a = Tensor::seeded_uniform(&[m, n], -3.0, 3.0, &mut RngState::new(seed)).unwrap();
            prop_assert_eq!(Tensor::eye(m).unwrap().matmul(&a).unwrap(), a.clone());
            prop_assert_eq!(a.matmul(&Tensor::eye(n).unwrap()).unwrap(), a);
        }

        #[test]
        fn argmax_shift_and_scale_invariant(
            v in prop::collection::vec(-100.0f32..100.0, 1..20),
            c in -50.0f32..50.0,
            s in 0.1f32..10.0,
        ) {
            let base = argmax(&v).unwrap();
            // Shifting can merge near-equal values in f32; only assert when
            // the transformed values keep the same strict ordering.
            let shifted: Vec<f32> = v.iter().map(|x| x + c).collect();
            let scaled: Vec<f32> = v.iter().map(|x| x * s).collect();
            let distinct = |w: &[f32]| {
                let mut u = w.to_vec();
                u.sort_by(f32::total_cmp);
                u.windows(2).all(|p| p[0] < p[1])
            };
            if distinct(&v) && distinct(&shifted) {
                prop_assert_eq!(argmax(&shifted).unwrap(), base);
            }
            if distinct(&v) && distinct(&scaled) {
                prop_assert_eq!(argmax(&scaled).unwrap(), base);
            }
        }

        #[test]
        fn seeded_uniform_is_pure(seed in any::<u64>(), n in 1usize..50) {
            let a = Tensor::seeded_uniform(&[n], -2.0, 5.0, &mut RngState::new(seed)).unwrap();
            let b = Tensor::seeded_uniform(&[n], -2.0, 5.0, &mut RngState::new(seed)).unwrap();
            prop_assert_eq!(a.clone(), b);
            prop_assert!(a.as_slice().iter().all(|&x| (-2.0..5.0).contains(&x)));
        }
    }
}

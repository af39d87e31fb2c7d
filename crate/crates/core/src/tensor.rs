//! Dense row-major `f64` tensors.
//!
//! Tensors are plain values: every operation returns a fresh tensor and
//! never mutates its arguments, so a tensor can be shared freely between
//! worker threads.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Elementwise binary operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

/// Right-hand operand of [`Tensor::elementwise`].
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Tensor(&'a Tensor),
    Scalar(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Max,
    ArgMax,
    Mean,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() || shape.contains(&0) {
            return Err(Error::InvalidShape {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    /// Builds a tensor from a shape that is known to match the buffer.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn elementwise(&self, op: BinaryOp, rhs: Operand<'_>) -> Result<Tensor> {
        let data = match rhs {
            Operand::Tensor(other) => {
                self.check_same_shape(other)?;
                self.data
                    .iter()
                    .zip(&other.data)
                    .map(|(&a, &b)| apply(op, a, b))
                    .collect()
            }
            Operand::Scalar(b) => self.data.iter().map(|&a| apply(op, a, b)).collect(),
        };
        Ok(Self::from_parts(self.shape.clone(), data))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(BinaryOp::Add, Operand::Tensor(other))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(BinaryOp::Sub, Operand::Tensor(other))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(BinaryOp::Mul, Operand::Tensor(other))
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        Self::from_parts(
            self.shape.clone(),
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    /// Full reduction to a scalar. `ArgMax` yields the flat index of the
    /// first maximal entry, as an `f64`.
    pub fn reduce_all(&self, op: Reduction) -> Result<f64> {
        if self.data.is_empty() {
            return Err(Error::EmptyTensor);
        }
        Ok(reduce_slice(op, self.data.iter().copied()))
    }

    /// Reduces along `axis`, dropping it from the shape. A rank-1 input
    /// reduces to a one-element tensor of shape `[1]`.
    pub fn reduce_axis(&self, op: Reduction, axis: usize) -> Result<Tensor> {
        let rank = self.shape.len();
        if axis >= rank {
            return Err(Error::AxisOutOfRange { axis, rank });
        }
        if self.data.is_empty() {
            return Err(Error::EmptyTensor);
        }
        let outer: usize = self.shape[..axis].iter().product();
        let extent = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let base = o * extent * inner + i;
                out.push(reduce_slice(
                    op,
                    (0..extent).map(|k| self.data[base + k * inner]),
                ));
            }
        }
        let mut shape: Vec<usize> = self.shape.clone();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        Ok(Self::from_parts(shape, out))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn argmax(&self) -> Result<usize> {
        self.reduce_all(Reduction::ArgMax).map(|v| v as usize)
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }
}

fn apply(op: BinaryOp, a: f64, b: f64) -> f64 {
    match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
    }
}

fn reduce_slice(op: Reduction, values: impl Iterator<Item = f64>) -> f64 {
    match op {
        Reduction::Sum => values.sum(),
        Reduction::Mean => {
            let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
            sum / count as f64
        }
        Reduction::Max => values.fold(f64::NEG_INFINITY, f64::max),
        Reduction::ArgMax => {
            let mut best = (0usize, f64::NEG_INFINITY);
            for (i, v) in values.enumerate() {
                // strict comparison keeps the lowest index on ties
                if v > best.1 {
                    best = (i, v);
                }
            }
            best.0 as f64
        }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor{:?}", self.shape)?;
        let head: Vec<_> = self.data.iter().take(SHOWN).collect();
        write!(f, "{head:?}")?;
        if self.data.len() > SHOWN {
            write!(f, "..")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn add_and_scale() {
        let a = t(&[2], &[1.0, 2.0]);
        let b = t(&[2], &[3.0, 4.0]);
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(a.scale(0.0).data(), &[0.0, 0.0]);
        let sum = a.elementwise(BinaryOp::Add, Operand::Scalar(1.0)).unwrap();
        assert_eq!(sum.data(), &[2.0, 3.0]);
    }

    #[test]
    fn sub_self_is_zero() {
        let x = t(&[3, 3], &[0.3, -1.2, 5.0, 2.2, 0.0, 1e-3, -7.5, 3.3, 9.9]);
        assert!(x.sub(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[3, 2]);
        match a.add(&b) {
            Err(Error::ShapeMismatch { left, right }) => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![3, 2]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reductions() {
        let a = t(&[3], &[1.0, 2.0, 3.0]);
        assert_eq!(a.reduce_all(Reduction::Sum).unwrap(), 6.0);
        assert_eq!(t(&[3], &[0.0, 5.0, 5.0]).argmax().unwrap(), 1);
        assert_eq!(
            t(&[3], &[2.0, 4.0, 6.0])
                .reduce_all(Reduction::Mean)
                .unwrap(),
            4.0
        );
        assert_eq!(a.reduce_all(Reduction::Max).unwrap(), 3.0);
    }

    #[test]
    fn axis_reduction() {
        let m = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(
            m.reduce_axis(Reduction::Sum, 0).unwrap().data(),
            &[5.0, 7.0, 9.0]
        );
        assert_eq!(
            m.reduce_axis(Reduction::Mean, 1).unwrap().data(),
            &[2.0, 5.0]
        );
        assert_eq!(
            m.reduce_axis(Reduction::ArgMax, 1).unwrap().data(),
            &[2.0, 2.0]
        );
        assert!(matches!(
            m.reduce_axis(Reduction::Sum, 2),
            Err(Error::AxisOutOfRange { axis: 2, rank: 2 })
        ));
    }

    #[test]
    fn rejects_inconsistent_or_empty() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
        let empty = Tensor::vector(vec![]);
        assert!(matches!(
            empty.reduce_all(Reduction::Sum),
            Err(Error::EmptyTensor)
        ));
    }

    proptest! {
        #[test]
        fn add_then_sub_roundtrips(
            pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..64)
        ) {
            let a = Tensor::vector(pairs.iter().map(|p| p.0).collect());
            let b = Tensor::vector(pairs.iter().map(|p| p.1).collect());
            let back = a.add(&b).unwrap().sub(&b).unwrap();
            for (x, y) in back.data().iter().zip(a.data()) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }

        #[test]
        fn reductions_invariant_under_permutation(
            values in prop::collection::vec(-1e3f64..1e3, 1..64),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = values.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = Tensor::vector(values);
            let b = Tensor::vector(shuffled);
            let (sa, sb) = (a.sum(), b.sum());
            prop_assert!((sa - sb).abs() <= 1e-9 * (1.0 + sa.abs()));
            prop_assert_eq!(
                a.reduce_all(Reduction::Max).unwrap(),
                b.reduce_all(Reduction::Max).unwrap()
            );
        }
    }
}

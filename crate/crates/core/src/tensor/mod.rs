//! Dense row-major `f64` tensors, the reverse-mode tape, and the
//! finite-difference gradient oracle.
//!
//! Every method on [`Tensor`] is a pure forward computation. The same
//! kernels back both the eager [`Eager`] executor and the recording
//! [`GradTape`]; model code is written once against [`Ops`].

mod gradcheck;
pub mod io;
mod ops;
mod tape;

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub use gradcheck::{check_tape_gradients, finite_diff_grad, max_rel_error, rel_error, GRAD_REL_FLOOR};
pub use ops::{Eager, Ops};
pub use tape::{GradTape, Gradients, Var};

/// Additive score used for masked attention positions. At 64-bit precision
/// `exp(-1e30 - max)` underflows to exactly zero.
pub const MASK_NEG: f64 = -1e30;

#[derive(Clone, Debug)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "dimensions must be positive".into(),
        });
    }
    Ok(())
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("expected {n} elements, got {}", data.len()),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
            grad: None,
        })
    }

    /// Internal constructor for shapes already known to be consistent.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![value; n])
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(vec![1], vec![value])
    }

    pub fn vector(data: &[f64]) -> Self {
        Self::from_parts(vec![data.len()], data.to_vec())
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::new(&[m, n], rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        Self::from_parts(shape.to_vec(), data)
    }

    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        Self::from_parts(shape.to_vec(), data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
        if !on {
            self.grad = None;
        }
    }

    pub fn with_requires_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub(crate) fn set_grad(&mut self, grad: Vec<f64>) {
        debug_assert_eq!(grad.len(), self.data.len());
        self.grad = Some(grad);
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: "expected a single element".into(),
            });
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[m, n] => Ok((m, n)),
            _ => Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: "expected a matrix".into(),
            }),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.cols();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::shape("max_abs_diff", &self.shape, &other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        check_shape(shape)?;
        if shape.iter().product::<usize>() != self.numel() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Self::from_parts(shape.to_vec(), self.data.clone()))
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_parts(vec![m, n], out))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self::from_parts(vec![n, m], out))
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_parts(self.shape.clone(), data))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    /// `out[i][j] = self[i][j] + row[j]`.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        if row.numel() != n {
            return Err(Error::shape("add_row", &self.shape, &row.shape));
        }
        let mut out = self.data.clone();
        for i in 0..m {
            for (o, r) in out[i * n..(i + 1) * n].iter_mut().zip(&row.data) {
                *o += r;
            }
        }
        Ok(Self::from_parts(vec![m, n], out))
    }

    /// `out[i][j] = self[i][j] * row[j]`.
    pub fn mul_row(&self, row: &Tensor) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        if row.numel() != n {
            return Err(Error::shape("mul_row", &self.shape, &row.shape));
        }
        let mut out = self.data.clone();
        for i in 0..m {
            for (o, r) in out[i * n..(i + 1) * n].iter_mut().zip(&row.data) {
                *o *= r;
            }
        }
        Ok(Self::from_parts(vec![m, n], out))
    }

    /// `out[i][j] = self[i][j] * col[i]`.
    pub fn mul_col(&self, col: &Tensor) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        if col.numel() != m {
            return Err(Error::shape("mul_col", &self.shape, &col.shape));
        }
        let mut out = self.data.clone();
        for (i, c) in col.data.iter().enumerate() {
            out[i * n..(i + 1) * n].iter_mut().for_each(|o| *o *= c);
        }
        Ok(Self::from_parts(vec![m, n], out))
    }

    /// `out[i][j] = self[i][j] / col[i]`.
    pub fn div_col(&self, col: &Tensor) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        if col.numel() != m {
            return Err(Error::shape("div_col", &self.shape, &col.shape));
        }
        let mut out = self.data.clone();
        for (i, c) in col.data.iter().enumerate() {
            out[i * n..(i + 1) * n].iter_mut().for_each(|o| *o /= c);
        }
        Ok(Self::from_parts(vec![m, n], out))
    }

    /// Multiplies every element by the value of a single-element tensor.
    pub fn mul_scalar(&self, s: &Tensor) -> Result<Tensor> {
        if s.numel() != 1 {
            return Err(Error::shape("mul_scalar", &self.shape, &s.shape));
        }
        Ok(self.scale(s.data[0]))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&self) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        let mut out = self.data.clone();
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        Ok(Self::from_parts(vec![m, n], out))
    }

    pub fn log_softmax_rows(&self) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        let mut out = self.data.clone();
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        Ok(Self::from_parts(vec![m, n], out))
    }

    pub fn silu(&self) -> Tensor {
        self.map(|x| x * sigmoid(x))
    }

    pub fn elu_plus_one(&self) -> Tensor {
        self.map(|x| if x > 0.0 { x + 1.0 } else { x.exp() })
    }

    pub fn relu(&self) -> Tensor {
        self.map(|x| x.max(0.0))
    }

    /// Euclidean norm of each row; `[n, d] -> [n]`.
    pub fn l2_norm_rows(&self) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        let out = (0..m)
            .map(|i| self.data[i * n..(i + 1) * n].iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        Ok(Self::from_parts(vec![m], out))
    }

    /// Per-row standardization `(x - mean) / sqrt(var + eps)` without affine terms.
    pub fn layer_norm_rows(&self, eps: f64) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        let mut out = self.data.clone();
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
        }
        Ok(Self::from_parts(vec![m, n], out))
    }

    pub fn sum(&self) -> Tensor {
        Self::scalar(self.data.iter().sum())
    }

    /// Sum over rows; `[m, n] -> [n]`.
    pub fn sum_cols(&self) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        let mut out = vec![0.0; n];
        for i in 0..m {
            for (o, v) in out.iter_mut().zip(&self.data[i * n..(i + 1) * n]) {
                *o += v;
            }
        }
        Ok(Self::from_parts(vec![n], out))
    }

    pub fn slice(&self, rows: Range<usize>, cols: Range<usize>) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        if rows.start >= rows.end || cols.start >= cols.end || rows.end > m || cols.end > n {
            return Err(Error::InvalidArgument(format!(
                "slice {rows:?}x{cols:?} out of range for {:?}",
                self.shape
            )));
        }
        let w = cols.end - cols.start;
        let mut out = Vec::with_capacity(rows.len() * w);
        for i in rows.clone() {
            out.extend_from_slice(&self.data[i * n + cols.start..i * n + cols.end]);
        }
        Ok(Self::from_parts(vec![rows.len(), w], out))
    }

    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let (_, n) = first.dims2()?;
        let mut m = 0;
        let mut data = Vec::new();
        for p in parts {
            let (pm, pn) = p.dims2()?;
            if pn != n {
                return Err(Error::shape("concat_rows", &first.shape, &p.shape));
            }
            m += pm;
            data.extend_from_slice(&p.data);
        }
        Ok(Self::from_parts(vec![m, n], data))
    }

    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let (m, _) = first.dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (pm, pn) = p.dims2()?;
            if pm != m {
                return Err(Error::shape("concat_cols", &first.shape, &p.shape));
            }
            widths.push(pn);
        }
        let n: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.data[i * w..(i + 1) * w]);
            }
        }
        Ok(Self::from_parts(vec![m, n], data))
    }

    /// Flat element gather; returns a `[idx.len()]` vector.
    pub fn gather(&self, idx: &[usize]) -> Result<Tensor> {
        let mut out = Vec::with_capacity(idx.len());
        for &i in idx {
            out.push(*self.data.get(i).ok_or_else(|| {
                Error::InvalidArgument(format!("gather index {i} out of range for {:?}", self.shape))
            })?);
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("gather of zero elements".into()));
        }
        Ok(Self::from_parts(vec![out.len()], out))
    }

    pub fn gather_rows(&self, idx: &[usize]) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        if idx.is_empty() || idx.iter().any(|&i| i >= m) {
            return Err(Error::InvalidArgument(format!(
                "row indices {idx:?} invalid for {:?}",
                self.shape
            )));
        }
        let mut out = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            out.extend_from_slice(&self.data[i * n..(i + 1) * n]);
        }
        Ok(Self::from_parts(vec![idx.len(), n], out))
    }

    /// Places row `r` of `self` at row `idx[r]` of an `[m, n]` zero matrix.
    pub fn scatter_rows(&self, idx: &[usize], m: usize) -> Result<Tensor> {
        let (k, n) = self.dims2()?;
        if idx.len() != k || idx.iter().any(|&i| i >= m) {
            return Err(Error::InvalidArgument(format!(
                "scatter indices {idx:?} invalid for {:?} into {m} rows",
                self.shape
            )));
        }
        let mut out = vec![0.0; m * n];
        for (r, &i) in idx.iter().enumerate() {
            out[i * n..(i + 1) * n].copy_from_slice(&self.data[r * n..(r + 1) * n]);
        }
        Ok(Self::from_parts(vec![m, n], out))
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rejects_inconsistent_shape() {
        assert!(Tensor::new(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(&[0, 2], vec![]).is_err());
    }

    #[test]
    fn matmul_fixtures() {
        let b = Tensor::from_rows(&[&[1.0, -2.0], &[0.5, 3.0]]).unwrap();
        assert_eq!(Tensor::identity(2).matmul(&b).unwrap(), b);

        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]).unwrap();
        let z = a.matmul(&Tensor::zeros(&[2, 4])).unwrap();
        assert_eq!(z, Tensor::zeros(&[3, 4]));

        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let v = Tensor::from_rows(&[&[5.0], &[6.0]]).unwrap();
        assert_eq!(a.matmul(&v).unwrap().data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3] vs [2, 3]"), "{msg}");
    }

    #[test]
    fn softmax_fixtures() {
        let x = Tensor::from_rows(&[&[0.0, 0.0], &[1000.0, 0.0], &[3.0, 2.0]]).unwrap();
        let s = x.softmax_rows().unwrap();
        assert_eq!(s.row(0), &[0.5, 0.5]);
        assert!(close(s.at(1, 0), 1.0, 1e-12) && close(s.at(1, 1), 0.0, 1e-12));
        assert!(close(s.at(2, 0), 0.73106, 1e-5));
        assert!(close(s.at(2, 1), 0.26894, 1e-5));
    }

    #[test]
    fn silu_fixtures() {
        let s = Tensor::vector(&[0.0, 20.0, 1.0]).silu();
        assert_eq!(s.data()[0], 0.0);
        assert!((s.data()[1] - 20.0).abs() < 1e-7);
        assert!(close(s.data()[2], 0.73106, 1e-5));
    }

    #[test]
    fn l2_norm_fixtures() {
        let x = Tensor::from_rows(&[&[3.0, 4.0], &[0.0, 0.0], &[1.0, 1.0], &[2.0, 0.0]]).unwrap();
        let n = x.l2_norm_rows().unwrap();
        assert_eq!(n.shape(), &[4]);
        assert_eq!(n.data()[0], 5.0);
        assert_eq!(n.data()[1], 0.0);
        assert!(close(n.data()[2], std::f64::consts::SQRT_2, 1e-12));
        assert_eq!(n.data()[3], 2.0);
    }

    #[test]
    fn concat_and_slice_are_inverse() {
        let a = Tensor::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        let l = a.slice(0..2, 0..1).unwrap();
        let r = a.slice(0..2, 1..3).unwrap();
        assert_eq!(Tensor::concat_cols(&[&l, &r]).unwrap(), a);
        let t = a.slice(0..1, 0..3).unwrap();
        let b = a.slice(1..2, 0..3).unwrap();
        assert_eq!(Tensor::concat_rows(&[&t, &b]).unwrap(), a);
    }

    #[test]
    fn scatter_inverts_gather() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]).unwrap();
        let g = a.gather_rows(&[2, 0]).unwrap();
        let s = g.scatter_rows(&[2, 0], 3).unwrap();
        assert_eq!(s.row(0), a.row(0));
        assert_eq!(s.row(1), &[0.0, 0.0]);
        assert_eq!(s.row(2), a.row(2));
    }

    #[test]
    fn layer_norm_standardizes() {
        let x = Tensor::from_rows(&[&[1.0, 2.0, 3.0, 4.0]]).unwrap();
        let y = x.layer_norm_rows(0.0).unwrap();
        let mean: f64 = y.data().iter().sum::<f64>() / 4.0;
        let var: f64 = y.data().iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15);
        assert!((var - 1.0).abs() < 1e-12);
    }
}

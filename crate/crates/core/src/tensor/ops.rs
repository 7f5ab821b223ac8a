use std::ops::Range;

use super::tape::{GradTape, Op, Var};
use super::Tensor;
use crate::error::Result;

/// Executor abstraction: model code is written once against `Ops` and run
/// either eagerly ([`Eager`]) or recorded for differentiation ([`GradTape`]).
pub trait Ops {
    type T: Clone;

    fn constant(&mut self, t: Tensor) -> Self::T;
    fn val<'a>(&'a self, t: &'a Self::T) -> &'a Tensor;

    fn matmul(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn transpose(&mut self, a: &Self::T) -> Result<Self::T>;
    fn add(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn sub(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn mul(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn scale(&mut self, a: &Self::T, s: f64) -> Self::T;
    fn add_row(&mut self, a: &Self::T, row: &Self::T) -> Result<Self::T>;
    fn mul_row(&mut self, a: &Self::T, row: &Self::T) -> Result<Self::T>;
    fn mul_col(&mut self, a: &Self::T, col: &Self::T) -> Result<Self::T>;
    fn div_col(&mut self, a: &Self::T, col: &Self::T) -> Result<Self::T>;
    fn mul_scalar(&mut self, a: &Self::T, s: &Self::T) -> Result<Self::T>;
    fn softmax_rows(&mut self, a: &Self::T) -> Result<Self::T>;
    fn log_softmax_rows(&mut self, a: &Self::T) -> Result<Self::T>;
    fn silu(&mut self, a: &Self::T) -> Self::T;
    fn elu_plus_one(&mut self, a: &Self::T) -> Self::T;
    fn relu(&mut self, a: &Self::T) -> Self::T;
    fn l2_norm_rows(&mut self, a: &Self::T) -> Result<Self::T>;
    fn layer_norm_rows(&mut self, a: &Self::T, eps: f64) -> Result<Self::T>;
    fn sum(&mut self, a: &Self::T) -> Self::T;
    fn sum_cols(&mut self, a: &Self::T) -> Result<Self::T>;
    fn slice(&mut self, a: &Self::T, rows: Range<usize>, cols: Range<usize>) -> Result<Self::T>;
    fn concat_rows(&mut self, parts: &[Self::T]) -> Result<Self::T>;
    fn concat_cols(&mut self, parts: &[Self::T]) -> Result<Self::T>;
    fn reshape(&mut self, a: &Self::T, shape: &[usize]) -> Result<Self::T>;
    fn gather(&mut self, a: &Self::T, idx: &[usize]) -> Result<Self::T>;
    fn gather_rows(&mut self, a: &Self::T, idx: &[usize]) -> Result<Self::T>;
    fn scatter_rows(&mut self, a: &Self::T, idx: &[usize], m: usize) -> Result<Self::T>;

    fn shape<'a>(&'a self, t: &'a Self::T) -> &'a [usize] {
        self.val(t).shape()
    }
}

/// Eager executor. Counts the multiply-adds of every matmul it runs.
#[derive(Debug, Default, Clone)]
pub struct Eager {
    pub macs: u64,
}

impl Eager {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Ops for Eager {
    type T = Tensor;

    fn constant(&mut self, t: Tensor) -> Tensor {
        t
    }
    fn val<'a>(&'a self, t: &'a Tensor) -> &'a Tensor {
        t
    }
    fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let out = a.matmul(b)?;
        self.macs += (a.rows() * a.cols() * b.cols()) as u64;
        Ok(out)
    }
    fn transpose(&mut self, a: &Tensor) -> Result<Tensor> {
        a.transpose()
    }
    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.add(b)
    }
    fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.sub(b)
    }
    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.mul(b)
    }
    fn scale(&mut self, a: &Tensor, s: f64) -> Tensor {
        a.scale(s)
    }
    fn add_row(&mut self, a: &Tensor, row: &Tensor) -> Result<Tensor> {
        a.add_row(row)
    }
    fn mul_row(&mut self, a: &Tensor, row: &Tensor) -> Result<Tensor> {
        a.mul_row(row)
    }
    fn mul_col(&mut self, a: &Tensor, col: &Tensor) -> Result<Tensor> {
        a.mul_col(col)
    }
    fn div_col(&mut self, a: &Tensor, col: &Tensor) -> Result<Tensor> {
        a.div_col(col)
    }
    fn mul_scalar(&mut self, a: &Tensor, s: &Tensor) -> Result<Tensor> {
        a.mul_scalar(s)
    }
    fn softmax_rows(&mut self, a: &Tensor) -> Result<Tensor> {
        a.softmax_rows()
    }
    fn log_softmax_rows(&mut self, a: &Tensor) -> Result<Tensor> {
        a.log_softmax_rows()
    }
    fn silu(&mut self, a: &Tensor) -> Tensor {
        a.silu()
    }
    fn elu_plus_one(&mut self, a: &Tensor) -> Tensor {
        a.elu_plus_one()
    }
    fn relu(&mut self, a: &Tensor) -> Tensor {
        a.relu()
    }
    fn l2_norm_rows(&mut self, a: &Tensor) -> Result<Tensor> {
        a.l2_norm_rows()
    }
    fn layer_norm_rows(&mut self, a: &Tensor, eps: f64) -> Result<Tensor> {
        a.layer_norm_rows(eps)
    }
    fn sum(&mut self, a: &Tensor) -> Tensor {
        a.sum()
    }
    fn sum_cols(&mut self, a: &Tensor) -> Result<Tensor> {
        a.sum_cols()
    }
    fn slice(&mut self, a: &Tensor, rows: Range<usize>, cols: Range<usize>) -> Result<Tensor> {
        a.slice(rows, cols)
    }
    fn concat_rows(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        Tensor::concat_rows(&parts.iter().collect::<Vec<_>>())
    }
    fn concat_cols(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        Tensor::concat_cols(&parts.iter().collect::<Vec<_>>())
    }
    fn reshape(&mut self, a: &Tensor, shape: &[usize]) -> Result<Tensor> {
        a.reshape(shape)
    }
    fn gather(&mut self, a: &Tensor, idx: &[usize]) -> Result<Tensor> {
        a.gather(idx)
    }
    fn gather_rows(&mut self, a: &Tensor, idx: &[usize]) -> Result<Tensor> {
        a.gather_rows(idx)
    }
    fn scatter_rows(&mut self, a: &Tensor, idx: &[usize], m: usize) -> Result<Tensor> {
        a.scatter_rows(idx, m)
    }
}

impl Ops for GradTape {
    type T = Var;

    fn constant(&mut self, t: Tensor) -> Var {
        GradTape::constant(self, t)
    }
    fn val<'a>(&'a self, t: &'a Var) -> &'a Tensor {
        self.value(*t)
    }
    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = self.value(*a).matmul(self.value(*b))?;
        Ok(self.record(v, Op::MatMul(*a, *b)))
    }
    fn transpose(&mut self, a: &Var) -> Result<Var> {
        let v = self.value(*a).transpose()?;
        Ok(self.record(v, Op::Transpose(*a)))
    }
    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = self.value(*a).add(self.value(*b))?;
        Ok(self.record(v, Op::Add(*a, *b)))
    }
    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = self.value(*a).sub(self.value(*b))?;
        Ok(self.record(v, Op::Sub(*a, *b)))
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = self.value(*a).mul(self.value(*b))?;
        Ok(self.record(v, Op::Mul(*a, *b)))
    }
    fn scale(&mut self, a: &Var, s: f64) -> Var {
        let v = self.value(*a).scale(s);
        self.record(v, Op::Scale(*a, s))
    }
    fn add_row(&mut self, a: &Var, row: &Var) -> Result<Var> {
        let v = self.value(*a).add_row(self.value(*row))?;
        Ok(self.record(v, Op::AddRow(*a, *row)))
    }
    fn mul_row(&mut self, a: &Var, row: &Var) -> Result<Var> {
        let v = self.value(*a).mul_row(self.value(*row))?;
        Ok(self.record(v, Op::MulRow(*a, *row)))
    }
    fn mul_col(&mut self, a: &Var, col: &Var) -> Result<Var> {
        let v = self.value(*a).mul_col(self.value(*col))?;
        Ok(self.record(v, Op::MulCol(*a, *col)))
    }
    fn div_col(&mut self, a: &Var, col: &Var) -> Result<Var> {
        let v = self.value(*a).div_col(self.value(*col))?;
        Ok(self.record(v, Op::DivCol(*a, *col)))
    }
    fn mul_scalar(&mut self, a: &Var, s: &Var) -> Result<Var> {
        let v = self.value(*a).mul_scalar(self.value(*s))?;
        Ok(self.record(v, Op::MulScalar(*a, *s)))
    }
    fn softmax_rows(&mut self, a: &Var) -> Result<Var> {
        let v = self.value(*a).softmax_rows()?;
        Ok(self.record(v, Op::SoftmaxRows(*a)))
    }
    fn log_softmax_rows(&mut self, a: &Var) -> Result<Var> {
        let v = self.value(*a).log_softmax_rows()?;
        Ok(self.record(v, Op::LogSoftmaxRows(*a)))
    }
    fn silu(&mut self, a: &Var) -> Var {
        let v = self.value(*a).silu();
        self.record(v, Op::Silu(*a))
    }
    fn elu_plus_one(&mut self, a: &Var) -> Var {
        let v = self.value(*a).elu_plus_one();
        self.record(v, Op::EluPlusOne(*a))
    }
    fn relu(&mut self, a: &Var) -> Var {
        let v = self.value(*a).relu();
        self.record(v, Op::Relu(*a))
    }
    fn l2_norm_rows(&mut self, a: &Var) -> Result<Var> {
        let v = self.value(*a).l2_norm_rows()?;
        Ok(self.record(v, Op::L2NormRows(*a)))
    }
    fn layer_norm_rows(&mut self, a: &Var, eps: f64) -> Result<Var> {
        let v = self.value(*a).layer_norm_rows(eps)?;
        Ok(self.record(v, Op::LayerNormRows(*a, eps)))
    }
    fn sum(&mut self, a: &Var) -> Var {
        let v = self.value(*a).sum();
        self.record(v, Op::Sum(*a))
    }
    fn sum_cols(&mut self, a: &Var) -> Result<Var> {
        let v = self.value(*a).sum_cols()?;
        Ok(self.record(v, Op::SumCols(*a)))
    }
    fn slice(&mut self, a: &Var, rows: Range<usize>, cols: Range<usize>) -> Result<Var> {
        let v = self.value(*a).slice(rows.clone(), cols.clone())?;
        Ok(self.record(v, Op::Slice(*a, rows, cols)))
    }
    fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let v = Tensor::concat_rows(&parts.iter().map(|p| self.value(*p)).collect::<Vec<_>>())?;
        Ok(self.record(v, Op::ConcatRows(parts.to_vec())))
    }
    fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let v = Tensor::concat_cols(&parts.iter().map(|p| self.value(*p)).collect::<Vec<_>>())?;
        Ok(self.record(v, Op::ConcatCols(parts.to_vec())))
    }
    fn reshape(&mut self, a: &Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(*a).reshape(shape)?;
        Ok(self.record(v, Op::Reshape(*a)))
    }
    fn gather(&mut self, a: &Var, idx: &[usize]) -> Result<Var> {
        let v = self.value(*a).gather(idx)?;
        Ok(self.record(v, Op::Gather(*a, idx.to_vec())))
    }
    fn gather_rows(&mut self, a: &Var, idx: &[usize]) -> Result<Var> {
        let v = self.value(*a).gather_rows(idx)?;
        Ok(self.record(v, Op::GatherRows(*a, idx.to_vec())))
    }
    fn scatter_rows(&mut self, a: &Var, idx: &[usize], m: usize) -> Result<Var> {
        let v = self.value(*a).scatter_rows(idx, m)?;
        Ok(self.record(v, Op::ScatterRows(*a, idx.to_vec())))
    }
}

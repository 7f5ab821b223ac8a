// Wengert-style tape: every primitive appends a node holding its output and
// the ids of its inputs. `backward` walks the nodes in reverse once.

use std::ops::Range;

use super::{sigmoid, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`GradTape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    DivCol(Var, Var),
    MulScalar(Var, Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Silu(Var),
    EluPlusOne(Var),
    Relu(Var),
    L2NormRows(Var),
    LayerNormRows(Var, f64),
    Sum(Var),
    SumCols(Var),
    Slice(Var, Range<usize>, Range<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    Gather(Var, Vec<usize>),
    GatherRows(Var, Vec<usize>),
    ScatterRows(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward pass, consumed by exactly one
/// [`GradTape::backward`].
#[derive(Debug, Default)]
pub struct GradTape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients produced by a backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, if it is a `requires_grad` leaf reachable from the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Writes the gradient of `v` into `t.grad` (zeros when `v` did not
    /// influence the loss).
    pub fn write_into(&self, v: Var, t: &mut Tensor) {
        let g = match self.get(v) {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; t.numel()],
        };
        t.set_grad(g);
    }
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Registers a leaf; its gradient is tracked iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let rg = t.requires_grad();
        self.push(t.clone(), Op::Leaf, rg)
    }

    /// Registers a trainable leaf regardless of the tensor's flag.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.clone(), Op::Leaf, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub(crate) fn record(&mut self, value: Tensor, op: Op) -> Var {
        let rg = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b)
            | Op::MulCol(a, b)
            | Op::DivCol(a, b)
            | Op::MulScalar(a, b) => self.rg(&[*a, *b]),
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::SoftmaxRows(a)
            | Op::LogSoftmaxRows(a)
            | Op::Silu(a)
            | Op::EluPlusOne(a)
            | Op::Relu(a)
            | Op::L2NormRows(a)
            | Op::LayerNormRows(a, _)
            | Op::Sum(a)
            | Op::SumCols(a)
            | Op::Slice(a, _, _)
            | Op::Reshape(a)
            | Op::Gather(a, _)
            | Op::GatherRows(a, _)
            | Op::ScatterRows(a, _) => self.rg(&[*a]),
            Op::ConcatRows(vs) | Op::ConcatCols(vs) => self.rg(vs),
        };
        self.push(value, op, rg)
    }

    /// Runs the reverse pass from a scalar `loss`. The tape can be consumed
    /// only once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let loss_shape = self.nodes[loss.0].value.shape().to_vec();
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_shape));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            if matches!(self.nodes[id].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &g, &mut grads)?;
        }

        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, g) {
                (Op::Leaf, Some(g)) if node.requires_grad => {
                    Some(Tensor::from_parts(node.value.shape().to_vec(), g))
                }
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[id];
        let out = &node.value;
        let val = |v: &Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(e, c)| *e += c),
                slot @ None => *slot = Some(contrib),
            }
        };
        let gt = |shape: &[usize]| Tensor::from_parts(shape.to_vec(), g.to_vec());

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let gm = gt(out.shape());
                let (va, vb) = (val(a), val(b));
                acc(*a, gm.matmul(&vb.transpose()?)?.into_data());
                acc(*b, va.transpose()?.matmul(&gm)?.into_data());
            }
            Op::Transpose(a) => {
                acc(*a, gt(out.shape()).transpose()?.into_data());
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(a).data(), val(b).data());
                acc(*a, g.iter().zip(vb).map(|(g, b)| g * b).collect());
                acc(*b, g.iter().zip(va).map(|(g, a)| g * a).collect());
            }
            Op::Scale(a, s) => acc(*a, g.iter().map(|v| v * s).collect()),
            Op::AddRow(a, row) => {
                acc(*a, g.to_vec());
                acc(*row, gt(out.shape()).sum_cols()?.into_data());
            }
            Op::MulRow(a, row) => {
                let (m, n) = out.dims2()?;
                let (va, vr) = (val(a).data(), val(row).data());
                let mut da = vec![0.0; m * n];
                let mut dr = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] = g[i * n + j] * vr[j];
                        dr[j] += g[i * n + j] * va[i * n + j];
                    }
                }
                acc(*a, da);
                acc(*row, dr);
            }
            Op::MulCol(a, col) => {
                let (m, n) = out.dims2()?;
                let (va, vc) = (val(a).data(), val(col).data());
                let mut da = vec![0.0; m * n];
                let mut dc = vec![0.0; m];
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] = g[i * n + j] * vc[i];
                        dc[i] += g[i * n + j] * va[i * n + j];
                    }
                }
                acc(*a, da);
                acc(*col, dc);
            }
            Op::DivCol(a, col) => {
                let (m, n) = out.dims2()?;
                let (va, vc) = (val(a).data(), val(col).data());
                let mut da = vec![0.0; m * n];
                let mut dc = vec![0.0; m];
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] = g[i * n + j] / vc[i];
                        dc[i] -= g[i * n + j] * va[i * n + j] / (vc[i] * vc[i]);
                    }
                }
                acc(*a, da);
                acc(*col, dc);
            }
            Op::MulScalar(a, s) => {
                let (va, vs) = (val(a).data(), val(s).data()[0]);
                acc(*a, g.iter().map(|g| g * vs).collect());
                acc(*s, vec![g.iter().zip(va).map(|(g, a)| g * a).sum()]);
            }
            Op::SoftmaxRows(a) => {
                let (m, n) = out.dims2()?;
                let y = out.data();
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    let r = i * n..(i + 1) * n;
                    let dot: f64 = g[r.clone()].iter().zip(&y[r.clone()]).map(|(g, y)| g * y).sum();
                    for j in r {
                        da[j] = y[j] * (g[j] - dot);
                    }
                }
                acc(*a, da);
            }
            Op::LogSoftmaxRows(a) => {
                let (m, n) = out.dims2()?;
                let y = out.data();
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    let r = i * n..(i + 1) * n;
                    let gsum: f64 = g[r.clone()].iter().sum();
                    for j in r {
                        da[j] = g[j] - y[j].exp() * gsum;
                    }
                }
                acc(*a, da);
            }
            Op::Silu(a) => {
                let x = val(a).data();
                acc(
                    *a,
                    g.iter()
                        .zip(x)
                        .map(|(g, &x)| {
                            let s = sigmoid(x);
                            g * s * (1.0 + x * (1.0 - s))
                        })
                        .collect(),
                );
            }
            Op::EluPlusOne(a) => {
                let x = val(a).data();
                acc(
                    *a,
                    g.iter()
                        .zip(x)
                        .map(|(g, &x)| if x > 0.0 { *g } else { g * x.exp() })
                        .collect(),
                );
            }
            Op::Relu(a) => {
                let x = val(a).data();
                acc(
                    *a,
                    g.iter().zip(x).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect(),
                );
            }
            Op::L2NormRows(a) => {
                // Zero rows take the zero subgradient.
                let (m, n) = val(a).dims2()?;
                let x = val(a).data();
                let norms = out.data();
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    if norms[i] == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        da[i * n + j] = g[i] * x[i * n + j] / norms[i];
                    }
                }
                acc(*a, da);
            }
            Op::LayerNormRows(a, eps) => {
                let (m, n) = out.dims2()?;
                let x = val(a).data();
                let y = out.data();
                let nf = n as f64;
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    let r = i * n..(i + 1) * n;
                    let mean = x[r.clone()].iter().sum::<f64>() / nf;
                    let var = x[r.clone()].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
                    let inv = 1.0 / (var + eps).sqrt();
                    let g_mean = g[r.clone()].iter().sum::<f64>() / nf;
                    let gy_mean =
                        g[r.clone()].iter().zip(&y[r.clone()]).map(|(g, y)| g * y).sum::<f64>() / nf;
                    for j in r {
                        da[j] = inv * (g[j] - g_mean - y[j] * gy_mean);
                    }
                }
                acc(*a, da);
            }
            Op::Sum(a) => acc(*a, vec![g[0]; val(a).numel()]),
            Op::SumCols(a) => {
                let (m, n) = val(a).dims2()?;
                let mut da = Vec::with_capacity(m * n);
                for _ in 0..m {
                    da.extend_from_slice(g);
                }
                acc(*a, da);
            }
            Op::Slice(a, rows, cols) => {
                let (m, n) = val(a).dims2()?;
                let w = cols.len();
                let mut da = vec![0.0; m * n];
                for (r, i) in rows.clone().enumerate() {
                    da[i * n + cols.start..i * n + cols.end].copy_from_slice(&g[r * w..(r + 1) * w]);
                }
                acc(*a, da);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = val(p).numel();
                    acc(*p, g[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let (m, n) = out.dims2()?;
                let mut col = 0;
                for p in parts {
                    let w = val(p).cols();
                    let mut dp = Vec::with_capacity(m * w);
                    for i in 0..m {
                        dp.extend_from_slice(&g[i * n + col..i * n + col + w]);
                    }
                    acc(*p, dp);
                    col += w;
                }
            }
            Op::Reshape(a) => acc(*a, g.to_vec()),
            Op::Gather(a, idx) => {
                let mut da = vec![0.0; val(a).numel()];
                for (k, &i) in idx.iter().enumerate() {
                    da[i] += g[k];
                }
                acc(*a, da);
            }
            Op::GatherRows(a, idx) => {
                let (m, n) = val(a).dims2()?;
                let mut da = vec![0.0; m * n];
                for (r, &i) in idx.iter().enumerate() {
                    for j in 0..n {
                        da[i * n + j] += g[r * n + j];
                    }
                }
                acc(*a, da);
            }
            Op::ScatterRows(a, idx) => {
                let n = out.cols();
                let mut da = Vec::with_capacity(idx.len() * n);
                for &i in idx {
                    da.extend_from_slice(&g[i * n..(i + 1) * n]);
                }
                acc(*a, da);
            }
        }
        Ok(())
    }
}

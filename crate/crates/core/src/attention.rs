//! Linear attention, softmax attention, and the hybrid stack (linear layers
//! capped by one softmax layer), each with segment/block masking.
//!
//! Linear attention uses the kernel form `out_i = phi(q_i)^T S / phi(q_i)^T z`
//! with `S = sum_j phi(k_j) v_j^T` and `z = sum_j phi(k_j)`, accumulated once
//! per segment for `O(L d^2)` cost.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packing::build_block_mask;
use crate::tensor::{Eager, Ops, Tensor, MASK_NEG};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    #[default]
    EluPlusOne,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    Linear(FeatureMap),
    Softmax,
}

/// Single-head projections, all `d x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<P = Tensor> {
    pub w_q: P,
    pub w_k: P,
    pub w_v: P,
    pub w_o: P,
}

impl<P> AttentionParams<P> {
    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> AttentionParams<Q> {
        AttentionParams {
            w_q: f(&self.w_q),
            w_k: f(&self.w_k),
            w_v: f(&self.w_v),
            w_o: f(&self.w_o),
        }
    }

    pub fn named(&self) -> Vec<(&'static str, &P)> {
        vec![("w_q", &self.w_q), ("w_k", &self.w_k), ("w_v", &self.w_v), ("w_o", &self.w_o)]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut P)> {
        vec![
            ("w_q", &mut self.w_q),
            ("w_k", &mut self.w_k),
            ("w_v", &mut self.w_v),
            ("w_o", &mut self.w_o),
        ]
    }
}

impl AttentionParams<Tensor> {
    pub fn random<R: Rng + ?Sized>(d_model: usize, std: f64, rng: &mut R) -> Self {
        AttentionParams {
            w_q: Tensor::randn(&[d_model, d_model], std, rng),
            w_k: Tensor::randn(&[d_model, d_model], std, rng),
            w_v: Tensor::randn(&[d_model, d_model], std, rng),
            w_o: Tensor::randn(&[d_model, d_model], std, rng),
        }
    }

    pub fn identity(d_model: usize) -> Self {
        let i = Tensor::identity(d_model);
        AttentionParams {
            w_q: i.clone(),
            w_k: i.clone(),
            w_v: i.clone(),
            w_o: i,
        }
    }

    pub fn d_model(&self) -> usize {
        self.w_q.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d_model();
        for (name, w) in self.named() {
            if w.shape() != [d, d] {
                return Err(Error::InvalidArgument(format!(
                    "projection {name} has shape {:?}, expected [{d}, {d}]",
                    w.shape()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridStackConfig {
    pub n_linear_layers: usize,
    pub d_model: usize,
    pub feature_map: FeatureMap,
}

impl HybridStackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_linear_layers == 0 {
            return Err(Error::InvalidArgument("hybrid stack needs at least one linear layer".into()));
        }
        Ok(())
    }

    /// Attention type of layer `i`: linear for the first `n_linear_layers`,
    /// softmax for the terminating layer.
    pub fn kind(&self, i: usize) -> AttentionKind {
        if i < self.n_linear_layers {
            AttentionKind::Linear(self.feature_map)
        } else {
            AttentionKind::Softmax
        }
    }
}

fn apply_feature_map<O: Ops>(o: &mut O, x: &O::T, fm: FeatureMap) -> O::T {
    match fm {
        FeatureMap::EluPlusOne => o.elu_plus_one(x),
        FeatureMap::Relu => o.relu(x),
    }
}

/// Groups token indices by segment id in order of first appearance.
pub(crate) fn segment_groups(segments: Option<&[usize]>, len: usize) -> Result<Vec<Vec<usize>>> {
    let Some(ids) = segments else {
        return Ok(vec![(0..len).collect()]);
    };
    if ids.len() != len {
        return Err(Error::InvalidArgument(format!(
            "segment vector has length {}, sequence has {len}",
            ids.len()
        )));
    }
    let mut order: Vec<usize> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, &id) in ids.iter().enumerate() {
        match order.iter().position(|&s| s == id) {
            Some(g) => groups[g].push(i),
            None => {
                order.push(id);
                groups.push(vec![i]);
            }
        }
    }
    Ok(groups)
}

fn is_contiguous_in_order(groups: &[Vec<usize>]) -> bool {
    let mut next = 0;
    for g in groups {
        for &i in g {
            if i != next {
                return false;
            }
            next += 1;
        }
    }
    true
}

fn check_qkv(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(usize, usize)> {
    let (l, d) = q.dims2()?;
    if k.shape() != q.shape() {
        return Err(Error::shape("attention", q.shape(), k.shape()));
    }
    if v.shape() != q.shape() {
        return Err(Error::shape("attention", q.shape(), v.shape()));
    }
    Ok((l, d))
}

/// Linear attention over any executor, via per-segment accumulators.
pub fn linear_attention_with<O: Ops>(
    o: &mut O,
    q: &O::T,
    k: &O::T,
    v: &O::T,
    fm: FeatureMap,
    segments: Option<&[usize]>,
) -> Result<O::T> {
    let (l, d) = check_qkv(o.val(q), o.val(k), o.val(v))?;
    let groups = segment_groups(segments, l)?;
    let contiguous = is_contiguous_in_order(&groups);

    let mut outs = Vec::with_capacity(groups.len());
    for idx in &groups {
        let (qs, ks, vs) = if groups.len() == 1 && contiguous {
            (q.clone(), k.clone(), v.clone())
        } else if contiguous {
            let r = idx[0]..idx[0] + idx.len();
            (o.slice(q, r.clone(), 0..d)?, o.slice(k, r.clone(), 0..d)?, o.slice(v, r, 0..d)?)
        } else {
            (o.gather_rows(q, idx)?, o.gather_rows(k, idx)?, o.gather_rows(v, idx)?)
        };
        let qf = apply_feature_map(o, &qs, fm);
        let kf = apply_feature_map(o, &ks, fm);
        let kf_t = o.transpose(&kf)?;
        let state = o.matmul(&kf_t, &vs)?; // [d, d]
        let z = o.sum_cols(&kf)?;
        let z = o.reshape(&z, &[d, 1])?;
        let num = o.matmul(&qf, &state)?;
        let den = o.matmul(&qf, &z)?; // [n_s, 1]
        if let Some(r) = o.val(&den).data().iter().position(|&c| c.is_nan() || c <= 0.0) {
            return Err(Error::ZeroNormalizer { position: idx[r] });
        }
        outs.push(o.div_col(&num, &den)?);
    }

    if outs.len() == 1 {
        return Ok(outs.pop().expect("one group"));
    }
    if contiguous {
        return o.concat_rows(&outs);
    }
    let mut acc: Option<O::T> = None;
    for (out, idx) in outs.iter().zip(&groups) {
        let placed = o.scatter_rows(out, idx, l)?;
        acc = Some(match acc {
            Some(a) => o.add(&a, &placed)?,
            None => placed,
        });
    }
    Ok(acc.expect("at least one group"))
}

/// Validates a `{0,1}` mask and converts it to additive form.
fn additive_mask(mask: &Tensor, l: usize) -> Result<Tensor> {
    if mask.shape() != [l, l] {
        return Err(Error::shape("attention mask", mask.shape(), &[l, l]));
    }
    if let Some(bad) = mask.data().iter().find(|&&m| m != 0.0 && m != 1.0) {
        return Err(Error::InvalidArgument(format!("mask entries must be 0 or 1, found {bad}")));
    }
    for i in 0..l {
        if mask.row(i).iter().all(|&m| m == 0.0) {
            return Err(Error::FullyMaskedRow { row: i });
        }
    }
    Ok(mask.map(|m| if m == 0.0 { MASK_NEG } else { 0.0 }))
}

/// `softmax(Q K^T / sqrt(d)) V` with optional `{0,1}` mask.
pub fn softmax_attention_with<O: Ops>(
    o: &mut O,
    q: &O::T,
    k: &O::T,
    v: &O::T,
    mask: Option<&Tensor>,
) -> Result<O::T> {
    let (l, d) = check_qkv(o.val(q), o.val(k), o.val(v))?;
    let kt = o.transpose(k)?;
    let scores = o.matmul(q, &kt)?;
    let mut scores = o.scale(&scores, 1.0 / (d as f64).sqrt());
    if let Some(mask) = mask {
        let add = o.constant(additive_mask(mask, l)?);
        scores = o.add(&scores, &add)?;
    }
    let weights = o.softmax_rows(&scores)?;
    o.matmul(&weights, v)
}

/// One projected attention layer: `attend(x W_q, x W_k, x W_v) W_o`.
pub fn attention_layer<O: Ops>(
    o: &mut O,
    x: &O::T,
    params: &AttentionParams<O::T>,
    kind: AttentionKind,
    segments: Option<&[usize]>,
) -> Result<O::T> {
    let q = o.matmul(x, &params.w_q)?;
    let k = o.matmul(x, &params.w_k)?;
    let v = o.matmul(x, &params.w_v)?;
    let attended = match kind {
        AttentionKind::Linear(fm) => linear_attention_with(o, &q, &k, &v, fm, segments)?,
        AttentionKind::Softmax => {
            let mask = segments.map(build_block_mask).transpose()?;
            softmax_attention_with(o, &q, &k, &v, mask.as_ref())?
        }
    };
    o.matmul(&attended, &params.w_o)
}

pub fn hybrid_stack_with<O: Ops>(
    o: &mut O,
    x: &O::T,
    params: &[AttentionParams<O::T>],
    cfg: &HybridStackConfig,
    segments: Option<&[usize]>,
) -> Result<O::T> {
    cfg.validate()?;
    if params.len() != cfg.n_linear_layers + 1 {
        return Err(Error::InvalidArgument(format!(
            "hybrid stack expects {} layers, got {}",
            cfg.n_linear_layers + 1,
            params.len()
        )));
    }
    let mut h = x.clone();
    for (i, p) in params.iter().enumerate() {
        h = attention_layer(o, &h, p, cfg.kind(i), segments)?;
    }
    Ok(h)
}

pub fn softmax_attention(q: &Tensor, k: &Tensor, v: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
    softmax_attention_with(&mut Eager::new(), q, k, v, mask)
}

pub fn linear_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    fm: FeatureMap,
    segments: Option<&[usize]>,
) -> Result<Tensor> {
    linear_attention_with(&mut Eager::new(), q, k, v, fm, segments)
}

pub fn hybrid_stack_forward(
    x: &Tensor,
    params: &[AttentionParams],
    cfg: &HybridStackConfig,
    segments: Option<&[usize]>,
) -> Result<Tensor> {
    for p in params {
        p.validate()?;
    }
    hybrid_stack_with(&mut Eager::new(), x, params, cfg, segments)
}

/// Reference linear attention that materializes the `L x L` similarity
/// matrix `phi(Q) phi(K)^T` (zeroed across segments), row-normalizes it,
/// and multiplies by `V`. `O(L^2 d)`; used as oracle and benchmark baseline.
pub fn linear_attention_quadratic_oracle(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    fm: FeatureMap,
    segments: Option<&[usize]>,
) -> Result<Tensor> {
    let (l, d) = check_qkv(q, k, v)?;
    if let Some(s) = segments {
        if s.len() != l {
            return Err(Error::InvalidArgument(format!(
                "segment vector has length {}, sequence has {l}",
                s.len()
            )));
        }
    }
    let phi = |x: f64| match fm {
        FeatureMap::EluPlusOne => {
            if x > 0.0 {
                x + 1.0
            } else {
                x.exp()
            }
        }
        FeatureMap::Relu => x.max(0.0),
    };
    let qf: Vec<f64> = q.data().iter().map(|&x| phi(x)).collect();
    let kf: Vec<f64> = k.data().iter().map(|&x| phi(x)).collect();

    let mut sim = vec![0.0; l * l];
    for i in 0..l {
        for j in 0..l {
            if segments.is_some_and(|s| s[i] != s[j]) {
                continue;
            }
            let mut acc = 0.0;
            for c in 0..d {
                acc += qf[i * d + c] * kf[j * d + c];
            }
            sim[i * l + j] = acc;
        }
    }
    let mut out = vec![0.0; l * d];
    for i in 0..l {
        let row = &sim[i * l..(i + 1) * l];
        let norm: f64 = row.iter().sum();
        if norm.is_nan() || norm <= 0.0 {
            return Err(Error::ZeroNormalizer { position: i });
        }
        let o_row = &mut out[i * d..(i + 1) * d];
        for (j, &a) in row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let w = a / norm;
            for (oc, vc) in o_row.iter_mut().zip(&v.data()[j * d..(j + 1) * d]) {
                *oc += w * vc;
            }
        }
    }
    Tensor::new(&[l, d], out)
}

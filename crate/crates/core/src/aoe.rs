//! Autonomy-of-Experts layer.
//!
//! There is no router. Every expert's low-rank down-projection is computed
//! at once through the concatenated matrix `combined_down`, giving the
//! activation cache `C` (`n x d_low` per token). The `k` experts with the
//! largest row norms of `C` continue; their outputs are weighted by a softmax
//! over those norms. Selected experts reuse their cache rows instead of
//! recomputing `x W_down`.
//!
//! Expert shapes: `w_down: d_model x d_low`, `w_up: d_low x d_ffn`,
//! `w_p: d_model x d_ffn`, `w_o: d_ffn x d_model`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{io, Eager, Ops, Tensor, MASK_NEG};

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertWeights<P = Tensor> {
    pub w_down: P,
    pub w_up: P,
    pub w_p: P,
    pub w_o: P,
}

impl<P> ExpertWeights<P> {
    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> ExpertWeights<Q> {
        ExpertWeights {
            w_down: f(&self.w_down),
            w_up: f(&self.w_up),
            w_p: f(&self.w_p),
            w_o: f(&self.w_o),
        }
    }

    pub fn named(&self) -> Vec<(&'static str, &P)> {
        vec![
            ("w_down", &self.w_down),
            ("w_up", &self.w_up),
            ("w_p", &self.w_p),
            ("w_o", &self.w_o),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut P)> {
        vec![
            ("w_down", &mut self.w_down),
            ("w_up", &mut self.w_up),
            ("w_p", &mut self.w_p),
            ("w_o", &mut self.w_o),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpertDims {
    pub d_model: usize,
    pub d_low: usize,
    pub d_ffn: usize,
}

impl ExpertWeights<Tensor> {
    pub fn random<R: Rng + ?Sized>(dims: ExpertDims, std: f64, rng: &mut R) -> Self {
        let ExpertDims { d_model, d_low, d_ffn } = dims;
        ExpertWeights {
            w_down: Tensor::randn(&[d_model, d_low], std, rng),
            w_up: Tensor::randn(&[d_low, d_ffn], std, rng),
            w_p: Tensor::randn(&[d_model, d_ffn], std, rng),
            w_o: Tensor::randn(&[d_ffn, d_model], std, rng),
        }
    }

    pub fn dims(&self) -> ExpertDims {
        ExpertDims {
            d_model: self.w_down.rows(),
            d_low: self.w_down.cols(),
            d_ffn: self.w_p.cols(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ExpertDims { d_model, d_low, d_ffn } = self.dims();
        let expected: [(&str, &Tensor, [usize; 2]); 4] = [
            ("w_down", &self.w_down, [d_model, d_low]),
            ("w_up", &self.w_up, [d_low, d_ffn]),
            ("w_p", &self.w_p, [d_model, d_ffn]),
            ("w_o", &self.w_o, [d_ffn, d_model]),
        ];
        for (name, t, shape) in expected {
            if t.shape() != shape {
                return Err(Error::InvalidArgument(format!(
                    "expert {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        if d_low >= d_model {
            return Err(Error::InvalidArgument(format!(
                "d_low ({d_low}) must be smaller than d_model ({d_model})"
            )));
        }
        Ok(())
    }
}

/// Experts plus the eagerly built `[d_model, n * d_low]` concatenation of
/// their down-projections.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertBank {
    experts: Vec<ExpertWeights>,
    combined_down: Tensor,
    k_active: usize,
}

impl ExpertBank {
    pub fn new(experts: Vec<ExpertWeights>, k_active: usize) -> Result<Self> {
        let first = experts
            .first()
            .ok_or_else(|| Error::InvalidArgument("expert bank needs at least one expert".into()))?;
        let dims = first.dims();
        for e in &experts {
            e.validate()?;
            if e.dims() != dims {
                return Err(Error::InvalidArgument("experts have inconsistent shapes".into()));
            }
        }
        if k_active == 0 || k_active > experts.len() {
            return Err(Error::InvalidArgument(format!(
                "k_active must be in 1..={}, got {k_active}",
                experts.len()
            )));
        }
        let combined_down = combine_down(&experts)?;
        Ok(ExpertBank {
            experts,
            combined_down,
            k_active,
        })
    }

    pub fn random<R: Rng + ?Sized>(n: usize, k: usize, dims: ExpertDims, std: f64, rng: &mut R) -> Result<Self> {
        Self::new((0..n).map(|_| ExpertWeights::random(dims, std, rng)).collect(), k)
    }

    pub fn experts(&self) -> &[ExpertWeights] {
        &self.experts
    }

    pub fn combined_down(&self) -> &Tensor {
        &self.combined_down
    }

    pub fn k_active(&self) -> usize {
        self.k_active
    }

    pub fn n_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn dims(&self) -> ExpertDims {
        self.experts[0].dims()
    }

    /// Mutates one expert and rebuilds `combined_down`.
    pub fn update_expert(&mut self, i: usize, f: impl FnOnce(&mut ExpertWeights)) -> Result<()> {
        let dims = self.dims();
        let e = self
            .experts
            .get_mut(i)
            .ok_or_else(|| Error::InvalidArgument(format!("no expert {i}")))?;
        f(e);
        e.validate()?;
        if e.dims() != dims {
            return Err(Error::InvalidArgument("expert shape changed".into()));
        }
        self.combined_down = combine_down(&self.experts)?;
        Ok(())
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<io::Manifest> {
        let k = Tensor::scalar(self.k_active as f64);
        let mut named: Vec<(String, &Tensor)> = vec![("k_active".into(), &k)];
        for (i, e) in self.experts.iter().enumerate() {
            for (name, t) in e.named() {
                named.push((format!("experts.{i}.{name}"), t));
            }
        }
        io::save(dir, stem, &named)
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let tensors = io::load(dir, stem)?;
        let find = |name: &str| {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::MissingTensor(name.to_string()))
        };
        let k = find("k_active")?.item()? as usize;
        let mut experts = Vec::new();
        while tensors.iter().any(|(n, _)| n == &format!("experts.{}.w_down", experts.len())) {
            let i = experts.len();
            experts.push(ExpertWeights {
                w_down: find(&format!("experts.{i}.w_down"))?,
                w_up: find(&format!("experts.{i}.w_up"))?,
                w_p: find(&format!("experts.{i}.w_p"))?,
                w_o: find(&format!("experts.{i}.w_o"))?,
            });
        }
        Self::new(experts, k)
    }
}

fn combine_down(experts: &[ExpertWeights]) -> Result<Tensor> {
    Tensor::concat_cols(&experts.iter().map(|e| &e.w_down).collect::<Vec<_>>())
}

fn as_row(x: &Tensor, d_model: usize) -> Result<Tensor> {
    if x.numel() != d_model {
        return Err(Error::shape("aoe input", x.shape(), &[d_model]));
    }
    x.reshape(&[1, d_model])
}

/// `(SiLU(x W_down W_up) * (x W_p)) W_o` for one expert.
pub fn expert_forward(x: &Tensor, e: &ExpertWeights) -> Result<Tensor> {
    let d_model = e.dims().d_model;
    let x = as_row(x, d_model)?;
    let gate = x.matmul(&e.w_down)?.matmul(&e.w_up)?.silu();
    let h = gate.mul(&x.matmul(&e.w_p)?)?.matmul(&e.w_o)?;
    h.reshape(&[d_model])
}

/// `C = x combined_down`, reshaped to `[n, d_low]`.
pub fn activation_cache(x: &Tensor, bank: &ExpertBank) -> Result<Tensor> {
    let ExpertDims { d_model, d_low, .. } = bank.dims();
    let c = as_row(x, d_model)?.matmul(&bank.combined_down)?;
    c.reshape(&[bank.n_experts(), d_low])
}

/// Indices of the `k` largest norms, ordered by descending norm with ties
/// going to the lower index.
pub fn top_k_indices(norms: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..norms.len()).collect();
    idx.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    /// Softmax over the selected norms, aligned with `indices`.
    pub weights: Tensor,
}

pub fn select_experts(cache: &Tensor, k: usize) -> Result<Selection> {
    let (n, _) = cache.dims2()?;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must be in 1..={n}, got {k}")));
    }
    let norms = cache.l2_norm_rows()?;
    let indices = top_k_indices(norms.data(), k);
    let picked = norms.gather(&indices)?.reshape(&[1, k])?;
    let weights = picked.softmax_rows()?.reshape(&[k])?;
    Ok(Selection { indices, weights })
}

/// Token-wise AoE over `xs: [L, d_model]` on any executor.
///
/// `combined_down` must be the column concatenation of the experts'
/// `w_down`. Selection is computed from values and treated as constant;
/// gradients flow through the softmax over the selected norms and through
/// the selected experts only.
pub fn aoe_rows_with<O: Ops>(
    o: &mut O,
    xs: &O::T,
    experts: &[ExpertWeights<O::T>],
    combined_down: &O::T,
    k: usize,
) -> Result<O::T> {
    let (l, _) = o.val(xs).dims2()?;
    let n = experts.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must be in 1..={n}, got {k}")));
    }
    let cache = o.matmul(xs, combined_down)?;
    let d_low = o.val(&cache).cols() / n;
    let flat = o.reshape(&cache, &[l * n, d_low])?;
    let norms = o.l2_norm_rows(&flat)?;
    let norms = o.reshape(&norms, &[l, n])?;

    let mut mask = vec![MASK_NEG; l * n];
    let mut routed: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in 0..l {
        for e in top_k_indices(o.val(&norms).row(t), k) {
            mask[t * n + e] = 0.0;
            routed[e].push(t);
        }
    }
    let mask = o.constant(Tensor::from_parts(vec![l, n], mask));
    let scores = o.add(&norms, &mask)?;
    let weights = o.softmax_rows(&scores)?;

    let mut acc: Option<O::T> = None;
    for (e, tokens) in routed.iter().enumerate() {
        if tokens.is_empty() {
            continue;
        }
        let ex = &experts[e];
        let block = o.slice(&cache, 0..l, e * d_low..(e + 1) * d_low)?;
        let (c_e, x_e) = if tokens.len() == l {
            (block, xs.clone())
        } else {
            (o.gather_rows(&block, tokens)?, o.gather_rows(xs, tokens)?)
        };
        let up = o.matmul(&c_e, &ex.w_up)?;
        let gate = o.silu(&up);
        let proj = o.matmul(&x_e, &ex.w_p)?;
        let hidden = o.mul(&gate, &proj)?;
        let out = o.matmul(&hidden, &ex.w_o)?;
        let w_idx: Vec<usize> = tokens.iter().map(|&t| t * n + e).collect();
        let w = o.gather(&weights, &w_idx)?;
        let out = o.mul_col(&out, &w)?;
        let placed = if tokens.len() == l {
            out
        } else {
            o.scatter_rows(&out, tokens, l)?
        };
        acc = Some(match acc {
            Some(a) => o.add(&a, &placed)?,
            None => placed,
        });
    }
    Ok(acc.expect("k >= 1 selects at least one expert"))
}

pub fn aoe_forward_batch(xs: &Tensor, bank: &ExpertBank) -> Result<Tensor> {
    aoe_forward_batch_counted(xs, bank).map(|(h, _)| h)
}

/// Like [`aoe_forward_batch`], also returning the multiply-adds executed.
pub fn aoe_forward_batch_counted(xs: &Tensor, bank: &ExpertBank) -> Result<(Tensor, u64)> {
    let d_model = bank.dims().d_model;
    let (_, d) = xs.dims2()?;
    if d != d_model {
        return Err(Error::shape("aoe input", xs.shape(), &[xs.rows(), d_model]));
    }
    let mut o = Eager::new();
    let h = aoe_rows_with(&mut o, xs, bank.experts(), bank.combined_down(), bank.k_active())?;
    Ok((h, o.macs))
}

pub fn aoe_forward(x: &Tensor, bank: &ExpertBank) -> Result<Tensor> {
    let d_model = bank.dims().d_model;
    let h = aoe_forward_batch(&as_row(x, d_model)?, bank)?;
    h.reshape(&[d_model])
}

/// Multiply-add counts for one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacCount {
    /// Shared cache plus the `k` selected experts.
    pub with_cache: u64,
    /// Every expert computed in full.
    pub all_experts: u64,
}

pub fn mac_count(dims: ExpertDims, n: usize, k: usize) -> MacCount {
    let ExpertDims { d_model, d_low, d_ffn } = dims;
    let (d_model, d_low, d_ffn, n, k) = (d_model as u64, d_low as u64, d_ffn as u64, n as u64, k as u64);
    let per_expert_tail = d_low * d_ffn + 2 * d_model * d_ffn;
    MacCount {
        with_cache: n * d_model * d_low + k * per_expert_tail,
        all_experts: n * (d_model * d_low + per_expert_tail),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub n_experts: usize,
    pub k_active: usize,
    pub tokens: usize,
    pub counts: Vec<usize>,
}

/// Per-expert selection counts over the rows of `xs`.
pub fn selection_stats(xs: &Tensor, bank: &ExpertBank) -> Result<SelectionStats> {
    let (l, _) = xs.dims2()?;
    let cache = xs.matmul(bank.combined_down())?;
    let n = bank.n_experts();
    let d_low = bank.dims().d_low;
    let norms = cache.reshape(&[l * n, d_low])?.l2_norm_rows()?;
    let mut counts = vec![0; n];
    for t in 0..l {
        for e in top_k_indices(&norms.data()[t * n..(t + 1) * n], bank.k_active()) {
            counts[e] += 1;
        }
    }
    Ok(SelectionStats {
        n_experts: n,
        k_active: bank.k_active(),
        tokens: l,
        counts,
    })
}

/// Independent reference implementations on plain slices.
pub mod oracle {
    use super::*;

    fn vec_mat(x: &[f64], m: &Tensor) -> Vec<f64> {
        let (r, c) = (m.rows(), m.cols());
        assert_eq!(x.len(), r);
        (0..c).map(|j| (0..r).map(|i| x[i] * m.at(i, j)).sum()).collect()
    }

    fn silu(v: f64) -> f64 {
        v / (1.0 + (-v).exp())
    }

    /// Runs every expert in full, ranks experts by `||x W_down^i||`, and
    /// sums the top-`k` outputs weighted by a softmax over those norms.
    pub fn aoe_forward_brute_force(x: &[f64], bank: &ExpertBank) -> Vec<f64> {
        let k = bank.k_active();
        let mut scored: Vec<(f64, usize, Vec<f64>)> = bank
            .experts()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let low = vec_mat(x, &e.w_down);
                let norm = low.iter().map(|v| v * v).sum::<f64>().sqrt();
                let gate: Vec<f64> = vec_mat(&low, &e.w_up).into_iter().map(silu).collect();
                let proj = vec_mat(x, &e.w_p);
                let hidden: Vec<f64> = gate.iter().zip(&proj).map(|(a, b)| a * b).collect();
                (norm, i, vec_mat(&hidden, &e.w_o))
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let top = &scored[..k];
        let max = top[0].0;
        let z: f64 = top.iter().map(|s| (s.0 - max).exp()).sum();
        let mut h = vec![0.0; x.len()];
        for (norm, _, out) in top {
            let w = (norm - max).exp() / z;
            for (hc, oc) in h.iter_mut().zip(out) {
                *hc += w * oc;
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn dims(d_model: usize, d_low: usize, d_ffn: usize) -> ExpertDims {
        ExpertDims { d_model, d_low, d_ffn }
    }

    #[test]
    fn expert_zero_input_and_zero_output_weight() {
        let mut rng = seeded(1);
        let mut e = ExpertWeights::random(dims(4, 2, 6), 1.0, &mut rng);
        let z = expert_forward(&Tensor::zeros(&[4]), &e).unwrap();
        assert_eq!(z, Tensor::zeros(&[4]));
        e.w_o = Tensor::zeros(&[6, 4]);
        let x = Tensor::randn(&[4], 1.0, &mut rng);
        assert_eq!(expert_forward(&x, &e).unwrap(), Tensor::zeros(&[4]));
    }

    #[test]
    fn expert_matches_hand_chain_seed_11() {
        let mut rng = seeded(11);
        let e = ExpertWeights::random(dims(2, 1, 2), 1.0, &mut rng);
        let x = [0.7, -1.3];
        let low = x[0] * e.w_down.at(0, 0) + x[1] * e.w_down.at(1, 0);
        let s = |v: f64| v / (1.0 + (-v).exp());
        let g = [s(low * e.w_up.at(0, 0)), s(low * e.w_up.at(0, 1))];
        let p = [
            x[0] * e.w_p.at(0, 0) + x[1] * e.w_p.at(1, 0),
            x[0] * e.w_p.at(0, 1) + x[1] * e.w_p.at(1, 1),
        ];
        let hid = [g[0] * p[0], g[1] * p[1]];
        let expected = [
            hid[0] * e.w_o.at(0, 0) + hid[1] * e.w_o.at(1, 0),
            hid[0] * e.w_o.at(0, 1) + hid[1] * e.w_o.at(1, 1),
        ];
        let out = expert_forward(&Tensor::vector(&x), &e).unwrap();
        for (a, b) in out.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn low_rank_must_compress() {
        let mut rng = seeded(2);
        assert!(ExpertBank::random(2, 1, dims(4, 4, 4), 1.0, &mut rng).is_err());
    }

    #[test]
    fn cache_rows_equal_per_expert_products() {
        let mut rng = seeded(11);
        let bank = ExpertBank::random(3, 2, dims(5, 2, 4), 1.0, &mut rng).unwrap();
        let x = Tensor::randn(&[5], 1.0, &mut rng);
        let c = activation_cache(&x, &bank).unwrap();
        assert_eq!(c.shape(), &[3, 2]);
        for (i, e) in bank.experts().iter().enumerate() {
            let direct = x.reshape(&[1, 5]).unwrap().matmul(&e.w_down).unwrap();
            for (a, b) in c.row(i).iter().zip(direct.data()) {
                assert!((a - b).abs() <= 1e-15);
            }
        }
        assert_eq!(activation_cache(&Tensor::zeros(&[5]), &bank).unwrap(), Tensor::zeros(&[3, 2]));
    }

    #[test]
    fn selection_fixtures() {
        let s = select_experts(&Tensor::from_rows(&[&[2.0]]).unwrap(), 1).unwrap();
        assert_eq!(s.indices, vec![0]);
        assert_eq!(s.weights.data(), &[1.0]);

        let s = select_experts(&Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.6, 0.8]]).unwrap(), 2).unwrap();
        assert_eq!(s.indices, vec![0, 1]);
        assert_eq!(s.weights.data(), &[0.5, 0.5]);

        let s = select_experts(&Tensor::from_rows(&[&[3.0], &[1.0], &[2.0]]).unwrap(), 2).unwrap();
        assert_eq!(s.indices, vec![0, 2]);
        assert!((s.weights.data()[0] - 0.73106).abs() < 1e-5);
        assert!((s.weights.data()[1] - 0.26894).abs() < 1e-5);

        assert!(select_experts(&Tensor::zeros(&[2, 1]), 3).is_err());
    }

    #[test]
    fn single_expert_bank_reduces_to_expert_forward() {
        let mut rng = seeded(4);
        let bank = ExpertBank::random(1, 1, dims(4, 2, 3), 1.0, &mut rng).unwrap();
        let x = Tensor::randn(&[4], 1.0, &mut rng);
        let a = aoe_forward(&x, &bank).unwrap();
        let b = expert_forward(&x, &bank.experts()[0]).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-15);
    }

    #[test]
    fn zero_input_gives_zero_and_lowest_indices() {
        let mut rng = seeded(5);
        let bank = ExpertBank::random(4, 2, dims(4, 2, 3), 1.0, &mut rng).unwrap();
        let x = Tensor::zeros(&[4]);
        assert_eq!(aoe_forward(&x, &bank).unwrap(), Tensor::zeros(&[4]));
        let sel = select_experts(&activation_cache(&x, &bank).unwrap(), 2).unwrap();
        assert_eq!(sel.indices, vec![0, 1]);
    }

    #[test]
    fn matches_brute_force_seed_13() {
        let mut rng = seeded(13);
        let bank = ExpertBank::random(4, 2, dims(6, 3, 5), 1.0, &mut rng).unwrap();
        let x = Tensor::randn(&[6], 1.0, &mut rng);
        let a = aoe_forward(&x, &bank).unwrap();
        let b = oracle::aoe_forward_brute_force(x.data(), &bank);
        for (a, b) in a.data().iter().zip(&b) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_matches_rowwise_seed_17() {
        let mut rng = seeded(17);
        let bank = ExpertBank::random(4, 2, dims(5, 2, 4), 1.0, &mut rng).unwrap();
        let xs = Tensor::randn(&[5, 5], 1.0, &mut rng);
        let h = aoe_forward_batch(&xs, &bank).unwrap();
        for i in 0..5 {
            let row = aoe_forward(&Tensor::vector(xs.row(i)), &bank).unwrap();
            for (a, b) in h.row(i).iter().zip(row.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let one = xs.slice(0..1, 0..5).unwrap();
        let dup = Tensor::concat_rows(&[&one, &one]).unwrap();
        let hd = aoe_forward_batch(&dup, &bank).unwrap();
        assert_eq!(hd.row(0), hd.row(1));
    }

    #[test]
    fn counted_macs_match_formula() {
        let mut rng = seeded(21);
        let d = dims(8, 3, 6);
        let bank = ExpertBank::random(5, 2, d, 1.0, &mut rng).unwrap();
        let xs = Tensor::randn(&[7, 8], 1.0, &mut rng);
        let (_, macs) = aoe_forward_batch_counted(&xs, &bank).unwrap();
        let per_token = mac_count(d, 5, 2);
        assert_eq!(macs, 7 * per_token.with_cache);
        assert!(per_token.with_cache < per_token.all_experts);
        assert_eq!(mac_count(d, 5, 5).with_cache, mac_count(d, 5, 5).all_experts);
    }

    #[test]
    fn update_rebuilds_combined_down() {
        let mut rng = seeded(6);
        let mut bank = ExpertBank::random(3, 1, dims(4, 2, 3), 1.0, &mut rng).unwrap();
        bank.update_expert(1, |e| e.w_down = Tensor::ones(&[4, 2])).unwrap();
        assert_eq!(bank.combined_down().slice(0..4, 2..4).unwrap(), Tensor::ones(&[4, 2]));
    }

    #[test]
    fn bank_round_trips_and_stats_serialize() {
        let mut rng = seeded(8);
        let bank = ExpertBank::random(3, 2, dims(4, 2, 3), 1.0, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        bank.save(dir.path(), "bank").unwrap();
        assert_eq!(ExpertBank::load(dir.path(), "bank").unwrap(), bank);

        let xs = Tensor::randn(&[10, 4], 1.0, &mut rng);
        let stats = selection_stats(&xs, &bank).unwrap();
        assert_eq!(stats.counts.iter().sum::<usize>(), 20);
        let json = serde_json::to_string(&stats).unwrap();
        assert!(json.contains("\"counts\""));
    }
}

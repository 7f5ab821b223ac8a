//! Loss and training-math kernels.
//!
//! The differentiable losses are generic over [`Ops`] so the same code runs
//! eagerly or on a [`GradTape`](crate::GradTape). Plain-`Tensor` wrappers
//! validate their inputs first. The `oracle` submodule holds independent
//! double-loop versions used by tests.

use crate::error::{Error, Result};
use crate::tensor::{Eager, Ops, Tensor, MASK_NEG};

const UNIT_TOL: f64 = 1e-6;

/// Anchor/positive feature pairs for the contrastive loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    anchors: Tensor,
    positives: Tensor,
    temperature: f64,
    exclude_self: bool,
}

impl ContrastiveBatch {
    /// Rows of both matrices must be unit length within `1e-6`.
    pub fn new(anchors: Tensor, positives: Tensor, temperature: f64) -> Result<Self> {
        check_temperature(temperature)?;
        let (n, d) = anchors.dims2()?;
        if positives.shape() != [n, d] {
            return Err(Error::shape("contrastive batch", anchors.shape(), positives.shape()));
        }
        for (name, t) in [("anchors", &anchors), ("positives", &positives)] {
            for (i, norm) in t.l2_norm_rows()?.data().iter().enumerate() {
                if (norm - 1.0).abs() > UNIT_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "{name} row {i} has norm {norm}, expected unit length"
                    )));
                }
            }
        }
        Ok(ContrastiveBatch {
            anchors,
            positives,
            temperature,
            exclude_self: false,
        })
    }

    /// Normalizes rows before building the batch.
    pub fn from_unnormalized(anchors: &Tensor, positives: &Tensor, temperature: f64) -> Result<Self> {
        Self::new(normalize_rows(anchors)?, normalize_rows(positives)?, temperature)
    }

    /// Drops the `j = i` self-similarity term from every denominator.
    pub fn with_exclude_self(mut self, on: bool) -> Self {
        self.exclude_self = on;
        self
    }

    pub fn anchors(&self) -> &Tensor {
        &self.anchors
    }

    pub fn positives(&self) -> &Tensor {
        &self.positives
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn exclude_self(&self) -> bool {
        self.exclude_self
    }

    pub fn len(&self) -> usize {
        self.anchors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One contrastive batch per video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoContrastiveBatch {
    steps: Vec<ContrastiveBatch>,
}

impl VideoContrastiveBatch {
    pub fn new(steps: Vec<ContrastiveBatch>) -> Result<Self> {
        let first = steps
            .first()
            .ok_or_else(|| Error::InvalidArgument("video batch needs at least one frame".into()))?;
        for s in &steps {
            if s.anchors.shape() != first.anchors.shape() || s.temperature != first.temperature {
                return Err(Error::InvalidArgument(
                    "all frames must share N, d and temperature".into(),
                ));
            }
        }
        Ok(VideoContrastiveBatch { steps })
    }

    pub fn steps(&self) -> &[ContrastiveBatch] {
        &self.steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardTrace {
    pub rewards: Vec<f64>,
    pub gamma: f64,
}

impl RewardTrace {
    pub fn new(rewards: Vec<f64>, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!("discount must be in [0, 1], got {gamma}")));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument("rewards must be finite".into()));
        }
        Ok(RewardTrace { rewards, gamma })
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("temperature must be positive, got {t}")))
    }
}

pub fn normalize_rows(x: &Tensor) -> Result<Tensor> {
    let norms = x.l2_norm_rows()?;
    if norms.data().contains(&0.0) {
        return Err(Error::InvalidArgument("cannot normalize a zero row".into()));
    }
    x.div_col(&norms)
}

/// Contrastive loss summed over anchors.
///
/// For anchor `i` the logits are `z_i . z_j / temperature` over the `2N`
/// rows of `[anchors; positives]`; the target is `N + i`. The self term
/// `j = i` stays in the denominator unless `exclude_self` is set. Inputs are
/// used as given (callers supply unit rows).
pub fn info_nce_with<O: Ops>(
    o: &mut O,
    anchors: &O::T,
    positives: &O::T,
    temperature: f64,
    exclude_self: bool,
) -> Result<O::T> {
    check_temperature(temperature)?;
    let (n, _) = o.val(anchors).dims2()?;
    if o.val(positives).shape() != o.val(anchors).shape() {
        return Err(Error::shape("info_nce", o.val(anchors).shape(), o.val(positives).shape()));
    }
    let all = o.concat_rows(&[anchors.clone(), positives.clone()])?;
    let all_t = o.transpose(&all)?;
    let sims = o.matmul(anchors, &all_t)?;
    let mut logits = o.scale(&sims, 1.0 / temperature);
    if exclude_self {
        let mut m = vec![0.0; n * 2 * n];
        for i in 0..n {
            m[i * 2 * n + i] = MASK_NEG;
        }
        let m = o.constant(Tensor::from_parts(vec![n, 2 * n], m));
        logits = o.add(&logits, &m)?;
    }
    let logp = o.log_softmax_rows(&logits)?;
    let idx: Vec<usize> = (0..n).map(|i| i * 2 * n + n + i).collect();
    let picked = o.gather(&logp, &idx)?;
    let total = o.sum(&picked);
    Ok(o.scale(&total, -1.0))
}

pub fn info_nce(batch: &ContrastiveBatch) -> Result<f64> {
    let mut o = Eager::new();
    info_nce_with(
        &mut o,
        &batch.anchors,
        &batch.positives,
        batch.temperature,
        batch.exclude_self,
    )?
    .item()
}

/// Sum of the per-frame contrastive losses.
pub fn video_info_nce(batch: &VideoContrastiveBatch) -> Result<f64> {
    batch.steps.iter().map(info_nce).sum()
}

fn check_labels(labels: &[usize], m: usize, c: usize) -> Result<()> {
    if labels.len() != m {
        return Err(Error::InvalidArgument(format!("{} labels for {m} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!("label {bad} outside 0..{c}")));
    }
    Ok(())
}

/// Mean negative log-likelihood of `labels` under `softmax(logits)`.
pub fn cross_entropy_with<O: Ops>(o: &mut O, logits: &O::T, labels: &[usize]) -> Result<O::T> {
    let (m, c) = o.val(logits).dims2()?;
    check_labels(labels, m, c)?;
    let logp = o.log_softmax_rows(logits)?;
    let idx: Vec<usize> = labels.iter().enumerate().map(|(i, &l)| i * c + l).collect();
    let picked = o.gather(&logp, &idx)?;
    let total = o.sum(&picked);
    Ok(o.scale(&total, -1.0 / m as f64))
}

pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    cross_entropy_with(&mut Eager::new(), logits, labels)?.item()
}

/// Mean over rows of `-sum_c p_c log softmax(logits)_c` with fixed targets `p`.
pub fn soft_cross_entropy_with<O: Ops>(o: &mut O, logits: &O::T, targets: &Tensor) -> Result<O::T> {
    let (m, _) = o.val(logits).dims2()?;
    if o.val(logits).shape() != targets.shape() {
        return Err(Error::shape("soft cross entropy", o.val(logits).shape(), targets.shape()));
    }
    let logp = o.log_softmax_rows(logits)?;
    let p = o.constant(targets.clone());
    let prod = o.mul(&logp, &p)?;
    let total = o.sum(&prod);
    Ok(o.scale(&total, -1.0 / m as f64))
}

/// Mean squared error over all elements.
pub fn mse_with<O: Ops>(o: &mut O, a: &O::T, b: &O::T) -> Result<O::T> {
    let n = o.val(a).numel();
    let diff = o.sub(a, b)?;
    let sq = o.mul(&diff, &diff)?;
    let total = o.sum(&sq);
    Ok(o.scale(&total, 1.0 / n as f64))
}

/// `alpha * CE(student, softmax(teacher)) + (1 - alpha) * MSE(features)`.
/// Teacher tensors are treated as frozen.
pub fn distill_loss_with<O: Ops>(
    o: &mut O,
    student_logits: &O::T,
    teacher_logits: &Tensor,
    student_feat: &O::T,
    teacher_feat: &Tensor,
    alpha: f64,
) -> Result<O::T> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must be in [0, 1], got {alpha}")));
    }
    if o.val(student_feat).shape() != teacher_feat.shape() {
        return Err(Error::shape("distill features", o.val(student_feat).shape(), teacher_feat.shape()));
    }
    let targets = teacher_logits.softmax_rows()?;
    let ce = soft_cross_entropy_with(o, student_logits, &targets)?;
    let tf = o.constant(teacher_feat.clone());
    let mse = mse_with(o, student_feat, &tf)?;
    let ce = o.scale(&ce, alpha);
    let mse = o.scale(&mse, 1.0 - alpha);
    o.add(&ce, &mse)
}

pub fn distill_loss(
    student_logits: &Tensor,
    teacher_logits: &Tensor,
    student_feat: &Tensor,
    teacher_feat: &Tensor,
    alpha: f64,
) -> Result<f64> {
    distill_loss_with(
        &mut Eager::new(),
        student_logits,
        teacher_logits,
        student_feat,
        teacher_feat,
        alpha,
    )?
    .item()
}

/// `sum_t gamma^t r_t`.
pub fn discounted_return(trace: &RewardTrace) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for r in &trace.rewards {
        total += discount * r;
        discount *= trace.gamma;
    }
    total
}

/// `keep[i] = probs[i] >= epsilon`.
pub fn rejection_filter(probs: &[f64], epsilon: f64) -> Result<Vec<bool>> {
    let unit = 0.0..=1.0;
    if !unit.contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon must be in [0, 1], got {epsilon}")));
    }
    if let Some(p) = probs.iter().find(|p| !unit.contains(*p)) {
        return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
    }
    Ok(probs.iter().map(|&p| p >= epsilon).collect())
}

/// `W + B A` as a new tensor.
pub fn lora_apply(w: &Tensor, b: &Tensor, a: &Tensor) -> Result<Tensor> {
    let (p, q) = w.dims2()?;
    let (bp, r) = b.dims2()?;
    let (ar, aq) = a.dims2()?;
    if bp != p || aq != q || ar != r {
        return Err(Error::InvalidArgument(format!(
            "lora shapes W {:?}, B {:?}, A {:?} are incompatible",
            w.shape(),
            b.shape(),
            a.shape()
        )));
    }
    if r > p.min(q) {
        return Err(Error::InvalidArgument(format!("rank {r} exceeds min({p}, {q})")));
    }
    w.add(&b.matmul(a)?)
}

/// Direct summation versions used as test oracles.
pub mod oracle {
    use super::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    pub fn info_nce(batch: &ContrastiveBatch) -> f64 {
        let n = batch.len();
        let t = batch.temperature();
        let row = |j: usize| {
            if j < n {
                batch.anchors().row(j)
            } else {
                batch.positives().row(j - n)
            }
        };
        let mut loss = 0.0;
        for i in 0..n {
            let zi = batch.anchors().row(i);
            let mut denom = 0.0;
            for j in 0..2 * n {
                if batch.exclude_self() && j == i {
                    continue;
                }
                denom += (dot(zi, row(j)) / t).exp();
            }
            let num = (dot(zi, batch.positives().row(i)) / t).exp();
            loss -= (num / denom).ln();
        }
        loss
    }

    pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> f64 {
        let m = logits.rows();
        let mut total = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            let z: f64 = logits.row(i).iter().map(|v| v.exp()).sum();
            total -= (logits.at(i, l).exp() / z).ln();
        }
        total / m as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use std::f64::consts::{E, LN_2};

    fn unit(rows: usize, d: usize, seed: u64) -> Tensor {
        normalize_rows(&Tensor::randn(&[rows, d], 1.0, &mut seeded(seed))).unwrap()
    }

    #[test]
    fn info_nce_fixtures() {
        let z = Tensor::from_rows(&[&[1.0, 0.0]]).unwrap();
        let b = ContrastiveBatch::new(z.clone(), z.clone(), 1.0).unwrap();
        assert!((info_nce(&b).unwrap() - LN_2).abs() < 1e-12);

        let p = Tensor::from_rows(&[&[0.0, 1.0]]).unwrap();
        let b = ContrastiveBatch::new(z, p, 1.0).unwrap();
        assert!((info_nce(&b).unwrap() - (1.0 + E).ln()).abs() < 1e-12);
    }

    #[test]
    fn info_nce_matches_double_loop_seed_5() {
        let mut rng = seeded(5);
        let a = normalize_rows(&Tensor::randn(&[2, 3], 1.0, &mut rng)).unwrap();
        let p = normalize_rows(&Tensor::randn(&[2, 3], 1.0, &mut rng)).unwrap();
        for exclude in [false, true] {
            let b = ContrastiveBatch::new(a.clone(), p.clone(), 0.07).unwrap().with_exclude_self(exclude);
            assert!((info_nce(&b).unwrap() - oracle::info_nce(&b)).abs() < 1e-12);
        }
    }

    #[test]
    fn info_nce_rejects_bad_inputs() {
        let z = Tensor::from_rows(&[&[1.0, 0.0]]).unwrap();
        assert!(ContrastiveBatch::new(z.clone(), z.clone(), 0.0).is_err());
        assert!(ContrastiveBatch::new(z.clone(), z.scale(2.0), 1.0).is_err());
    }

    #[test]
    fn video_loss_is_sum_over_frames() {
        let b1 = ContrastiveBatch::new(unit(2, 3, 6), unit(2, 3, 60), 0.07).unwrap();
        let b2 = ContrastiveBatch::new(unit(2, 3, 61), unit(2, 3, 62), 0.07).unwrap();
        let one = VideoContrastiveBatch::new(vec![b1.clone()]).unwrap();
        assert_eq!(video_info_nce(&one).unwrap(), info_nce(&b1).unwrap());
        let three = VideoContrastiveBatch::new(vec![b1.clone(); 3]).unwrap();
        assert!((video_info_nce(&three).unwrap() - 3.0 * info_nce(&b1).unwrap()).abs() < 1e-12);
        let mixed = VideoContrastiveBatch::new(vec![b1.clone(), b2.clone()]).unwrap();
        let parts = oracle::info_nce(&b1) + oracle::info_nce(&b2);
        assert!((video_info_nce(&mixed).unwrap() - parts).abs() < 1e-12);
        let other_t = ContrastiveBatch::new(unit(2, 3, 1), unit(2, 3, 2), 0.5).unwrap();
        assert!(VideoContrastiveBatch::new(vec![b1, other_t]).is_err());
    }

    #[test]
    fn cross_entropy_fixtures() {
        let uniform = Tensor::zeros(&[1, 4]);
        assert!((cross_entropy(&uniform, &[2]).unwrap() - 4f64.ln()).abs() < 1e-12);
        let confident = Tensor::from_rows(&[&[100.0, 0.0, 0.0]]).unwrap();
        assert!(cross_entropy(&confident, &[0]).unwrap() < 1e-8);
        let logits = Tensor::randn(&[2, 3], 1.0, &mut seeded(8));
        let got = cross_entropy(&logits, &[1, 2]).unwrap();
        assert!((got - oracle::cross_entropy(&logits, &[1, 2])).abs() < 1e-12);
        assert!(cross_entropy(&logits, &[3, 0]).is_err());
    }

    #[test]
    fn distill_fixtures() {
        let mut rng = seeded(9);
        let sl = Tensor::randn(&[1, 2], 1.0, &mut rng);
        let tl = Tensor::randn(&[1, 2], 1.0, &mut rng);
        let sf = Tensor::randn(&[1, 2], 1.0, &mut rng);
        let tf = Tensor::randn(&[1, 2], 1.0, &mut rng);
        assert_eq!(distill_loss(&sl, &tl, &sf, &sf, 0.0).unwrap(), 0.0);

        let tz = |i: usize| tl.data()[i].exp() / (tl.data()[0].exp() + tl.data()[1].exp());
        let sz = |i: usize| sl.data()[i].exp() / (sl.data()[0].exp() + sl.data()[1].exp());
        let ce = -(tz(0) * sz(0).ln() + tz(1) * sz(1).ln());
        let mse = ((sf.data()[0] - tf.data()[0]).powi(2) + (sf.data()[1] - tf.data()[1]).powi(2)) / 2.0;
        assert!((distill_loss(&sl, &tl, &sf, &tf, 1.0).unwrap() - ce).abs() < 1e-12);
        let got = distill_loss(&sl, &tl, &sf, &tf, 0.5).unwrap();
        assert!((got - (0.5 * ce + 0.5 * mse)).abs() < 1e-12);
        assert!(distill_loss(&sl, &tl, &sf, &tf, 1.5).is_err());
    }

    #[test]
    fn discounted_return_fixtures() {
        let r = |v: Vec<f64>, g| discounted_return(&RewardTrace::new(v, g).unwrap());
        assert_eq!(r(vec![4.0, 5.0, 6.0], 0.0), 4.0);
        assert_eq!(r(vec![1.0, 1.0, 1.0], 0.5), 1.75);
        assert!((r(vec![2.0, -1.0, 3.0], 0.9) - 3.53).abs() < 1e-12);
        assert_eq!(r(vec![2.0, -1.0, 3.0], 1.0), 4.0);
        assert!(RewardTrace::new(vec![1.0], 1.5).is_err());
    }

    #[test]
    fn rejection_fixtures() {
        assert_eq!(rejection_filter(&[0.0, 0.3], 0.0).unwrap(), vec![true, true]);
        assert_eq!(rejection_filter(&[0.1, 0.9], 0.5).unwrap(), vec![false, true]);
        assert_eq!(rejection_filter(&[0.5], 0.5).unwrap(), vec![true]);
        assert!(rejection_filter(&[1.2], 0.5).is_err());
        assert!(rejection_filter(&[0.2], -0.1).is_err());
    }

    #[test]
    fn lora_fixtures() {
        let w = Tensor::identity(2);
        let b = Tensor::from_rows(&[&[1.0], &[0.0]]).unwrap();
        let a = Tensor::from_rows(&[&[0.0, 1.0]]).unwrap();
        assert_eq!(
            lora_apply(&w, &b, &a).unwrap(),
            Tensor::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap()
        );
        assert_eq!(lora_apply(&w, &Tensor::zeros(&[2, 1]), &a).unwrap(), w);
        assert_eq!(lora_apply(&w, &b, &Tensor::zeros(&[1, 2])).unwrap(), w);
        assert!(lora_apply(&w, &Tensor::zeros(&[2, 3]), &Tensor::zeros(&[3, 2])).is_err());
    }
}

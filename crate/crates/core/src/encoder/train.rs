use super::config::EncoderConfig;
use super::image::ImageGrid;
use super::stack::{encode_images_with, LayerStack};
use crate::error::{Error, Result};
use crate::tensor::{GradTape, Tensor};
use crate::training_math::info_nce_with;

/// AdamW with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    steps: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn from_config(cfg: &EncoderConfig) -> Self {
        Self::new(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidArgument(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
            self.v = self.m.clone();
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.shape() != g.shape() || m.shape() != g.shape() {
                return Err(Error::shape("adamw", p.shape(), g.shape()));
            }
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                let gi = g.data()[i];
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * gi;
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * gi * gi;
                let update = (md[i] / c1) / ((vd[i] / c2).sqrt() + self.eps);
                pd[i] -= self.lr * (update + self.weight_decay * pd[i]);
            }
        }
        Ok(())
    }
}

/// Contrastive loss over `(image, positive)` pairs and its gradient for
/// every parameter, in [`LayerStack::named`] order.
pub fn contrastive_loss_and_grads(
    stack: &LayerStack,
    pairs: &[(ImageGrid, ImageGrid)],
    cfg: &EncoderConfig,
) -> Result<(f64, Vec<Tensor>)> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "contrastive step needs at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    let (originals, positives): (Vec<ImageGrid>, Vec<ImageGrid>) = pairs.iter().cloned().unzip();
    let mut tape = GradTape::new();
    let params = stack.map(|t| tape.param(t));
    let a = encode_images_with(&mut tape, &params, cfg, &originals)?;
    let p = encode_images_with(&mut tape, &params, cfg, &positives)?;
    let loss = info_nce_with(&mut tape, &a, &p, cfg.temperature, cfg.exclude_self)?;
    let value = tape.value(loss).item()?;
    let grads = tape.backward(loss)?;
    let out = params
        .named()
        .into_iter()
        .zip(stack.named())
        .map(|((_, v), (_, t))| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((value, out))
}

/// One AdamW step on the contrastive loss. Returns the loss measured before
/// the update.
pub fn contrastive_train_step(
    stack: &mut LayerStack,
    opt: &mut AdamW,
    pairs: &[(ImageGrid, ImageGrid)],
    cfg: &EncoderConfig,
) -> Result<f64> {
    let (loss, grads) = contrastive_loss_and_grads(stack, pairs, cfg)?;
    let params = stack.named_mut().into_iter().map(|(_, t)| t).collect();
    opt.step(params, &grads)?;
    Ok(loss)
}

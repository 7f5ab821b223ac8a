use std::path::Path;

use rand::Rng;

use super::config::EncoderConfig;
use super::image::{extract_patches, ImageGrid};
use super::stack::{encode_images_with, LayerStack};
use crate::error::{Error, Result};
use crate::tensor::{io, Eager, Ops, Tensor};
use crate::training_math::distill_loss_with;

/// Frozen model producing targets for distillation.
pub trait Teacher {
    /// `(logits [N, C], features [N, d])` for each image.
    fn predict(&self, images: &[ImageGrid]) -> Result<(Tensor, Tensor)>;
}

/// Random frozen teacher: mean patch vector through two fixed projections.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTeacher {
    pub patch_px: usize,
    /// `[patch_dim, d]`.
    pub feature_proj: Tensor,
    /// `[d, C]`.
    pub logit_proj: Tensor,
}

impl SyntheticTeacher {
    pub fn random<R: Rng + ?Sized>(patch_px: usize, d: usize, classes: usize, rng: &mut R) -> Self {
        let patch_dim = patch_px * patch_px * 3;
        SyntheticTeacher {
            patch_px,
            feature_proj: Tensor::randn(&[patch_dim, d], 1.0 / (patch_dim as f64).sqrt(), rng),
            logit_proj: Tensor::randn(&[d, classes], 1.0, rng),
        }
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<io::Manifest> {
        let p = Tensor::scalar(self.patch_px as f64);
        io::save(
            dir,
            stem,
            &[
                ("patch_px".into(), &p),
                ("feature_proj".into(), &self.feature_proj),
                ("logit_proj".into(), &self.logit_proj),
            ],
        )
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let tensors = io::load(dir, stem)?;
        let get = |name: &str| {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::MissingTensor(name.into()))
        };
        Ok(SyntheticTeacher {
            patch_px: get("patch_px")?.item()? as usize,
            feature_proj: get("feature_proj")?,
            logit_proj: get("logit_proj")?,
        })
    }
}

impl Teacher for SyntheticTeacher {
    fn predict(&self, images: &[ImageGrid]) -> Result<(Tensor, Tensor)> {
        let rows = images
            .iter()
            .map(|img| {
                let patches = extract_patches(img, self.patch_px)?;
                let n = patches.rows() as f64;
                patches.sum_cols()?.scale(1.0 / n).reshape(&[1, patches.cols()])?.matmul(&self.feature_proj)
            })
            .collect::<Result<Vec<_>>>()?;
        let feats = Tensor::concat_rows(&rows.iter().collect::<Vec<_>>())?;
        let logits = feats.matmul(&self.logit_proj)?;
        Ok((logits, feats))
    }
}

/// Distillation loss of the encoder against `teacher` on `images`.
///
/// Student features are the encoder outputs; student logits are those
/// features through `student_head` (`[d_model, C]`).
pub fn distill_step_loss<O: Ops>(
    o: &mut O,
    stack: &LayerStack<O::T>,
    student_head: &O::T,
    cfg: &EncoderConfig,
    images: &[ImageGrid],
    teacher: &dyn Teacher,
    alpha: f64,
) -> Result<O::T> {
    let (t_logits, t_feats) = teacher.predict(images)?;
    let feats = encode_images_with(o, stack, cfg, images)?;
    let logits = o.matmul(&feats, student_head)?;
    distill_loss_with(o, &logits, &t_logits, &feats, &t_feats, alpha)
}

impl SyntheticTeacher {
    /// Eager convenience wrapper around [`distill_step_loss`].
    pub fn distill_loss(
        &self,
        stack: &LayerStack,
        student_head: &Tensor,
        cfg: &EncoderConfig,
        images: &[ImageGrid],
        alpha: f64,
    ) -> Result<f64> {
        distill_step_loss(&mut Eager::new(), stack, student_head, cfg, images, self, alpha)?.item()
    }
}

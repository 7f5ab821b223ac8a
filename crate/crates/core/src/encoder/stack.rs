use std::path::Path;

use rand::Rng;

use super::config::{EncoderConfig, Pool};
use super::image::{extract_patches, ImageGrid};
use crate::aoe::{aoe_rows_with, ExpertBank, ExpertWeights};
use crate::attention::{attention_layer, AttentionParams};
use crate::error::{Error, Result};
use crate::packing::{plan_layouts, position_encoding, size_embedding, PackItem, SegmentInfo};
use crate::tensor::{io, Eager, Ops, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams<P = Tensor> {
    pub gain: P,
    pub bias: P,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<P = Tensor> {
    pub attn_norm: LayerNormParams<P>,
    pub attention: AttentionParams<P>,
    pub ffn_norm: LayerNormParams<P>,
    pub experts: Vec<ExpertWeights<P>>,
}

/// All encoder parameters.
///
/// Every layer contributes two sublayers (attention, then AoE). Sublayer `s`
/// sees the states `H_0..=H_s` and owns `residual_alphas[s]` of length `s + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack<P = Tensor> {
    pub patch_w: P,
    pub patch_b: P,
    pub layers: Vec<LayerParams<P>>,
    pub residual_alphas: Vec<P>,
    pub final_norm: LayerNormParams<P>,
}

impl<P> LayerStack<P> {
    /// Applies `f` to every parameter in [`named`](Self::named) order.
    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> LayerStack<Q> {
        let patch_w = f(&self.patch_w);
        let patch_b = f(&self.patch_b);
        let layers = self
            .layers
            .iter()
            .map(|l| LayerParams {
                attn_norm: LayerNormParams {
                    gain: f(&l.attn_norm.gain),
                    bias: f(&l.attn_norm.bias),
                },
                attention: l.attention.map(&mut f),
                ffn_norm: LayerNormParams {
                    gain: f(&l.ffn_norm.gain),
                    bias: f(&l.ffn_norm.bias),
                },
                experts: l.experts.iter().map(|e| e.map(&mut f)).collect(),
            })
            .collect();
        let residual_alphas = self.residual_alphas.iter().map(&mut f).collect();
        let final_norm = LayerNormParams {
            gain: f(&self.final_norm.gain),
            bias: f(&self.final_norm.bias),
        };
        LayerStack {
            patch_w,
            patch_b,
            layers,
            residual_alphas,
            final_norm,
        }
    }

    pub fn named(&self) -> Vec<(String, &P)> {
        let mut out = vec![("patch.w".to_string(), &self.patch_w), ("patch.b".to_string(), &self.patch_b)];
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layers.{i}.attn_norm.gain"), &l.attn_norm.gain));
            out.push((format!("layers.{i}.attn_norm.bias"), &l.attn_norm.bias));
            for (n, p) in l.attention.named() {
                out.push((format!("layers.{i}.attention.{n}"), p));
            }
            out.push((format!("layers.{i}.ffn_norm.gain"), &l.ffn_norm.gain));
            out.push((format!("layers.{i}.ffn_norm.bias"), &l.ffn_norm.bias));
            for (e, ex) in l.experts.iter().enumerate() {
                for (n, p) in ex.named() {
                    out.push((format!("layers.{i}.experts.{e}.{n}"), p));
                }
            }
        }
        for (s, a) in self.residual_alphas.iter().enumerate() {
            out.push((format!("residual_alphas.{s}"), a));
        }
        out.push(("final_norm.gain".to_string(), &self.final_norm.gain));
        out.push(("final_norm.bias".to_string(), &self.final_norm.bias));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut P)> {
        let mut out = vec![
            ("patch.w".to_string(), &mut self.patch_w),
            ("patch.b".to_string(), &mut self.patch_b),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("layers.{i}.attn_norm.gain"), &mut l.attn_norm.gain));
            out.push((format!("layers.{i}.attn_norm.bias"), &mut l.attn_norm.bias));
            for (n, p) in l.attention.named_mut() {
                out.push((format!("layers.{i}.attention.{n}"), p));
            }
            out.push((format!("layers.{i}.ffn_norm.gain"), &mut l.ffn_norm.gain));
            out.push((format!("layers.{i}.ffn_norm.bias"), &mut l.ffn_norm.bias));
            for (e, ex) in l.experts.iter_mut().enumerate() {
                for (n, p) in ex.named_mut() {
                    out.push((format!("layers.{i}.experts.{e}.{n}"), p));
                }
            }
        }
        for (s, a) in self.residual_alphas.iter_mut().enumerate() {
            out.push((format!("residual_alphas.{s}"), a));
        }
        out.push(("final_norm.gain".to_string(), &mut self.final_norm.gain));
        out.push(("final_norm.bias".to_string(), &mut self.final_norm.bias));
        out
    }
}

fn layer_norm_init(d: usize) -> LayerNormParams {
    LayerNormParams {
        gain: Tensor::ones(&[d]),
        bias: Tensor::zeros(&[d]),
    }
}

/// Alphas for sublayer `s`: the plain skip `alpha_s = 1`, all others 0.
fn alpha_init(s: usize) -> Tensor {
    let mut a = Tensor::zeros(&[s + 1]);
    a.data_mut()[s] = 1.0;
    a
}

impl LayerStack<Tensor> {
    pub fn init<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let std = cfg.init_std;
        let patch_w = Tensor::randn(&[cfg.patch_dim(), d], std, rng);
        let layers = (0..cfg.n_layers)
            .map(|_| LayerParams {
                attn_norm: layer_norm_init(d),
                attention: AttentionParams::random(d, std, rng),
                ffn_norm: layer_norm_init(d),
                experts: (0..cfg.aoe.n_experts)
                    .map(|_| ExpertWeights::random(cfg.expert_dims(), std, rng))
                    .collect(),
            })
            .collect();
        Ok(LayerStack {
            patch_w,
            patch_b: Tensor::zeros(&[d]),
            layers,
            residual_alphas: (0..2 * cfg.n_layers).map(alpha_init).collect(),
            final_norm: layer_norm_init(d),
        })
    }

    /// Checks every parameter shape against `cfg`.
    pub fn validate(&self, cfg: &EncoderConfig) -> Result<()> {
        let template = Self::init(cfg, &mut crate::rng::seeded(0))?;
        let mine = self.named();
        let want = template.named();
        if mine.len() != want.len() {
            return Err(Error::InvalidArgument(format!(
                "stack has {} parameters, config implies {}",
                mine.len(),
                want.len()
            )));
        }
        for ((name, t), (wname, w)) in mine.iter().zip(&want) {
            if name != wname || t.shape() != w.shape() {
                return Err(Error::InvalidArgument(format!(
                    "parameter {name} {:?} does not match {wname} {:?}",
                    t.shape(),
                    w.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    /// AoE bank of layer `l`.
    pub fn expert_bank(&self, l: usize, k_active: usize) -> Result<ExpertBank> {
        let layer = self
            .layers
            .get(l)
            .ok_or_else(|| Error::InvalidArgument(format!("no layer {l}")))?;
        ExpertBank::new(layer.experts.clone(), k_active)
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<io::Manifest> {
        let named: Vec<(String, &Tensor)> = self.named();
        io::save(dir, stem, &named)
    }

    /// Loads weights written by [`save`](Self::save), checking names and
    /// shapes against `cfg`.
    pub fn load(dir: &Path, stem: &str, cfg: &EncoderConfig) -> Result<Self> {
        let mut stack = Self::init(cfg, &mut crate::rng::seeded(0))?;
        let tensors = io::load(dir, stem)?;
        for (name, slot) in stack.named_mut() {
            let t = tensors
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::MissingTensor(name.clone()))?;
            if t.shape() != slot.shape() {
                return Err(Error::shape("load", slot.shape(), t.shape()));
            }
            *slot = t.clone();
        }
        Ok(stack)
    }
}

/// `layer_output + sum_i alphas[i] * history[i]`.
///
/// With `include_embedding = false` the `i = 0` term is skipped, except for
/// the first sublayer, whose only history entry is its own input.
pub fn dense_residual_step_with<O: Ops>(
    o: &mut O,
    layer_output: &O::T,
    history: &[O::T],
    alphas: &O::T,
    include_embedding: bool,
) -> Result<O::T> {
    let n_alpha = o.val(alphas).numel();
    if history.is_empty() || n_alpha != history.len() {
        return Err(Error::InvalidArgument(format!(
            "{} alphas for {} history states",
            n_alpha,
            history.len()
        )));
    }
    let shape = o.val(layer_output).shape().to_vec();
    for h in history {
        if o.val(h).shape() != shape.as_slice() {
            return Err(Error::shape("dense residual", &shape, o.val(h).shape()));
        }
    }
    let last = history.len() - 1;
    let mut acc = layer_output.clone();
    for (i, h) in history.iter().enumerate() {
        if i == 0 && !include_embedding && last != 0 {
            continue;
        }
        let a = o.gather(alphas, &[i])?;
        let term = o.mul_scalar(h, &a)?;
        acc = o.add(&acc, &term)?;
    }
    Ok(acc)
}

pub fn dense_residual_step(layer_output: &Tensor, history: &[Tensor], alphas: &Tensor) -> Result<Tensor> {
    dense_residual_step_with(&mut Eager::new(), layer_output, history, alphas, true)
}

fn layer_norm_with<O: Ops>(o: &mut O, x: &O::T, p: &LayerNormParams<O::T>, eps: f64) -> Result<O::T> {
    let n = o.layer_norm_rows(x, eps)?;
    let g = o.mul_row(&n, &p.gain)?;
    o.add_row(&g, &p.bias)
}

/// Runs all sublayers over one packed sequence and applies the final norm.
fn stack_forward<O: Ops>(
    o: &mut O,
    stack: &LayerStack<O::T>,
    cfg: &EncoderConfig,
    x: &O::T,
    segment_ids: &[usize],
) -> Result<O::T> {
    let eps = cfg.layer_norm_eps;
    let mut history = vec![x.clone()];
    for (l, layer) in stack.layers.iter().enumerate() {
        let h = history.last().expect("history starts non-empty");
        let normed = layer_norm_with(o, h, &layer.attn_norm, eps)?;
        let y = attention_layer(o, &normed, &layer.attention, cfg.attention_kind(l), Some(segment_ids))?;
        let h = dense_residual_step_with(o, &y, &history, &stack.residual_alphas[2 * l], cfg.residual_from_embedding)?;
        history.push(h);

        let h = history.last().expect("just pushed");
        let normed = layer_norm_with(o, h, &layer.ffn_norm, eps)?;
        let downs: Vec<O::T> = layer.experts.iter().map(|e| e.w_down.clone()).collect();
        let combined = o.concat_cols(&downs)?;
        let y = aoe_rows_with(o, &normed, &layer.experts, &combined, cfg.aoe.k_active)?;
        let h = dense_residual_step_with(
            o,
            &y,
            &history,
            &stack.residual_alphas[2 * l + 1],
            cfg.residual_from_embedding,
        )?;
        history.push(h);
    }
    let h = history.last().expect("history starts non-empty");
    layer_norm_with(o, h, &stack.final_norm, eps)
}

fn pool_segment<O: Ops>(o: &mut O, h: &O::T, seg: &SegmentInfo, cfg: &EncoderConfig) -> Result<O::T> {
    let d = cfg.d_model;
    let count = if cfg.pool_includes_size_token {
        seg.token_count
    } else {
        seg.token_count - 1
    };
    let start = seg.offset;
    match cfg.pool {
        Pool::Mean => {
            let rows = o.slice(h, start..start + count, 0..d)?;
            let total = o.sum_cols(&rows)?;
            let mean = o.scale(&total, 1.0 / count as f64);
            o.reshape(&mean, &[1, d])
        }
        Pool::LastToken => o.slice(h, start + count - 1..start + count, 0..d),
    }
}

/// Packs `images`, encodes every pack and returns `[N, d_model]` unit-norm
/// features in input order.
pub fn encode_images_with<O: Ops>(
    o: &mut O,
    stack: &LayerStack<O::T>,
    cfg: &EncoderConfig,
    images: &[ImageGrid],
) -> Result<O::T> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::InvalidArgument("no images to encode".into()));
    }
    if stack.layers.len() != cfg.n_layers || stack.residual_alphas.len() != 2 * cfg.n_layers {
        return Err(Error::InvalidArgument("stack depth does not match config".into()));
    }
    let d = cfg.d_model;
    let mut tokens = Vec::with_capacity(images.len());
    let mut items = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        let patches = o.constant(extract_patches(img, cfg.patch_px)?);
        let t = o.matmul(&patches, &stack.patch_w)?;
        let t = o.add_row(&t, &stack.patch_b)?;
        items.push(PackItem {
            image_id: i,
            width_px: img.width_px(),
            height_px: img.height_px(),
            patch_tokens: o.val(&t).rows(),
        });
        tokens.push(t);
    }

    let mut pooled: Vec<Option<O::T>> = vec![None; images.len()];
    for layout in plan_layouts(&items, cfg.capacity)? {
        let mut parts = Vec::with_capacity(2 * layout.members.len());
        for &m in &layout.members {
            let it = items[m];
            parts.push(tokens[m].clone());
            let size = size_embedding(it.width_px, it.height_px, d)?.reshape(&[1, d])?;
            parts.push(o.constant(size));
        }
        let x = o.concat_rows(&parts)?;
        let pe = o.constant(position_encoding(&layout.positions, d)?);
        let x = o.add(&x, &pe)?;
        let h = stack_forward(o, stack, cfg, &x, &layout.segment_ids)?;
        for (seg, &m) in layout.segments.iter().zip(&layout.members) {
            pooled[m] = Some(pool_segment(o, &h, seg, cfg)?);
        }
    }
    let rows: Vec<O::T> = pooled.into_iter().map(|p| p.expect("every image is packed")).collect();
    let feats = o.concat_rows(&rows)?;
    let norms = o.l2_norm_rows(&feats)?;
    o.div_col(&feats, &norms)
}

pub fn encode_images(images: &[ImageGrid], stack: &LayerStack, cfg: &EncoderConfig) -> Result<Tensor> {
    encode_images_with(&mut Eager::new(), stack, cfg, images)
}

/// Frame features `[T, d_model]`; frames are packed like independent images.
pub fn encode_video(frames: &[ImageGrid], stack: &LayerStack, cfg: &EncoderConfig) -> Result<Tensor> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("video needs at least one frame".into()));
    }
    encode_images(frames, stack, cfg)
}

/// Reference path: each image encoded alone, results stacked.
pub fn encode_unpacked(images: &[ImageGrid], stack: &LayerStack, cfg: &EncoderConfig) -> Result<Tensor> {
    let rows = images
        .iter()
        .map(|img| encode_images(std::slice::from_ref(img), stack, cfg))
        .collect::<Result<Vec<_>>>()?;
    Tensor::concat_rows(&rows.iter().collect::<Vec<_>>())
}

/// Independent deep copy used as the starting point of a video encoder.
pub fn init_video_encoder(image_stack: &LayerStack) -> LayerStack {
    image_stack.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::image::synthetic_shape_image;
    use crate::rng::seeded;

    fn small_cfg(n_layers: usize) -> EncoderConfig {
        EncoderConfig {
            d_model: 8,
            n_layers,
            patch_px: 2,
            capacity: 64,
            init_std: 0.3,
            aoe: crate::encoder::AoeConfig {
                n_experts: 3,
                d_low: 2,
                d_ffn: 6,
                k_active: 2,
            },
            ..Default::default()
        }
    }

    fn images(seed: u64, sizes: &[(usize, usize)]) -> Vec<ImageGrid> {
        let mut rng = seeded(seed);
        sizes.iter().map(|&(h, w)| synthetic_shape_image(&mut rng, h, w).unwrap()).collect()
    }

    #[test]
    fn dense_residual_fixtures() {
        let h0 = Tensor::from_rows(&[&[1.0, 2.0]]).unwrap();
        let h1 = Tensor::from_rows(&[&[-1.0, 0.5]]).unwrap();
        let h2 = Tensor::from_rows(&[&[3.0, 4.0]]).unwrap();
        let out = Tensor::from_rows(&[&[0.1, 0.2]]).unwrap();
        let hist = [h0.clone(), h1.clone(), h2.clone()];
        assert_eq!(dense_residual_step(&out, &hist, &Tensor::zeros(&[3])).unwrap(), out);
        let doubled = dense_residual_step(&h2, &hist, &Tensor::vector(&[0.0, 0.0, 1.0])).unwrap();
        assert_eq!(doubled, h2.scale(2.0));
        let got = dense_residual_step(&out, &hist, &Tensor::vector(&[0.5, 0.25, 1.0])).unwrap();
        let expected = [0.1 + 0.5 * 1.0 - 0.25 + 3.0, 0.2 + 1.0 + 0.125 + 4.0];
        for (a, b) in got.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(dense_residual_step(&out, &hist, &Tensor::zeros(&[2])).is_err());
        let wrong = [h0, Tensor::zeros(&[2, 2])];
        assert!(dense_residual_step(&out, &wrong, &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn named_order_matches_map_order() {
        let cfg = small_cfg(2);
        let stack = LayerStack::init(&cfg, &mut seeded(1)).unwrap();
        let mut i = 0;
        let indexed = stack.map(|_| {
            i += 1;
            i - 1
        });
        let order: Vec<usize> = indexed.named().into_iter().map(|(_, v)| *v).collect();
        assert_eq!(order, (0..order.len()).collect::<Vec<_>>());
        let names: Vec<String> = stack.named().into_iter().map(|(n, _)| n).collect();
        let mut unique = names.clone();
        unique.dedup();
        assert_eq!(unique.len(), names.len());
    }

    #[test]
    fn outputs_are_unit_and_duplicates_agree() {
        let cfg = small_cfg(2);
        let stack = LayerStack::init(&cfg, &mut seeded(2)).unwrap();
        let imgs = images(3, &[(5, 6), (4, 4)]);
        let batch = [imgs[0].clone(), imgs[1].clone(), imgs[0].clone()];
        let f = encode_images(&batch, &stack, &cfg).unwrap();
        assert_eq!(f.row(0), f.row(2));
        for n in f.l2_norm_rows().unwrap().data() {
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn packed_matches_unpacked() {
        for n_layers in [1, 2, 4] {
            let cfg = small_cfg(n_layers);
            let stack = LayerStack::init(&cfg, &mut seeded(n_layers as u64)).unwrap();
            let imgs = images(4, &[(6, 5), (3, 3), (8, 4)]);
            let packed = encode_images(&imgs, &stack, &cfg).unwrap();
            let single = encode_unpacked(&imgs, &stack, &cfg).unwrap();
            assert!(packed.max_abs_diff(&single).unwrap() <= 1e-9, "n_layers = {n_layers}");
        }
    }

    #[test]
    fn video_fixtures() {
        let cfg = small_cfg(2);
        let stack = LayerStack::init(&cfg, &mut seeded(5)).unwrap();
        let frames = images(6, &[(4, 6), (4, 6), (4, 6)]);
        let one = encode_video(&frames[..1], &stack, &cfg).unwrap();
        assert_eq!(one, encode_images(&frames[..1], &stack, &cfg).unwrap());
        let all = encode_video(&frames, &stack, &cfg).unwrap();
        let rev: Vec<ImageGrid> = frames.iter().rev().cloned().collect();
        let all_rev = encode_video(&rev, &stack, &cfg).unwrap();
        for t in 0..3 {
            let d = all.row(t).iter().zip(all_rev.row(2 - t)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d <= 1e-9);
        }
        assert!(all.max_abs_diff(&encode_unpacked(&frames, &stack, &cfg).unwrap()).unwrap() <= 1e-9);
        assert!(encode_video(&[], &stack, &cfg).is_err());
    }

    #[test]
    fn video_init_is_an_isolated_copy() {
        let cfg = small_cfg(1);
        let stack = LayerStack::init(&cfg, &mut seeded(7)).unwrap();
        let mut video = init_video_encoder(&stack);
        let imgs = images(8, &[(4, 4)]);
        assert_eq!(encode_images(&imgs, &stack, &cfg).unwrap(), encode_images(&imgs, &video, &cfg).unwrap());
        video.patch_w.data_mut()[0] += 1.0;
        assert_ne!(video, stack);
        assert_eq!(stack, LayerStack::init(&cfg, &mut seeded(7)).unwrap());

        let dir = tempfile::tempdir().unwrap();
        let m1 = stack.save(dir.path(), "image").unwrap();
        let m2 = init_video_encoder(&stack).save(dir.path(), "video").unwrap();
        assert_eq!(m1.tensors, m2.tensors);
        let a = std::fs::read(dir.path().join("image.bin")).unwrap();
        let b = std::fs::read(dir.path().join("video.bin")).unwrap();
        assert_eq!(a, b);
        assert_eq!(LayerStack::load(dir.path(), "video", &cfg).unwrap(), stack);
    }

    #[test]
    fn frozen_alphas_reduce_to_pre_norm_residual_blocks() {
        let cfg = small_cfg(2);
        let stack = LayerStack::init(&cfg, &mut seeded(9)).unwrap();
        let imgs = images(10, &[(4, 6)]);
        let got = encode_images(&imgs, &stack, &cfg).unwrap();

        let img = &imgs[0];
        let d = cfg.d_model;
        let tokens = extract_patches(img, cfg.patch_px).unwrap().matmul(&stack.patch_w).unwrap();
        let size = size_embedding(img.width_px(), img.height_px(), d).unwrap().reshape(&[1, d]).unwrap();
        let mut x = Tensor::concat_rows(&[&tokens, &size]).unwrap();
        let n = x.rows();
        x = x.add(&position_encoding(&(0..n).collect::<Vec<_>>(), d).unwrap()).unwrap();
        let ln = |t: &Tensor, p: &LayerNormParams| {
            t.layer_norm_rows(cfg.layer_norm_eps).unwrap().mul_row(&p.gain).unwrap().add_row(&p.bias).unwrap()
        };
        let segs = vec![0; n];
        for (l, layer) in stack.layers.iter().enumerate() {
            let a = attention_layer(&mut Eager::new(), &ln(&x, &layer.attn_norm), &layer.attention, cfg.attention_kind(l), Some(&segs)).unwrap();
            x = x.add(&a).unwrap();
            let bank = stack.expert_bank(l, cfg.aoe.k_active).unwrap();
            let f = crate::aoe::aoe_forward_batch(&ln(&x, &layer.ffn_norm), &bank).unwrap();
            x = x.add(&f).unwrap();
        }
        let x = ln(&x, &stack.final_norm);
        let pooled = x.slice(0..n - 1, 0..d).unwrap().sum_cols().unwrap().scale(1.0 / (n - 1) as f64);
        let norm = pooled.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let expected = pooled.scale(1.0 / norm).reshape(&[1, d]).unwrap();
        assert!(got.max_abs_diff(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn pooling_variants_and_embedding_flag() {
        let imgs = images(11, &[(4, 4), (6, 2)]);
        for (pool, with_size, from_embedding) in [
            (Pool::LastToken, false, true),
            (Pool::Mean, true, true),
            (Pool::Mean, false, false),
        ] {
            let cfg = EncoderConfig {
                pool,
                pool_includes_size_token: with_size,
                residual_from_embedding: from_embedding,
                ..small_cfg(2)
            };
            let stack = LayerStack::init(&cfg, &mut seeded(12)).unwrap();
            let packed = encode_images(&imgs, &stack, &cfg).unwrap();
            let single = encode_unpacked(&imgs, &stack, &cfg).unwrap();
            assert!(packed.max_abs_diff(&single).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = small_cfg(2);
        let imgs = images(13, &[(5, 5), (3, 7)]);
        let a = encode_images(&imgs, &LayerStack::init(&cfg, &mut seeded(1)).unwrap(), &cfg).unwrap();
        let b = encode_images(&imgs, &LayerStack::init(&cfg, &mut seeded(1)).unwrap(), &cfg).unwrap();
        assert_eq!(a.data(), b.data());
    }
}

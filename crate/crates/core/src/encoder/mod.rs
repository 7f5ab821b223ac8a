//! Full packed image/video encoder: patch embedding, packing, hybrid
//! attention and AoE sublayers joined by dense learnable residuals,
//! per-segment pooling, plus the scaling augmentation and contrastive
//! training step.

mod config;
mod image;
mod stack;
mod teacher;
mod train;

pub use config::{AoeConfig, EncoderConfig, Pool};
pub use image::{
    extract_patches, patchify, random_uniform_scale, resize_bilinear, synthetic_pairs, synthetic_shape_image, toy_pairs, ImageGrid, TOY_PAIRS,
    TOY_SIDE_PX,
};
pub use stack::{
    dense_residual_step, dense_residual_step_with, encode_images, encode_images_with, encode_unpacked, encode_video,
    init_video_encoder, LayerNormParams, LayerParams, LayerStack,
};
pub use teacher::{distill_step_loss, SyntheticTeacher, Teacher};
pub use train::{contrastive_loss_and_grads, contrastive_train_step, AdamW};

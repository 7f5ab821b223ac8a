use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aoe::ExpertDims;
use crate::attention::{AttentionKind, FeatureMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoeConfig {
    pub n_experts: usize,
    pub d_low: usize,
    pub d_ffn: usize,
    pub k_active: usize,
}

impl Default for AoeConfig {
    fn default() -> Self {
        AoeConfig {
            n_experts: 4,
            d_low: 4,
            d_ffn: 32,
            k_active: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    #[default]
    Mean,
    /// Last pooled token of each segment.
    LastToken,
}

/// Encoder hyperparameters. Every field has a default, so a partial JSON
/// object is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_layers: usize,
    /// Leading layers using linear attention; `None` means `n_layers - 1`.
    pub n_linear_attention_layers: Option<usize>,
    pub feature_map: FeatureMap,
    pub aoe: AoeConfig,
    pub patch_px: usize,
    pub capacity: usize,
    pub pool: Pool,
    /// Pool over the size token as well as the patch tokens.
    pub pool_includes_size_token: bool,
    /// Include the embedding `H_0` in every dense residual sum.
    pub residual_from_embedding: bool,
    pub layer_norm_eps: f64,
    pub init_std: f64,
    pub temperature: f64,
    /// Drop the self-similarity term from the contrastive denominator.
    pub exclude_self: bool,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub scale_range: [f64; 2],
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_model: 16,
            n_layers: 2,
            n_linear_attention_layers: None,
            feature_map: FeatureMap::EluPlusOne,
            aoe: AoeConfig::default(),
            patch_px: 14,
            capacity: 256,
            pool: Pool::Mean,
            pool_includes_size_token: false,
            residual_from_embedding: true,
            layer_norm_eps: 1e-5,
            init_std: 0.02,
            temperature: 0.07,
            exclude_self: false,
            lr: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.01,
            scale_range: [0.5, 1.5],
            batch_size: 256,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    /// Model used by the toy contrastive run: wide enough that 200 AdamW
    /// steps at the default learning rate make visible progress.
    pub fn toy() -> Self {
        EncoderConfig {
            d_model: 128,
            n_layers: 2,
            patch_px: 8,
            init_std: 0.1,
            aoe: AoeConfig {
                n_experts: 4,
                d_low: 4,
                d_ffn: 256,
                k_active: 2,
            },
            ..Default::default()
        }
    }

    pub fn n_linear(&self) -> usize {
        self.n_linear_attention_layers
            .unwrap_or(self.n_layers.saturating_sub(1))
    }

    pub fn attention_kind(&self, layer: usize) -> AttentionKind {
        if layer < self.n_linear() {
            AttentionKind::Linear(self.feature_map)
        } else {
            AttentionKind::Softmax
        }
    }

    pub fn expert_dims(&self) -> ExpertDims {
        ExpertDims {
            d_model: self.d_model,
            d_low: self.aoe.d_low,
            d_ffn: self.aoe.d_ffn,
        }
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_px * self.patch_px * 3
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.d_model < 2 || self.n_layers == 0 || self.patch_px == 0 || self.capacity < 2 {
            return bad("d_model >= 2, n_layers >= 1, patch_px >= 1 and capacity >= 2 are required".into());
        }
        if self.n_linear() > self.n_layers {
            return bad(format!(
                "{} linear layers exceed n_layers = {}",
                self.n_linear(),
                self.n_layers
            ));
        }
        let a = &self.aoe;
        if a.n_experts == 0 || a.k_active == 0 || a.k_active > a.n_experts {
            return bad(format!("need 1 <= k_active ({}) <= n_experts ({})", a.k_active, a.n_experts));
        }
        if a.d_low == 0 || a.d_low >= self.d_model || a.d_ffn == 0 {
            return bad(format!("need 0 < d_low ({}) < d_model ({}) and d_ffn > 0", a.d_low, self.d_model));
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad(format!("invalid scale range [{lo}, {hi}]"));
        }
        if self.lr < 0.0 || self.layer_norm_eps <= 0.0 {
            return bad("lr must be >= 0 and layer_norm_eps > 0".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: EncoderConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_training_hyperparameters() {
        let c = EncoderConfig::default();
        assert_eq!(c.temperature, 0.07);
        assert_eq!(c.lr, 2e-5);
        assert_eq!(c.batch_size, 256);
        assert_eq!(c.scale_range, [0.5, 1.5]);
        assert_eq!((c.beta1, c.beta2, c.adam_eps, c.weight_decay), (0.9, 0.999, 1e-8, 0.01));
        assert_eq!(c.n_linear(), c.n_layers - 1);
        c.validate().unwrap();
    }

    #[test]
    fn empty_json_is_default_and_round_trips() {
        assert_eq!(EncoderConfig::from_json("{}").unwrap(), EncoderConfig::default());
        let c = EncoderConfig {
            n_linear_attention_layers: Some(0),
            pool: Pool::LastToken,
            seed: u64::MAX,
            ..Default::default()
        };
        let back: EncoderConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert!(EncoderConfig::from_json(r#"{"d_modle": 3}"#).is_err());
    }

    #[test]
    fn layer_kinds() {
        let c = EncoderConfig {
            n_layers: 3,
            ..Default::default()
        };
        assert_eq!(c.attention_kind(0), AttentionKind::Linear(FeatureMap::EluPlusOne));
        assert_eq!(c.attention_kind(1), AttentionKind::Linear(FeatureMap::EluPlusOne));
        assert_eq!(c.attention_kind(2), AttentionKind::Softmax);
    }

    #[test]
    fn rejects_invalid() {
        for json in [
            r#"{"temperature": 0.0}"#,
            r#"{"scale_range": [1.5, 0.5]}"#,
            r#"{"aoe": {"k_active": 9}}"#,
            r#"{"aoe": {"d_low": 16}}"#,
            r#"{"n_linear_attention_layers": 5}"#,
        ] {
            assert!(EncoderConfig::from_json(json).is_err(), "{json}");
        }
    }
}

//! Toy contrastive training run on the synthetic pair fixture.

use std::fmt::Write as _;
use std::path::Path;

use packenc::encoder::{contrastive_loss_and_grads, contrastive_train_step, toy_pairs, AdamW, EncoderConfig, LayerStack};
use packenc::rng::seeded;

use crate::error::Result;
use crate::report::{write_file, Metric};

/// Largest accepted final-to-initial loss ratio.
pub const MAX_LOSS_RATIO: f64 = 0.5;
pub const WEIGHTS_STEM: &str = "weights";

#[derive(Debug, Clone)]
pub struct ToyRun {
    /// `losses[s]` is the loss after `s` optimizer steps, for `s = 0..=steps`.
    pub losses: Vec<f64>,
    pub initial: LayerStack,
    pub trained: LayerStack,
}

impl ToyRun {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("losses always holds the initial value")
    }

    pub fn loss_ratio(&self) -> f64 {
        self.final_loss() / self.initial_loss()
    }
}

/// Initializes from `seed`, then takes `steps` AdamW steps on the full
/// pair fixture drawn from `seed`.
pub fn train_toy(cfg: &EncoderConfig, steps: usize, seed: u64) -> Result<ToyRun> {
    cfg.validate()?;
    let pairs = toy_pairs(seed, cfg.scale_range)?;
    let initial = LayerStack::init(cfg, &mut seeded(seed.wrapping_add(1)))?;
    let mut stack = initial.clone();
    let mut opt = AdamW::from_config(cfg);
    let mut losses = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        losses.push(contrastive_train_step(&mut stack, &mut opt, &pairs, cfg)?);
    }
    losses.push(contrastive_loss_and_grads(&stack, &pairs, cfg)?.0);
    Ok(ToyRun {
        losses,
        initial,
        trained: stack,
    })
}

pub fn loss_csv(losses: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (s, l) in losses.iter().enumerate() {
        writeln!(out, "{s},{l}").expect("write to string");
    }
    out
}

pub fn metrics(run: &ToyRun) -> Vec<Metric> {
    let ratio = if run.losses.len() > 1 {
        Metric::at_most("train.final_to_initial_loss_ratio", run.loss_ratio(), "ratio", MAX_LOSS_RATIO)
    } else {
        Metric::info("train.final_to_initial_loss_ratio", run.loss_ratio(), "ratio")
    };
    vec![
        Metric::info("train.initial_loss", run.initial_loss(), "nats"),
        Metric::info("train.final_loss", run.final_loss(), "nats"),
        ratio,
    ]
}

/// Writes `loss.csv`, `config.json` and the trained weights under `dir`.
pub fn write_outputs(run: &ToyRun, cfg: &EncoderConfig, dir: &Path) -> Result<()> {
    write_file(&dir.join("loss.csv"), &loss_csv(&run.losses))?;
    write_file(&dir.join("config.json"), &cfg.to_json())?;
    run.trained.save(dir, WEIGHTS_STEM)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use packenc::encoder::AoeConfig;

    fn small() -> EncoderConfig {
        EncoderConfig {
            d_model: 8,
            n_layers: 1,
            patch_px: 4,
            aoe: AoeConfig {
                n_experts: 2,
                d_low: 2,
                d_ffn: 8,
                k_active: 1,
            },
            ..Default::default()
        }
    }

    #[test]
    fn zero_steps_keeps_initial_weights() {
        let run = train_toy(&small(), 0, 3).unwrap();
        assert_eq!(run.losses.len(), 1);
        assert_eq!(run.initial, run.trained);
        assert_eq!(metrics(&run)[2].value, 1.0);
        assert!(metrics(&run).iter().all(|m| m.pass));
    }

    #[test]
    fn reruns_are_bit_identical() {
        let a = train_toy(&small(), 3, 5).unwrap();
        let b = train_toy(&small(), 3, 5).unwrap();
        assert_eq!(loss_csv(&a.losses), loss_csv(&b.losses));
        assert_eq!(a.trained, b.trained);
        assert_eq!(loss_csv(&a.losses).lines().count(), 1 + 4);
    }
}

//! Argument definitions and command dispatch.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use packenc::encoder::EncoderConfig;
use packenc::rng::SEED_ENV;

use crate::bench::{run_bench, samples_csv, summary_metrics, BenchConfig};
use crate::error::Result;
use crate::inspect::{self, parse_sizes};
use crate::report::{write_file, Report};
use crate::suites::{run_suite, Suite};
use crate::train::{self, train_toy};

#[derive(Debug, Parser)]
#[command(name = "packenc", version, about = "Packed image encoder benchmarks, invariant suites and toy training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random draw.
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,

    /// Directory for report.json and command artifacts; nothing is written
    /// when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time linear attention against its quadratic oracle and fit log-log
    /// slopes.
    BenchAttention {
        /// Head dimension.
        #[arg(long, default_value_t = 64)]
        dims: usize,
        /// Strictly ascending sequence lengths (at least 3).
        #[arg(long, value_delimiter = ',', default_value = "256,512,1024,2048,4096")]
        lengths: Vec<usize>,
        /// Timed runs per (path, length); the median is reported.
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run an invariant suite; exits non-zero if any check fails.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        /// Replace a metric's tolerance, as `metric=value` (repeatable).
        #[arg(long = "tol-override", value_parser = parse_override)]
        tol_overrides: Vec<(String, f64)>,
        /// Run independent suite items on worker threads.
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Show how images of the given sizes pack into fixed-capacity batches.
    PackInspect {
        /// Comma-separated `WIDTHxHEIGHT` pixel sizes.
        #[arg(long, default_value = "224x112,112x112,56x56")]
        sizes: String,
        /// Tokens per batch.
        #[arg(long, default_value_t = 256)]
        capacity: usize,
        /// Patch side in pixels.
        #[arg(long = "patch", default_value_t = 14)]
        patch_px: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Contrastive training on the 8-pair synthetic fixture.
    ///
    /// Training defaults: temperature 0.07, AdamW lr 2e-5 (betas 0.9/0.999,
    /// weight decay 0.01), batch size 256, positives rescaled by a factor
    /// drawn from [0.5, 1.5].
    TrainToy {
        #[arg(long, default_value_t = 200)]
        steps: usize,
        /// Encoder config JSON; missing fields take library defaults. The
        /// built-in toy model is used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the config learning rate [toy default: 2e-5].
        #[arg(long)]
        lr: Option<f64>,
        /// Override the config temperature [toy default: 0.07].
        #[arg(long)]
        temperature: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_override(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected metric=value, got `{s}`"))?;
    let value: f64 = value.parse().map_err(|_| format!("`{value}` is not a number"))?;
    Ok((name.trim().to_string(), value))
}

/// Executes one command. Artifacts go under `--out` when it is set.
pub fn run(command: &Command) -> Result<Report> {
    let start = Instant::now();
    let (mut report, out) = match command {
        Command::BenchAttention {
            dims,
            lengths,
            repeats,
            common,
        } => {
            let cfg = BenchConfig {
                dims: *dims,
                lengths: lengths.clone(),
                repeats: *repeats,
            };
            let (samples, summary) = run_bench(&cfg, common.seed)?;
            let mut report = Report::new("bench-attention", common.seed, &cfg)?;
            report.extend(summary_metrics(&cfg, &summary));
            if let Some(dir) = &common.out {
                write_file(&dir.join("bench.csv"), &samples_csv(&samples))?;
            }
            (report, common.out.as_ref())
        }
        Command::Verify {
            suite,
            tol_overrides,
            parallel,
            common,
        } => {
            let config = json!({ "suite": suite, "tol_overrides": tol_overrides });
            let mut report = Report::new("verify", common.seed, &config)?;
            report.extend(run_suite(*suite, common.seed, *parallel)?);
            report.apply_overrides(tol_overrides)?;
            (report, common.out.as_ref())
        }
        Command::PackInspect {
            sizes,
            capacity,
            patch_px,
            common,
        } => {
            let parsed = parse_sizes(sizes)?;
            let plan = inspect::inspect(&parsed, *capacity, *patch_px)?;
            eprint!("{}", inspect::describe(&plan));
            let config = json!({ "sizes": parsed, "capacity": capacity, "patch_px": patch_px });
            let mut report = Report::new("pack-inspect", common.seed, &config)?;
            report.extend(inspect::metrics(&plan));
            report.details = serde_json::to_value(&plan)?;
            if let Some(dir) = &common.out {
                let mut manifest = serde_json::to_string_pretty(&plan)?;
                manifest.push('\n');
                write_file(&dir.join("pack_manifest.json"), &manifest)?;
            }
            (report, common.out.as_ref())
        }
        Command::TrainToy {
            steps,
            config,
            lr,
            temperature,
            common,
        } => {
            let mut cfg = match config {
                Some(path) => EncoderConfig::load(path)?,
                None => EncoderConfig::toy(),
            };
            cfg.seed = common.seed;
            if let Some(lr) = lr {
                cfg.lr = *lr;
            }
            if let Some(t) = temperature {
                cfg.temperature = *t;
            }
            let run = train_toy(&cfg, *steps, common.seed)?;
            let mut report = Report::new("train-toy", common.seed, &json!({ "steps": steps, "encoder": cfg }))?;
            report.extend(train::metrics(&run));
            if let Some(dir) = &common.out {
                train::write_outputs(&run, &cfg, dir)?;
            }
            (report, common.out.as_ref())
        }
    };
    report.wall_clock_s = start.elapsed().as_secs_f64();
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn override_parsing() {
        assert_eq!(parse_override("a.b=0").unwrap(), ("a.b".to_string(), 0.0));
        assert!(parse_override("a.b").is_err());
        assert!(parse_override("a=x").is_err());
    }

    #[test]
    fn help_lists_training_defaults() {
        let help = Cli::command()
            .find_subcommand_mut("train-toy")
            .unwrap()
            .render_long_help()
            .to_string();
        for needle in ["0.07", "2e-5", "256", "[0.5, 1.5]", "[default: 200]"] {
            assert!(help.contains(needle), "missing {needle} in\n{help}");
        }
    }
}

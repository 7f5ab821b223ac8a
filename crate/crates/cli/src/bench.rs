//! Wall-clock scaling of the linear attention path against its quadratic
//! oracle.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use serde::Serialize;

use packenc::attention::{linear_attention, linear_attention_quadratic_oracle, FeatureMap};
use packenc::rng::seeded;
use packenc::Tensor;

use crate::error::{Error, Result};
use crate::report::Metric;

pub const WARMUP_RUNS: usize = 2;
pub const MAX_LINEAR_SLOPE: f64 = 1.35;
pub const MIN_QUADRATIC_SLOPE: f64 = 1.7;
pub const MIN_SPEEDUP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchOp {
    Linear,
    Quadratic,
}

impl BenchOp {
    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Linear => "linear",
            BenchOp::Quadratic => "quadratic",
        }
    }

    fn run(self, q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
        let fm = FeatureMap::EluPlusOne;
        Ok(match self {
            BenchOp::Linear => linear_attention(q, k, v, fm, None)?,
            BenchOp::Quadratic => linear_attention_quadratic_oracle(q, k, v, fm, None)?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchConfig {
    pub dims: usize,
    pub lengths: Vec<usize>,
    pub repeats: usize,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lengths.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "slope fit needs at least 3 lengths, got {}",
                self.lengths.len()
            )));
        }
        if self.lengths[0] == 0 || self.lengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "lengths must be positive and strictly ascending".into(),
            ));
        }
        if self.dims == 0 || self.repeats == 0 {
            return Err(Error::InvalidArgument("dims and repeats must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub op: BenchOp,
    pub len: usize,
    pub dims: usize,
    pub repeat: usize,
    pub wall_ns: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub linear_median_ns: Vec<f64>,
    pub quadratic_median_ns: Vec<f64>,
    pub linear_slope: f64,
    pub quadratic_slope: f64,
    /// Quadratic over linear median time at the longest length.
    pub speedup_at_max_len: f64,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Times both paths at every length: two untimed warm-up runs, then
/// `repeats` timed runs on the calling thread.
pub fn run_bench(cfg: &BenchConfig, seed: u64) -> Result<(Vec<Sample>, BenchSummary)> {
    cfg.validate()?;
    let mut samples = Vec::new();
    let mut medians = [Vec::new(), Vec::new()];
    for &len in &cfg.lengths {
        let mut rng = seeded(seed ^ len as u64);
        let shape = [len, cfg.dims];
        let (q, k, v) = (
            Tensor::randn(&shape, 1.0, &mut rng),
            Tensor::randn(&shape, 1.0, &mut rng),
            Tensor::randn(&shape, 1.0, &mut rng),
        );
        for (slot, op) in [BenchOp::Linear, BenchOp::Quadratic].into_iter().enumerate() {
            for _ in 0..WARMUP_RUNS {
                black_box(op.run(&q, &k, &v)?);
            }
            let mut times = Vec::with_capacity(cfg.repeats);
            for repeat in 0..cfg.repeats {
                let start = Instant::now();
                black_box(op.run(black_box(&q), &k, &v)?);
                let wall_ns = start.elapsed().as_nanos();
                times.push(wall_ns as f64);
                samples.push(Sample {
                    op,
                    len,
                    dims: cfg.dims,
                    repeat,
                    wall_ns,
                });
            }
            medians[slot].push(median(&times));
        }
    }
    let lens: Vec<f64> = cfg.lengths.iter().map(|&l| l as f64).collect();
    let [linear_median_ns, quadratic_median_ns] = medians;
    let summary = BenchSummary {
        linear_slope: log_log_slope(&lens, &linear_median_ns),
        quadratic_slope: log_log_slope(&lens, &quadratic_median_ns),
        speedup_at_max_len: quadratic_median_ns[lens.len() - 1] / linear_median_ns[lens.len() - 1],
        linear_median_ns,
        quadratic_median_ns,
    };
    Ok((samples, summary))
}

pub fn samples_csv(samples: &[Sample]) -> String {
    let mut out = String::from("op,L,d,repeat,wall_ns\n");
    for s in samples {
        writeln!(out, "{},{},{},{},{}", s.op.name(), s.len, s.dims, s.repeat, s.wall_ns).expect("write to string");
    }
    out
}

pub fn summary_metrics(cfg: &BenchConfig, s: &BenchSummary) -> Vec<Metric> {
    let mut out = vec![
        Metric::at_most("bench.linear_slope", s.linear_slope, "log-log", MAX_LINEAR_SLOPE).timed(),
        Metric::at_least("bench.quadratic_slope", s.quadratic_slope, "log-log", MIN_QUADRATIC_SLOPE).timed(),
        Metric::at_least("bench.speedup_at_max_len", s.speedup_at_max_len, "ratio", MIN_SPEEDUP).timed(),
    ];
    for (i, &len) in cfg.lengths.iter().enumerate() {
        out.push(Metric::info(&format!("bench.linear_median_ns.L{len}"), s.linear_median_ns[i], "ns").timed());
        out.push(Metric::info(&format!("bench.quadratic_median_ns.L{len}"), s.quadratic_median_ns[i], "ns").timed());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_slope() {
        assert_eq!(median(&[5.0]), 5.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        assert!((log_log_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn row_count_and_validation() {
        let cfg = BenchConfig {
            dims: 4,
            lengths: vec![8, 16, 32],
            repeats: 2,
        };
        let (samples, summary) = run_bench(&cfg, 0).unwrap();
        assert_eq!(samples.len(), 2 * 3 * 2);
        assert_eq!(samples_csv(&samples).lines().count(), 1 + 12);
        assert_eq!(summary.linear_median_ns.len(), 3);
        for bad in [vec![8, 16], vec![16, 8, 32], vec![0, 8, 16]] {
            assert!(BenchConfig { lengths: bad, ..cfg.clone() }.validate().is_err());
        }
    }

    #[test]
    fn single_repeat_median_is_the_sample() {
        let cfg = BenchConfig {
            dims: 2,
            lengths: vec![4, 8, 12],
            repeats: 1,
        };
        let (samples, summary) = run_bench(&cfg, 1).unwrap();
        for (i, len) in cfg.lengths.iter().enumerate() {
            let s = samples.iter().find(|s| s.op == BenchOp::Linear && s.len == *len).unwrap();
            assert_eq!(summary.linear_median_ns[i], s.wall_ns as f64);
        }
    }
}

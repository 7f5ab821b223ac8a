//! Invariant suites behind `packenc verify`.
//!
//! Each suite is a list of independent items; an item draws its cases from
//! its own seeded stream and returns one or more metrics. Items never share
//! state, so running them on worker threads yields the same report.

use std::collections::BTreeSet;

use clap::ValueEnum;
use rand::Rng;
use serde::Serialize;

use packenc::aoe::{
    activation_cache, aoe_forward_batch_counted, aoe_rows_with, mac_count, oracle as aoe_oracle, select_experts,
    top_k_indices, ExpertBank, ExpertDims, ExpertWeights,
};
use packenc::attention::{
    attention_layer, linear_attention, linear_attention_quadratic_oracle, linear_attention_with,
    softmax_attention_with, AttentionKind, AttentionParams, FeatureMap,
};
use packenc::encoder::{
    dense_residual_step_with, encode_images, encode_images_with, encode_unpacked, synthetic_shape_image, AoeConfig,
    EncoderConfig, LayerStack,
};
use packenc::packing::{build_block_mask, plan_first_fit_decreasing, plan_layouts, PackItem};
use packenc::rng::{seeded, Rng as SeededRng};
use packenc::tensor::check_tape_gradients;
use packenc::training_math::{
    cross_entropy_with, discounted_return, distill_loss, info_nce, info_nce_with, mse_with, normalize_rows,
    oracle as loss_oracle, soft_cross_entropy_with, ContrastiveBatch, RewardTrace,
};
use packenc::{Eager, GradTape, Ops, Tensor, Var};

use crate::error::Result;
use crate::report::Metric;

pub const PACK_CONFIGS: usize = 50;
pub const PACK_TOL: f64 = 1e-9;
pub const LINEAR_SEEDS: u64 = 200;
pub const LINEAR_MAX_LEN: usize = 64;
pub const LINEAR_TOL: f64 = 1e-10;
pub const AOE_SEEDS: u64 = 200;
pub const AOE_MAX_EXPERTS: usize = 8;
pub const AOE_TOL: f64 = 1e-12;
pub const GRAD_SEEDS: u64 = 100;
pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_ENCODER_TOL: f64 = 1e-3;
pub const LOSS_SEEDS: u64 = 200;
pub const LOSS_MAX_N: usize = 16;
pub const LOSS_TOL: f64 = 1e-12;
/// Smallest gap between the k-th and (k+1)-th expert norm for an AoE
/// gradient case to be used; closer gaps can flip selection under the
/// finite-difference step.
pub const AOE_GRAD_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Pack,
    Attention,
    Aoe,
    Grad,
    Losses,
    All,
}

type ItemFn = fn(u64) -> Result<Vec<Metric>>;

#[derive(Clone, Copy)]
pub struct SuiteItem {
    pub name: &'static str,
    run: ItemFn,
}

impl SuiteItem {
    pub fn run(&self, seed: u64) -> Result<Vec<Metric>> {
        (self.run)(seed)
    }
}

const fn item(name: &'static str, run: ItemFn) -> SuiteItem {
    SuiteItem { name, run }
}

pub fn items(suite: Suite) -> Vec<SuiteItem> {
    let pack = [item("pack.equivalence", pack_equivalence), item("pack.fixtures", pack_fixtures)];
    let attention = [item("attention.two_path", linear_two_path)];
    let aoe = [item("aoe.oracle", aoe_oracle_agreement)];
    let grad = [
        item("grad.attention", grad_attention),
        item("grad.aoe", grad_aoe),
        item("grad.residual", grad_residual),
        item("grad.losses", grad_losses),
        item("grad.encoder", grad_encoder),
    ];
    let losses = [item("losses.fixtures", loss_fixtures)];
    match suite {
        Suite::Pack => pack.to_vec(),
        Suite::Attention => attention.to_vec(),
        Suite::Aoe => aoe.to_vec(),
        Suite::Grad => grad.to_vec(),
        Suite::Losses => losses.to_vec(),
        Suite::All => [&pack[..], &attention, &aoe, &grad, &losses].concat(),
    }
}

/// Runs every item of `suite`, concatenating metrics in item order.
pub fn run_suite(suite: Suite, seed: u64, parallel: bool) -> Result<Vec<Metric>> {
    let items = items(suite);
    let outputs: Vec<Result<Vec<Metric>>> = if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = items.iter().map(|it| s.spawn(move || it.run(seed))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("suite item panicked"))
                .collect()
        })
    } else {
        items.iter().map(|it| it.run(seed)).collect()
    };
    let mut metrics = Vec::new();
    for out in outputs {
        metrics.extend(out?);
    }
    Ok(metrics)
}

/// Independent stream for one suite item.
fn item_rng(seed: u64, salt: u64) -> SeededRng {
    seeded(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Configuration for the pack-equivalence sweep.
pub fn pack_config(n_layers: usize, d_model: usize) -> EncoderConfig {
    EncoderConfig {
        d_model,
        n_layers,
        patch_px: 4,
        capacity: 64,
        init_std: 0.3,
        aoe: AoeConfig {
            n_experts: 3,
            d_low: 2,
            d_ffn: 2 * d_model,
            k_active: 2,
        },
        ..Default::default()
    }
}

/// `n` distinct `(height, width)` pairs with sides in `2..=20` pixels.
fn distinct_sizes(rng: &mut SeededRng, n: usize) -> Vec<(usize, usize)> {
    let mut seen = BTreeSet::new();
    let mut sizes = Vec::with_capacity(n);
    while sizes.len() < n {
        let hw = (rng.random_range(2..=20), rng.random_range(2..=20));
        if seen.insert(hw) {
            sizes.push(hw);
        }
    }
    sizes
}

fn pack_equivalence(seed: u64) -> Result<Vec<Metric>> {
    let mut rng = item_rng(seed, 1);
    let mut worst = 0.0f64;
    for case in 0..PACK_CONFIGS {
        let cfg = pack_config([1, 2, 4][case % 3], [8, 16][(case / 3) % 2]);
        let stack = LayerStack::init(&cfg, &mut rng)?;
        let n_images = rng.random_range(2..=8);
        let images = distinct_sizes(&mut rng, n_images)
            .into_iter()
            .map(|(h, w)| synthetic_shape_image(&mut rng, h, w))
            .collect::<packenc::Result<Vec<_>>>()?;
        let packed = encode_images(&images, &stack, &cfg)?;
        let single = encode_unpacked(&images, &stack, &cfg)?;
        worst = worst.max(packed.max_abs_diff(&single)?);
    }
    Ok(vec![Metric::at_most("pack.equivalence_max_abs_error", worst, "abs", PACK_TOL)])
}

fn pack_fixtures(_seed: u64) -> Result<Vec<Metric>> {
    let lens = [60, 50, 40, 30];
    let items: Vec<(usize, usize)> = lens.iter().copied().enumerate().collect();
    let plan = plan_first_fit_decreasing(&items, 100)?;
    let packed: Vec<Vec<usize>> = plan.iter().map(|bin| bin.iter().map(|&i| lens[i]).collect()).collect();
    let ffd_ok = packed == [vec![60, 40], vec![50, 30]];

    let mask = build_block_mask(&[0, 0, 1])?;
    let expected = Tensor::from_rows(&[&[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]])?;
    let mask_err = mask.max_abs_diff(&expected)?;

    let one = PackItem {
        image_id: 0,
        width_px: 28,
        height_px: 42,
        patch_tokens: 6,
    };
    let layout = &plan_layouts(&[one], 10)?[0];
    let util_err = (layout.segment_ids.len() as f64 / 10.0 - 0.7).abs();
    Ok(vec![
        Metric::at_most("pack.ffd_fixture_mismatch", f64::from(u8::from(!ffd_ok)), "count", 0.0),
        Metric::at_most("pack.block_mask_fixture_max_abs_error", mask_err, "abs", 0.0),
        Metric::at_most("pack.single_image_utilization_error", util_err, "abs", 0.0),
    ])
}

/// Contiguous segment ids splitting `l` tokens into `1..=4` runs.
fn random_segments(rng: &mut SeededRng, l: usize) -> Vec<usize> {
    let mut cuts: Vec<usize> = (0..rng.random_range(0..=3.min(l - 1)))
        .map(|_| rng.random_range(1..l))
        .collect();
    cuts.sort_unstable();
    cuts.dedup();
    (0..l).map(|i| cuts.iter().filter(|&&c| c <= i).count()).collect()
}

fn linear_two_path(seed: u64) -> Result<Vec<Metric>> {
    let mut worst = 0.0f64;
    for case in 0..LINEAR_SEEDS {
        let mut rng = item_rng(seed.wrapping_add(case), 2);
        let l = rng.random_range(1..=LINEAR_MAX_LEN);
        let d = rng.random_range(1..=16);
        let (fm, q, k) = if case % 2 == 0 {
            (
                FeatureMap::EluPlusOne,
                Tensor::randn(&[l, d], 1.0, &mut rng),
                Tensor::randn(&[l, d], 1.0, &mut rng),
            )
        } else {
            (
                FeatureMap::Relu,
                Tensor::uniform(&[l, d], 0.1, 1.0, &mut rng),
                Tensor::uniform(&[l, d], 0.1, 1.0, &mut rng),
            )
        };
        let v = Tensor::randn(&[l, d], 1.0, &mut rng);
        let segs = (case % 3 != 0).then(|| random_segments(&mut rng, l));
        let fast = linear_attention(&q, &k, &v, fm, segs.as_deref())?;
        let slow = linear_attention_quadratic_oracle(&q, &k, &v, fm, segs.as_deref())?;
        worst = worst.max(fast.max_abs_diff(&slow)?);
    }
    Ok(vec![Metric::at_most("attention.linear_two_path_max_abs_error", worst, "abs", LINEAR_TOL)])
}

fn aoe_oracle_agreement(seed: u64) -> Result<Vec<Metric>> {
    let mut out_err = 0.0f64;
    let mut sum_err = 0.0f64;
    let mut mac_ratio = 0.0f64;
    let mut mac_mismatch = 0u32;
    for case in 0..AOE_SEEDS {
        let mut rng = item_rng(seed.wrapping_add(case), 3);
        let n = rng.random_range(1..=AOE_MAX_EXPERTS);
        let k = rng.random_range(1..=n);
        let d_model = rng.random_range(2..=12);
        let dims = ExpertDims {
            d_model,
            d_low: rng.random_range(1..d_model),
            d_ffn: rng.random_range(1..=16),
        };
        let bank = ExpertBank::random(n, k, dims, 0.5, &mut rng)?;
        let tokens = rng.random_range(1..=6);
        let xs = Tensor::randn(&[tokens, d_model], 1.0, &mut rng);
        let (h, macs) = aoe_forward_batch_counted(&xs, &bank)?;
        for t in 0..tokens {
            let brute = aoe_oracle::aoe_forward_brute_force(xs.row(t), &bank);
            for (a, b) in h.row(t).iter().zip(&brute) {
                out_err = out_err.max((a - b).abs());
            }
            let row = xs.slice(t..t + 1, 0..d_model)?;
            let sel = select_experts(&activation_cache(&row, &bank)?, k)?;
            sum_err = sum_err.max((sel.weights.data().iter().sum::<f64>() - 1.0).abs());
        }
        let count = mac_count(dims, n, k);
        if macs != tokens as u64 * count.with_cache {
            mac_mismatch += 1;
        }
        if k < n {
            mac_ratio = mac_ratio.max(macs as f64 / (tokens as u64 * count.all_experts) as f64);
        }
    }
    Ok(vec![
        Metric::at_most("aoe.oracle_max_abs_error", out_err, "abs", AOE_TOL),
        Metric::at_most("aoe.selection_weight_sum_max_error", sum_err, "abs", AOE_TOL),
        Metric::below("aoe.cached_to_all_experts_mac_ratio_max", mac_ratio, "ratio", 1.0),
        Metric::at_most("aoe.counted_vs_formula_mac_mismatches", f64::from(mac_mismatch), "count", 0.0),
    ])
}

fn weighted_sum(t: &mut GradTape, out: &Var, w: &Tensor) -> packenc::Result<Var> {
    let wv = t.constant(w.clone());
    let p = t.mul(out, &wv)?;
    Ok(t.sum(&p))
}

fn grad_attention(seed: u64) -> Result<Vec<Metric>> {
    let (mut linear, mut softmax, mut layer) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..GRAD_SEEDS {
        let mut rng = item_rng(seed.wrapping_add(case), 4);
        let l = rng.random_range(2..=6);
        let d = rng.random_range(1..=4);
        let qkv: Vec<Tensor> = (0..3).map(|_| Tensor::randn(&[l, d], 1.0, &mut rng)).collect();
        let w = Tensor::randn(&[l, d], 1.0, &mut rng);
        let segs = random_segments(&mut rng, l);
        linear = linear.max(check_tape_gradients(
            &qkv,
            |t, v| {
                let o = linear_attention_with(t, &v[0], &v[1], &v[2], FeatureMap::EluPlusOne, Some(&segs))?;
                weighted_sum(t, &o, &w)
            },
            GRAD_STEP,
        )?);
        let mask = build_block_mask(&segs)?;
        softmax = softmax.max(check_tape_gradients(
            &qkv,
            |t, v| {
                let o = softmax_attention_with(t, &v[0], &v[1], &v[2], Some(&mask))?;
                weighted_sum(t, &o, &w)
            },
            GRAD_STEP,
        )?);

        let p = AttentionParams::random(d, 0.7, &mut rng);
        let mut params = vec![qkv[0].clone()];
        params.extend(p.named().into_iter().map(|(_, t)| t.clone()));
        let kind = if case % 2 == 0 {
            AttentionKind::Linear(FeatureMap::EluPlusOne)
        } else {
            AttentionKind::Softmax
        };
        layer = layer.max(check_tape_gradients(
            &params,
            |t, v| {
                let ap = AttentionParams {
                    w_q: v[1],
                    w_k: v[2],
                    w_v: v[3],
                    w_o: v[4],
                };
                let o = attention_layer(t, &v[0], &ap, kind, Some(&segs))?;
                weighted_sum(t, &o, &w)
            },
            GRAD_STEP,
        )?);
    }
    Ok(vec![
        Metric::at_most("grad.linear_attention_max_rel_error", linear, "rel", GRAD_TOL),
        Metric::at_most("grad.softmax_attention_max_rel_error", softmax, "rel", GRAD_TOL),
        Metric::at_most("grad.attention_layer_max_rel_error", layer, "rel", GRAD_TOL),
    ])
}

/// Smallest gap between the k-th and (k+1)-th expert norm over all tokens.
fn selection_margin(xs: &Tensor, experts: &[ExpertWeights], k: usize) -> Result<f64> {
    let mut margin = f64::INFINITY;
    if k == experts.len() {
        return Ok(margin);
    }
    for r in 0..xs.rows() {
        let x = xs.slice(r..r + 1, 0..xs.cols())?;
        let norms = experts
            .iter()
            .map(|e| Ok(x.matmul(&e.w_down)?.l2_norm_rows()?.data()[0]))
            .collect::<Result<Vec<f64>>>()?;
        let order = top_k_indices(&norms, norms.len());
        margin = margin.min(norms[order[k - 1]] - norms[order[k]]);
    }
    Ok(margin)
}

fn grad_aoe(seed: u64) -> Result<Vec<Metric>> {
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut case = 0;
    while checked < GRAD_SEEDS {
        case += 1;
        let mut rng = item_rng(seed.wrapping_add(case), 5);
        let n = rng.random_range(1..=4);
        let k = rng.random_range(1..=n);
        let d_model = rng.random_range(2..=5);
        let dims = ExpertDims {
            d_model,
            d_low: rng.random_range(1..d_model),
            d_ffn: rng.random_range(1..=4),
        };
        let experts: Vec<ExpertWeights> = (0..n).map(|_| ExpertWeights::random(dims, 0.8, &mut rng)).collect();
        let xs = Tensor::randn(&[rng.random_range(1..=4), dims.d_model], 1.0, &mut rng);
        let w = Tensor::randn(xs.shape(), 1.0, &mut rng);
        if selection_margin(&xs, &experts, k)? < AOE_GRAD_MARGIN {
            continue;
        }
        checked += 1;
        let mut params = vec![xs];
        for e in &experts {
            params.extend(e.named().into_iter().map(|(_, t)| t.clone()));
        }
        worst = worst.max(check_tape_gradients(
            &params,
            |t, v| {
                let ex: Vec<ExpertWeights<Var>> = (0..n)
                    .map(|i| ExpertWeights {
                        w_down: v[1 + 4 * i],
                        w_up: v[2 + 4 * i],
                        w_p: v[3 + 4 * i],
                        w_o: v[4 + 4 * i],
                    })
                    .collect();
                let downs: Vec<Var> = ex.iter().map(|e| e.w_down).collect();
                let combined = t.concat_cols(&downs)?;
                let out = aoe_rows_with(t, &v[0], &ex, &combined, k)?;
                weighted_sum(t, &out, &w)
            },
            GRAD_STEP,
        )?);
    }
    Ok(vec![Metric::at_most("grad.aoe_max_rel_error", worst, "rel", GRAD_TOL)])
}

fn grad_residual(seed: u64) -> Result<Vec<Metric>> {
    let mut worst = 0.0f64;
    for case in 0..GRAD_SEEDS {
        let mut rng = item_rng(seed.wrapping_add(case), 6);
        let depth = rng.random_range(1..=4);
        let shape = [rng.random_range(1..=3), rng.random_range(1..=4)];
        let mut params: Vec<Tensor> = (0..=depth).map(|_| Tensor::randn(&shape, 1.0, &mut rng)).collect();
        params.push(Tensor::randn(&[depth], 1.0, &mut rng));
        let w = Tensor::randn(&shape, 1.0, &mut rng);
        let include_embedding = case % 2 == 0;
        worst = worst.max(check_tape_gradients(
            &params,
            |t, v| {
                let out = dense_residual_step_with(t, &v[depth], &v[..depth], &v[depth + 1], include_embedding)?;
                weighted_sum(t, &out, &w)
            },
            GRAD_STEP,
        )?);
    }
    Ok(vec![Metric::at_most("grad.dense_residual_max_rel_error", worst, "rel", GRAD_TOL)])
}

fn grad_losses(seed: u64) -> Result<Vec<Metric>> {
    let (mut nce, mut ce, mut distill) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..GRAD_SEEDS {
        let mut rng = item_rng(seed.wrapping_add(case), 7);
        let n = rng.random_range(1..=4);
        let d = rng.random_range(2..=4);
        let tau = rng.random_range(0.2..1.0);
        let a = normalize_rows(&Tensor::randn(&[n, d], 1.0, &mut rng))?;
        let p = normalize_rows(&Tensor::randn(&[n, d], 1.0, &mut rng))?;
        let exclude = case % 2 == 1;
        nce = nce.max(check_tape_gradients(
            &[a, p],
            |t, v| info_nce_with(t, &v[0], &v[1], tau, exclude),
            GRAD_STEP,
        )?);

        let c = rng.random_range(2..=5);
        let logits = Tensor::randn(&[n, c], 1.0, &mut rng);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        ce = ce.max(check_tape_gradients(
            std::slice::from_ref(&logits),
            |t, v| cross_entropy_with(t, &v[0], &labels),
            GRAD_STEP,
        )?);

        let teacher_logits = Tensor::randn(&[n, c], 1.0, &mut rng);
        let teacher_feat = Tensor::randn(&[n, d], 1.0, &mut rng);
        let feat = Tensor::randn(&[n, d], 1.0, &mut rng);
        let alpha = rng.random_range(0.0..=1.0);
        distill = distill.max(check_tape_gradients(
            &[logits, feat],
            |t, v| packenc::training_math::distill_loss_with(t, &v[0], &teacher_logits, &v[1], &teacher_feat, alpha),
            GRAD_STEP,
        )?);
    }
    Ok(vec![
        Metric::at_most("grad.info_nce_max_rel_error", nce, "rel", GRAD_TOL),
        Metric::at_most("grad.cross_entropy_max_rel_error", ce, "rel", GRAD_TOL),
        Metric::at_most("grad.distill_max_rel_error", distill, "rel", GRAD_TOL),
    ])
}

/// One-layer encoder small enough for a full finite-difference sweep. Every
/// expert is active so selection cannot flip under the step.
pub fn grad_encoder_config(linear: bool) -> EncoderConfig {
    EncoderConfig {
        d_model: 4,
        n_layers: 1,
        n_linear_attention_layers: Some(usize::from(linear)),
        patch_px: 2,
        capacity: 32,
        init_std: 0.5,
        aoe: AoeConfig {
            n_experts: 2,
            d_low: 2,
            d_ffn: 3,
            k_active: 2,
        },
        ..Default::default()
    }
}

fn grad_encoder(seed: u64) -> Result<Vec<Metric>> {
    let mut worst = 0.0f64;
    for case in 0..GRAD_SEEDS {
        let mut rng = item_rng(seed.wrapping_add(case), 8);
        let cfg = grad_encoder_config(case % 2 == 1);
        let stack = LayerStack::init(&cfg, &mut rng)?;
        let images = (0..2)
            .map(|_| {
                let (h, w) = (rng.random_range(2..=5), rng.random_range(2..=5));
                synthetic_shape_image(&mut rng, h, w)
            })
            .collect::<packenc::Result<Vec<_>>>()?;
        let w = Tensor::randn(&[2, cfg.d_model], 1.0, &mut rng);
        let flat: Vec<Tensor> = stack.named().into_iter().map(|(_, t)| t.clone()).collect();
        worst = worst.max(check_tape_gradients(
            &flat,
            |t, v| {
                let mut it = v.iter().copied();
                let params = stack.map(|_| it.next().expect("one var per parameter"));
                let feats = encode_images_with(t, &params, &cfg, &images)?;
                weighted_sum(t, &feats, &w)
            },
            GRAD_STEP,
        )?);
    }
    Ok(vec![Metric::at_most("grad.encoder_max_rel_error", worst, "rel", GRAD_ENCODER_TOL)])
}

fn loss_fixtures(seed: u64) -> Result<Vec<Metric>> {
    let e0 = Tensor::from_rows(&[&[1.0, 0.0]])?;
    let e1 = Tensor::from_rows(&[&[0.0, 1.0]])?;
    let identical = info_nce(&ContrastiveBatch::new(e0.clone(), e0.clone(), 1.0)?)?;
    let orthogonal = info_nce(&ContrastiveBatch::new(e0, e1, 1.0)?)?;

    let mut oracle_err = 0.0f64;
    let mut endpoint_mismatch = 0u32;
    for case in 0..LOSS_SEEDS {
        let mut rng = item_rng(seed.wrapping_add(case), 9);
        let n = rng.random_range(1..=LOSS_MAX_N);
        let d = rng.random_range(2..=8);
        let batch = ContrastiveBatch::from_unnormalized(
            &Tensor::randn(&[n, d], 1.0, &mut rng),
            &Tensor::randn(&[n, d], 1.0, &mut rng),
            rng.random_range(0.07..=1.0),
        )?
        .with_exclude_self(case % 2 == 1);
        oracle_err = oracle_err.max((info_nce(&batch)? - loss_oracle::info_nce(&batch)).abs());

        let c = rng.random_range(2..=6);
        let (s_logits, t_logits) = (
            Tensor::randn(&[n, c], 1.0, &mut rng),
            Tensor::randn(&[n, c], 1.0, &mut rng),
        );
        let (s_feat, t_feat) = (
            Tensor::randn(&[n, d], 1.0, &mut rng),
            Tensor::randn(&[n, d], 1.0, &mut rng),
        );
        let mut o = Eager::new();
        let ce = soft_cross_entropy_with(&mut o, &s_logits, &t_logits.softmax_rows()?)?.item()?;
        let mse = mse_with(&mut o, &s_feat, &t_feat)?.item()?;
        if distill_loss(&s_logits, &t_logits, &s_feat, &t_feat, 1.0)? != ce {
            endpoint_mismatch += 1;
        }
        if distill_loss(&s_logits, &t_logits, &s_feat, &t_feat, 0.0)? != mse {
            endpoint_mismatch += 1;
        }
    }
    let ret = discounted_return(&RewardTrace::new(vec![1.0, 1.0, 1.0], 0.5)?);
    Ok(vec![
        Metric::at_most(
            "losses.info_nce_identical_pair_error",
            (identical - std::f64::consts::LN_2).abs(),
            "abs",
            LOSS_TOL,
        ),
        Metric::at_most(
            "losses.info_nce_orthogonal_pair_error",
            (orthogonal - (1.0 + std::f64::consts::E).ln()).abs(),
            "abs",
            LOSS_TOL,
        ),
        Metric::at_most("losses.info_nce_oracle_max_abs_error", oracle_err, "abs", LOSS_TOL),
        Metric::at_most("losses.distill_endpoint_mismatches", f64::from(endpoint_mismatch), "count", 0.0),
        Metric::at_most("losses.discounted_return_error", (ret - 1.75).abs(), "abs", 0.0),
    ])
}

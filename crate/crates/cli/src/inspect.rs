//! Packing plans for a list of image sizes.

use std::str::FromStr;

use serde::Serialize;

use packenc::packing::{block_sizes, patch_token_count, plan_layouts, PackItem, SegmentInfo};

use crate::error::{Error, Result};
use crate::report::Metric;

/// `WIDTHxHEIGHT` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ImageSize {
    pub width_px: usize,
    pub height_px: usize,
}

impl FromStr for ImageSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("expected WIDTHxHEIGHT, got `{s}`"));
        let (w, h) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let width_px: usize = w.parse().map_err(|_| bad())?;
        let height_px: usize = h.parse().map_err(|_| bad())?;
        if width_px == 0 || height_px == 0 {
            return Err(bad());
        }
        Ok(ImageSize { width_px, height_px })
    }
}

/// Parses a comma-separated `WxH` list.
pub fn parse_sizes(s: &str) -> Result<Vec<ImageSize>> {
    let sizes = s.split(',').map(str::parse).collect::<Result<Vec<ImageSize>>>()?;
    if sizes.is_empty() {
        return Err(Error::InvalidArgument("no image sizes given".into()));
    }
    Ok(sizes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchPlan {
    pub batch_index: usize,
    pub tokens: usize,
    pub utilization: f64,
    pub segments: Vec<SegmentInfo>,
    /// Side lengths of the diagonal blocks of the block mask, in order.
    pub mask_blocks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackInspection {
    pub capacity: usize,
    pub patch_px: usize,
    pub batches: Vec<BatchPlan>,
    /// Total tokens over `batches * capacity`.
    pub utilization: f64,
}

pub fn inspect(sizes: &[ImageSize], capacity: usize, patch_px: usize) -> Result<PackInspection> {
    if patch_px == 0 || capacity == 0 {
        return Err(Error::InvalidArgument("capacity and patch size must be positive".into()));
    }
    let items: Vec<PackItem> = sizes
        .iter()
        .enumerate()
        .map(|(image_id, s)| PackItem {
            image_id,
            width_px: s.width_px,
            height_px: s.height_px,
            patch_tokens: patch_token_count(s.width_px, s.height_px, patch_px),
        })
        .collect();
    let batches: Vec<BatchPlan> = plan_layouts(&items, capacity)?
        .into_iter()
        .enumerate()
        .map(|(batch_index, layout)| BatchPlan {
            batch_index,
            tokens: layout.segment_ids.len(),
            utilization: layout.segment_ids.len() as f64 / capacity as f64,
            mask_blocks: block_sizes(&layout.segment_ids),
            segments: layout.segments,
        })
        .collect();
    let total: usize = batches.iter().map(|b| b.tokens).sum();
    let utilization = total as f64 / (batches.len() * capacity) as f64;
    Ok(PackInspection {
        capacity,
        patch_px,
        batches,
        utilization,
    })
}

pub fn metrics(p: &PackInspection) -> Vec<Metric> {
    let mut out = vec![
        Metric::info("pack.batches", p.batches.len() as f64, "count"),
        Metric::info("pack.utilization", p.utilization, "fraction"),
    ];
    for b in &p.batches {
        out.push(Metric::info(&format!("pack.batch_{}.utilization", b.batch_index), b.utilization, "fraction"));
    }
    out
}

/// One line per batch: `batch i  tokens/capacity  util  [id:tokens ...]`.
pub fn describe(p: &PackInspection) -> String {
    let mut out = String::new();
    for b in &p.batches {
        let segs: Vec<String> = b
            .segments
            .iter()
            .map(|s| format!("{}:{}x{}={}", s.image_id, s.w, s.h, s.token_count))
            .collect();
        out.push_str(&format!(
            "batch {}  {}/{}  {:.3}  mask blocks {:?}  [{}]\n",
            b.batch_index,
            b.tokens,
            p.capacity,
            b.utilization,
            b.mask_blocks,
            segs.join(" ")
        ));
    }
    out
}

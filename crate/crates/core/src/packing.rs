//! Greedy sample packing.
//!
//! Images of different sizes are concatenated into fixed-capacity token
//! buffers. Each image contributes its patch tokens followed by one size
//! token. Isolation between images is enforced inside attention through the
//! block mask / segment ids carried with the batch; positions restart at zero
//! in every segment so a segment's encoding does not depend on where it sits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Patch tokens produced by a `width_px x height_px` image.
pub fn patch_token_count(width_px: usize, height_px: usize, patch_px: usize) -> usize {
    width_px.div_ceil(patch_px) * height_px.div_ceil(patch_px)
}

#[derive(Debug, Clone)]
pub struct PatchedImage {
    pub image_id: usize,
    pub width_px: usize,
    pub height_px: usize,
    /// `[t, d_model]` patch embeddings.
    pub tokens: Tensor,
}

impl PatchedImage {
    pub fn token_count(&self) -> usize {
        self.tokens.rows()
    }

    /// Slots this image occupies in a pack (patches plus the size token).
    pub fn packed_len(&self) -> usize {
        self.token_count() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub image_id: usize,
    pub w: usize,
    pub h: usize,
    /// Slots occupied, including the size token.
    pub token_count: usize,
    pub offset: usize,
}

#[derive(Debug, Clone)]
pub struct PackedBatch {
    /// `[L, d_model]`: each segment's patch tokens followed by its size token.
    pub tokens: Tensor,
    /// Segment ordinal (within this batch) of every token.
    pub segment_ids: Vec<usize>,
    /// Within-segment positions, restarting at 0.
    pub positions: Vec<usize>,
    pub block_mask: Tensor,
    pub capacity: usize,
    pub segments: Vec<SegmentInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackManifest {
    pub batch_index: usize,
    pub capacity: usize,
    pub segments: Vec<SegmentInfo>,
    pub utilization: f64,
}

impl PackedBatch {
    pub fn len(&self) -> usize {
        self.segment_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segment_ids.is_empty()
    }

    pub fn utilization(&self) -> f64 {
        self.len() as f64 / self.capacity as f64
    }

    pub fn manifest(&self, batch_index: usize) -> PackManifest {
        PackManifest {
            batch_index,
            capacity: self.capacity,
            segments: self.segments.clone(),
            utilization: self.utilization(),
        }
    }
}

/// First-fit-decreasing over `(image_id, len)` items.
///
/// Items are sorted by length descending (ties: lower id first) and each is
/// placed in the first open bin with room. Returns, per bin, the indices into
/// `items` in placement order; bins are ordered by the image_id of their
/// first member.
pub fn plan_first_fit_decreasing(items: &[(usize, usize)], capacity: usize) -> Result<Vec<Vec<usize>>> {
    if let Some(&(image_id, tokens)) = items.iter().find(|(_, len)| *len > capacity) {
        return Err(Error::ExceedsCapacity {
            image_id,
            tokens,
            capacity,
        });
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[b].1.cmp(&items[a].1).then(items[a].0.cmp(&items[b].0)));

    let mut bins: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in order {
        let len = items[i].1;
        match bins.iter_mut().find(|(used, _)| used + len <= capacity) {
            Some((used, members)) => {
                *used += len;
                members.push(i);
            }
            None => bins.push((len, vec![i])),
        }
    }
    let mut plan: Vec<Vec<usize>> = bins.into_iter().map(|(_, m)| m).collect();
    plan.sort_by_key(|members| items[members[0]].0);
    Ok(plan)
}

/// Token bookkeeping for one pack, independent of the token values.
#[derive(Debug, Clone, PartialEq)]
pub struct PackLayout {
    /// Indices into the planned item list, in placement order.
    pub members: Vec<usize>,
    pub segment_ids: Vec<usize>,
    pub positions: Vec<usize>,
    pub segments: Vec<SegmentInfo>,
}

/// Size of one image to be packed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackItem {
    pub image_id: usize,
    pub width_px: usize,
    pub height_px: usize,
    /// Patch tokens, excluding the size token.
    pub patch_tokens: usize,
}

/// First-fit-decreasing layouts for `items`, each image occupying its patch
/// tokens plus one size token.
pub fn plan_layouts(items: &[PackItem], capacity: usize) -> Result<Vec<PackLayout>> {
    let lens: Vec<(usize, usize)> = items.iter().map(|it| (it.image_id, it.patch_tokens + 1)).collect();
    let plan = plan_first_fit_decreasing(&lens, capacity)?;
    Ok(plan
        .into_iter()
        .map(|members| {
            let mut segment_ids = Vec::new();
            let mut positions = Vec::new();
            let mut segments = Vec::with_capacity(members.len());
            let mut offset = 0;
            for (seg, &i) in members.iter().enumerate() {
                let it = items[i];
                let len = it.patch_tokens + 1;
                segment_ids.extend(std::iter::repeat_n(seg, len));
                positions.extend(0..len);
                segments.push(SegmentInfo {
                    image_id: it.image_id,
                    w: it.width_px,
                    h: it.height_px,
                    token_count: len,
                    offset,
                });
                offset += len;
            }
            PackLayout {
                members,
                segment_ids,
                positions,
                segments,
            }
        })
        .collect())
}

impl PatchedImage {
    pub fn pack_item(&self) -> PackItem {
        PackItem {
            image_id: self.image_id,
            width_px: self.width_px,
            height_px: self.height_px,
            patch_tokens: self.token_count(),
        }
    }
}

/// Packs images (each followed by its size token) into batches of at most
/// `capacity` tokens.
pub fn greedy_pack(images: &[PatchedImage], capacity: usize) -> Result<Vec<PackedBatch>> {
    let items: Vec<PackItem> = images.iter().map(PatchedImage::pack_item).collect();
    plan_layouts(&items, capacity)?
        .into_iter()
        .map(|layout| {
            let mut parts = Vec::with_capacity(layout.members.len() * 2);
            for &i in &layout.members {
                let im = &images[i];
                let d_model = im.tokens.cols();
                parts.push(im.tokens.clone());
                parts.push(size_embedding(im.width_px, im.height_px, d_model)?.reshape(&[1, d_model])?);
            }
            let tokens = Tensor::concat_rows(&parts.iter().collect::<Vec<_>>())?;
            let block_mask = build_block_mask(&layout.segment_ids)?;
            Ok(PackedBatch {
                tokens,
                segment_ids: layout.segment_ids,
                positions: layout.positions,
                block_mask,
                capacity,
                segments: layout.segments,
            })
        })
        .collect()
}

/// `M[i][j] = 1` iff tokens `i` and `j` share a segment.
pub fn build_block_mask(segment_ids: &[usize]) -> Result<Tensor> {
    let l = segment_ids.len();
    if l == 0 {
        return Err(Error::InvalidArgument("empty segment id vector".into()));
    }
    let mut data = vec![0.0; l * l];
    for (i, a) in segment_ids.iter().enumerate() {
        for (j, b) in segment_ids.iter().enumerate() {
            if a == b {
                data[i * l + j] = 1.0;
            }
        }
    }
    Tensor::new(&[l, l], data)
}

/// Sinusoid of a scalar over `dim` channels: pairs `(sin(v w_k), cos(v w_k))`
/// with `w_k = 10000^(-2k/dim)`.
pub fn sinusoid(value: f64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|c| {
            let k = (c / 2) as f64;
            let w = 10000f64.powf(-2.0 * k / dim as f64);
            if c % 2 == 0 {
                (value * w).sin()
            } else {
                (value * w).cos()
            }
        })
        .collect()
}

/// Fixed sinusoidal encoding of within-segment positions; `[L, d_model]`.
pub fn position_encoding(positions: &[usize], d_model: usize) -> Result<Tensor> {
    let data = positions.iter().flat_map(|&p| sinusoid(p as f64, d_model)).collect();
    Tensor::new(&[positions.len(), d_model], data)
}

/// Size token for a `width_px x height_px` image: the first half of the
/// channels encode `log2(width_px)`, the second half `log2(height_px)`.
pub fn size_embedding(width_px: usize, height_px: usize, d_model: usize) -> Result<Tensor> {
    if width_px == 0 || height_px == 0 {
        return Err(Error::InvalidArgument(format!(
            "image size must be positive, got {width_px}x{height_px}"
        )));
    }
    let half = d_model / 2;
    let mut data = sinusoid((width_px as f64).log2(), half);
    data.extend(sinusoid((height_px as f64).log2(), d_model - half));
    Tensor::new(&[d_model], data)
}

/// Tokens plus within-segment position encodings. The block mask is not
/// applied here; it travels with the batch and is enforced by attention.
pub fn assemble_packed_input(batch: &PackedBatch) -> Result<Tensor> {
    let pe = position_encoding(&batch.positions, batch.tokens.cols())?;
    batch.tokens.add(&pe)
}

/// Overall fill ratio `sum(tokens) / (batches * capacity)`.
pub fn utilization(batches: &[PackedBatch]) -> f64 {
    if batches.is_empty() {
        return 0.0;
    }
    let used: usize = batches.iter().map(PackedBatch::len).sum();
    used as f64 / (batches.len() * batches[0].capacity) as f64
}

/// Lengths of maximal runs of equal ids, i.e. the diagonal block sizes of
/// the block mask when segments are contiguous.
pub fn block_sizes(segment_ids: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut prev = None;
    for &id in segment_ids {
        if prev == Some(id) {
            *out.last_mut().expect("run started") += 1;
        } else {
            out.push(1);
            prev = Some(id);
        }
    }
    out
}

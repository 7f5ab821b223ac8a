use rand::Rng;

use crate::error::{Error, Result};
use crate::packing::PatchedImage;
use crate::rng::seeded;
use crate::tensor::Tensor;

const CHANNELS: usize = 3;

/// RGB image, row-major with interleaved channels (`[y][x][c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height_px: usize,
    width_px: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(height_px: usize, width_px: usize, data: Vec<f64>) -> Result<Self> {
        if height_px == 0 || width_px == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {height_px}x{width_px}"
            )));
        }
        if data.len() != height_px * width_px * CHANNELS {
            return Err(Error::InvalidShape {
                shape: vec![height_px, width_px, CHANNELS],
                reason: format!("{} values supplied", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("pixel values must be finite".into()));
        }
        Ok(ImageGrid {
            height_px,
            width_px,
            data,
        })
    }

    pub fn filled(height_px: usize, width_px: usize, value: f64) -> Result<Self> {
        Self::new(height_px, width_px, vec![value; height_px * width_px * CHANNELS])
    }

    /// Grey image with the same value in every channel.
    pub fn from_gray(rows: &[&[f64]]) -> Result<Self> {
        let h = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != w) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().flat_map(|&v| [v; CHANNELS])).collect();
        Self::new(h, w, data)
    }

    pub fn height_px(&self) -> usize {
        self.height_px
    }

    pub fn width_px(&self) -> usize {
        self.width_px
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width_px + x) * CHANNELS + c]
    }

    fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width_px + x) * CHANNELS + c] = v;
    }
}

/// Non-overlapping `patch_px` patches in row-major order, zero-padded at the
/// right and bottom edges; each row is a patch flattened as `[dy][dx][c]`.
pub fn extract_patches(img: &ImageGrid, patch_px: usize) -> Result<Tensor> {
    if patch_px == 0 {
        return Err(Error::InvalidArgument("patch size must be positive".into()));
    }
    let (ph, pw) = (img.height_px.div_ceil(patch_px), img.width_px.div_ceil(patch_px));
    let dim = patch_px * patch_px * CHANNELS;
    let mut data = vec![0.0; ph * pw * dim];
    for py in 0..ph {
        for px in 0..pw {
            let base = (py * pw + px) * dim;
            for dy in 0..patch_px {
                let y = py * patch_px + dy;
                if y >= img.height_px {
                    break;
                }
                for dx in 0..patch_px {
                    let x = px * patch_px + dx;
                    if x >= img.width_px {
                        break;
                    }
                    for c in 0..CHANNELS {
                        data[base + (dy * patch_px + dx) * CHANNELS + c] = img.get(y, x, c);
                    }
                }
            }
        }
    }
    Tensor::new(&[ph * pw, dim], data)
}

/// Patch embeddings `patches W (+ b)` for one image.
pub fn patchify(
    image_id: usize,
    img: &ImageGrid,
    patch_px: usize,
    projection: &Tensor,
    bias: Option<&Tensor>,
) -> Result<PatchedImage> {
    let patches = extract_patches(img, patch_px)?;
    let mut tokens = patches.matmul(projection)?;
    if let Some(b) = bias {
        tokens = tokens.add_row(b)?;
    }
    Ok(PatchedImage {
        image_id,
        width_px: img.width_px,
        height_px: img.height_px,
        tokens,
    })
}

/// Bilinear resampling with half-pixel centers and clamped borders.
pub fn resize_bilinear(img: &ImageGrid, height_px: usize, width_px: usize) -> Result<ImageGrid> {
    let mut out = ImageGrid::filled(height_px, width_px, 0.0)?;
    let source = |dst: usize, n_out: usize, n_in: usize| {
        let s = ((dst as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, s - lo as f64)
    };
    for y in 0..height_px {
        let (y0, y1, fy) = source(y, height_px, img.height_px);
        for x in 0..width_px {
            let (x0, x1, fx) = source(x, width_px, img.width_px);
            for c in 0..CHANNELS {
                let top = img.get(y0, x0, c) * (1.0 - fx) + img.get(y0, x1, c) * fx;
                let bottom = img.get(y1, x0, c) * (1.0 - fx) + img.get(y1, x1, c) * fx;
                out.set(y, x, c, top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Ok(out)
}

/// Draws `s ~ U[lo, hi]` and resizes to `(round(s h), round(s w))`, at least 1x1.
pub fn random_uniform_scale<R: Rng + ?Sized>(img: &ImageGrid, rng: &mut R, range: [f64; 2]) -> Result<ImageGrid> {
    let [lo, hi] = range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid scale range [{lo}, {hi}]")));
    }
    let s = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let dim = |n: usize| ((s * n as f64).round() as usize).max(1);
    resize_bilinear(img, dim(img.height_px), dim(img.width_px))
}

/// A colored disc, square or diagonal band on a noisy background.
pub fn synthetic_shape_image<R: Rng + ?Sized>(rng: &mut R, height_px: usize, width_px: usize) -> Result<ImageGrid> {
    let mut img = ImageGrid::filled(height_px, width_px, 0.0)?;
    let background: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..0.5));
    let color: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.3..1.0));
    let shape = rng.random_range(0..3u8);
    let (h, w) = (height_px as f64, width_px as f64);
    let cy = rng.random_range(0.3..0.7) * h;
    let cx = rng.random_range(0.3..0.7) * w;
    let r = rng.random_range(0.2..0.4) * h.min(w);
    for y in 0..height_px {
        for x in 0..width_px {
            let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
            let inside = match shape {
                0 => dy * dy + dx * dx <= r * r,
                1 => dy.abs() <= r && dx.abs() <= r,
                _ => (dy - dx).abs() <= r * 0.6,
            };
            for c in 0..CHANNELS {
                let base = if inside { color[c] } else { background[c] };
                let noise = rng.random_range(-0.05..0.05);
                img.set(y, x, c, (base + noise).clamp(0.0, 1.0));
            }
        }
    }
    Ok(img)
}

/// `n` (original, rescaled copy) pairs with sides drawn from `side_px`.
pub fn synthetic_pairs(
    n: usize,
    seed: u64,
    side_px: [usize; 2],
    scale_range: [f64; 2],
) -> Result<Vec<(ImageGrid, ImageGrid)>> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let h = rng.random_range(side_px[0]..=side_px[1]);
            let w = rng.random_range(side_px[0]..=side_px[1]);
            let img = synthetic_shape_image(&mut rng, h, w)?;
            let pos = random_uniform_scale(&img, &mut rng, scale_range)?;
            Ok((img, pos))
        })
        .collect()
}

/// Pairs in the toy training fixture.
pub const TOY_PAIRS: usize = 8;
/// Side-length range of toy fixture originals.
pub const TOY_SIDE_PX: [usize; 2] = [8, 16];

/// The toy contrastive fixture: 8 shape images and rescaled copies.
pub fn toy_pairs(seed: u64, scale_range: [f64; 2]) -> Result<Vec<(ImageGrid, ImageGrid)>> {
    synthetic_pairs(TOY_PAIRS, seed, TOY_SIDE_PX, scale_range)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_counts_and_padding() {
        let img = ImageGrid::filled(4, 4, 0.5).unwrap();
        assert_eq!(extract_patches(&img, 4).unwrap().shape(), &[1, 48]);
        let img = ImageGrid::filled(5, 3, 1.0).unwrap();
        let p = extract_patches(&img, 2).unwrap();
        assert_eq!(p.shape(), &[6, 12]);
        assert_eq!(p.row(5)[3..].iter().sum::<f64>(), 0.0);
        assert_eq!(p.row(5)[..3], [1.0, 1.0, 1.0]);
    }

    #[test]
    fn patchify_fixtures() {
        let mut rng = seeded(3);
        let proj = Tensor::randn(&[12, 5], 1.0, &mut rng);
        let zero = patchify(0, &ImageGrid::filled(2, 2, 0.0).unwrap(), 2, &proj, None).unwrap();
        assert_eq!(zero.tokens, Tensor::zeros(&[1, 5]));

        let data: Vec<f64> = (0..2 * 4 * 3).map(|v| v as f64 / 10.0).collect();
        let img = ImageGrid::new(2, 4, data).unwrap();
        let out = patchify(7, &img, 2, &proj, None).unwrap();
        assert_eq!(out.tokens.shape(), &[2, 5]);
        for half in 0..2 {
            let mut flat = Vec::new();
            for y in 0..2 {
                for x in 0..2 {
                    for c in 0..3 {
                        flat.push(img.get(y, half * 2 + x, c));
                    }
                }
            }
            let expected = Tensor::new(&[1, 12], flat).unwrap().matmul(&proj).unwrap();
            assert_eq!(out.tokens.row(half), expected.data());
        }
    }

    #[test]
    fn bilinear_fixtures() {
        let img = ImageGrid::from_gray(&[&[0.0, 1.0], &[2.0, 3.0]]).unwrap();
        assert_eq!(resize_bilinear(&img, 2, 2).unwrap(), img);
        let up = resize_bilinear(&img, 4, 4).unwrap();
        let center = (up.get(1, 1, 0) + up.get(1, 2, 0) + up.get(2, 1, 0) + up.get(2, 2, 0)) / 4.0;
        assert!((center - 1.5).abs() < 1e-12);
        assert!((up.get(1, 1, 0) - 0.75).abs() < 1e-12);

        let flat = ImageGrid::filled(2, 2, 0.3).unwrap();
        let mut rng = seeded(0);
        let down = random_uniform_scale(&flat, &mut rng, [0.5, 0.5]).unwrap();
        assert_eq!((down.height_px(), down.width_px()), (1, 1));
        assert!((down.get(0, 0, 1) - 0.3).abs() < 1e-15);
        assert_eq!(random_uniform_scale(&img, &mut rng, [1.0, 1.0]).unwrap(), img);
        assert!(random_uniform_scale(&img, &mut rng, [0.0, 1.0]).is_err());
        assert!(random_uniform_scale(&img, &mut rng, [1.5, 0.5]).is_err());
    }

    #[test]
    fn synthetic_pairs_are_deterministic() {
        let a = synthetic_pairs(3, 9, [6, 10], [0.5, 1.5]).unwrap();
        let b = synthetic_pairs(3, 9, [6, 10], [0.5, 1.5]).unwrap();
        assert_eq!(a, b);
        for (img, _) in &a {
            assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

//! Deterministic synthetic data: clean ground-truth masks, simulated
//! background-subtraction noise, and source frames whose intensities carry
//! the true labels.

mod detail;
pub mod rng;

pub use detail::{
    canonical_detail_mask, gen_detail_sample, make_detail_set, DetailCounts, DetailMask,
    DetailSample,
};
pub use rng::{rng_next_u64, splitmix64, RngState};

use crate::error::{Error, Result};
use crate::image::{Frame, Mask};

/// Simulated upstream segmentation noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    /// Probability a foreground pixel is reported as background.
    pub p_flip_fg: f64,
    /// Probability a background pixel is reported as foreground.
    pub p_flip_bg: f64,
    /// Maximum boundary displacement, in pixels.
    pub jitter_radius: usize,
    /// Number of spurious foreground discs.
    pub blob_count: usize,
    pub blob_radius: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            p_flip_fg: 0.05,
            p_flip_bg: 0.05,
            jitter_radius: 1,
            blob_count: 3,
            blob_radius: 2,
        }
    }
}

impl NoiseConfig {
    /// No corruption at all.
    pub fn none() -> Self {
        Self {
            p_flip_fg: 0.0,
            p_flip_bg: 0.0,
            jitter_radius: 0,
            blob_count: 0,
            blob_radius: 0,
        }
    }
}

/// Source frame rendering: label means plus Gaussian noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderParams {
    pub mu_fg: f64,
    pub mu_bg: f64,
    pub noise_sigma: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            mu_fg: 0.7,
            mu_bg: 0.3,
            noise_sigma: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetConfig {
    pub height: usize,
    pub width: usize,
    pub n_shapes: usize,
    pub noise: NoiseConfig,
    pub render: RenderParams,
}

impl DatasetConfig {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            n_shapes: 3,
            noise: NoiseConfig::default(),
            render: RenderParams::default(),
        }
    }
}

/// One frame: source intensities, the noisy mask to refine, and the truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub source: Frame,
    pub mask_noisy: Mask,
    pub mask_gt: Mask,
}

impl Sample {
    pub fn new(source: Frame, mask_noisy: Mask, mask_gt: Mask) -> Result<Self> {
        if !source.same_dims(&mask_noisy) || !source.same_dims(&mask_gt) {
            return Err(Error::dim(format!(
                "sample images differ in shape: source {:?}, mask {:?}, gt {:?}",
                source.dims(),
                mask_noisy.dims(),
                mask_gt.dims()
            )));
        }
        Ok(Self {
            source,
            mask_noisy,
            mask_gt,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.source.dims()
    }
}

/// Union of `n_shapes` axis-aligned rectangles and ellipses. Each shape's
/// full height lies in `[h/8, h/2]` and full width in `[w/8, w/2]`; centers
/// are drawn so the shape fits inside the frame.
pub fn gen_clean_mask(seed: u64, height: usize, width: usize, n_shapes: usize) -> Result<Mask> {
    if height < 16 || width < 16 {
        return Err(Error::Domain(format!(
            "clean masks need at least 16x16 pixels, got {height}x{width}"
        )));
    }
    if !(1..=8).contains(&n_shapes) {
        return Err(Error::Domain(format!(
            "n_shapes must be in 1..=8, got {n_shapes}"
        )));
    }
    let mut rng = RngState::new(seed);
    let mut mask = Mask::filled(height, width, 0);
    for _ in 0..n_shapes {
        let ellipse = rng.below(2) == 1;
        let eh = rng.range_inclusive((height / 8) as i64, (height / 2) as i64);
        let ew = rng.range_inclusive((width / 8) as i64, (width / 2) as i64);
        let top = rng.range_inclusive(0, height as i64 - eh);
        let left = rng.range_inclusive(0, width as i64 - ew);
        if ellipse {
            let (a, b) = (eh as f64 / 2.0, ew as f64 / 2.0);
            let (cy, cx) = (top as f64 + a, left as f64 + b);
            for y in top..top + eh {
                for x in left..left + ew {
                    let ny = (y as f64 + 0.5 - cy) / a;
                    let nx = (x as f64 + 0.5 - cx) / b;
                    if ny * ny + nx * nx <= 1.0 {
                        mask.set(y as usize, x as usize, 1);
                    }
                }
            }
        } else {
            for y in top..top + eh {
                for x in left..left + ew {
                    mask.set(y as usize, x as usize, 1);
                }
            }
        }
    }
    Ok(mask)
}

fn is_boundary(mask: &Mask, y: usize, x: usize) -> bool {
    let (h, w) = mask.dims();
    let v = mask.get(y, x);
    (y > 0 && mask.get(y - 1, x) != v)
        || (y + 1 < h && mask.get(y + 1, x) != v)
        || (x > 0 && mask.get(y, x - 1) != v)
        || (x + 1 < w && mask.get(y, x + 1) != v)
}

/// Applies, in order: boundary jitter, independent label flips, and
/// spurious foreground discs.
pub fn corrupt(mask_gt: &Mask, cfg: &NoiseConfig, seed: u64) -> Result<Mask> {
    mask_gt.check_binary()?;
    let (h, w) = mask_gt.dims();
    let mut rng = RngState::new(seed);
    let mut out = mask_gt.clone();

    if cfg.jitter_radius > 0 {
        let r = cfg.jitter_radius as i64;
        for y in 0..h {
            for x in 0..w {
                if !is_boundary(mask_gt, y, x) {
                    continue;
                }
                let dy = rng.range_inclusive(-r, r);
                let dx = rng.range_inclusive(-r, r);
                let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                out.set(y, x, mask_gt.get(sy, sx));
            }
        }
    }

    for v in out.data_mut() {
        let u = rng.next_f64();
        let p = if *v == 1 {
            cfg.p_flip_fg
        } else {
            cfg.p_flip_bg
        };
        if u < p {
            *v = 1 - *v;
        }
    }

    let r = cfg.blob_radius as i64;
    for _ in 0..cfg.blob_count {
        let cy = rng.below(h as u64) as i64;
        let cx = rng.below(w as u64) as i64;
        for y in (cy - r).max(0)..=(cy + r).min(h as i64 - 1) {
            for x in (cx - r).max(0)..=(cx + r).min(w as i64 - 1) {
                if (y - cy).pow(2) + (x - cx).pow(2) <= r * r {
                    out.set(y as usize, x as usize, 1);
                }
            }
        }
    }
    Ok(out)
}

/// Source frame whose pixels are `clamp(mu_label + N(0, sigma), 0, 1)`.
pub fn render_source(mask_gt: &Mask, seed: u64, params: &RenderParams) -> Result<Frame> {
    let RenderParams {
        mu_fg,
        mu_bg,
        noise_sigma,
    } = *params;
    if !(0.0 <= mu_bg && mu_bg < mu_fg && mu_fg <= 1.0) {
        return Err(Error::Domain(format!(
            "render_source needs 0 <= mu_bg < mu_fg <= 1, got mu_bg {mu_bg}, mu_fg {mu_fg}"
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Domain(format!(
            "noise_sigma must be >= 0, got {noise_sigma}"
        )));
    }
    mask_gt.check_binary()?;
    let mut rng = RngState::new(seed);
    let data = mask_gt
        .data()
        .iter()
        .map(|&label| {
            let mu = if label == 1 { mu_fg } else { mu_bg };
            (mu + noise_sigma * rng.gaussian()).clamp(0.0, 1.0) as f32
        })
        .collect();
    Frame::new(mask_gt.height(), mask_gt.width(), data)
}

/// Seed of sample `index` in the dataset seeded with `seed`.
///
/// The dataset seed is hashed before the index is mixed in. XOR-ing raw
/// small seeds with indices only permutes low indices (`7 ^ i` over
/// `i < 200` is a permutation of `0..200`), so datasets with different
/// seeds would share almost all of their samples.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    splitmix64(splitmix64(seed) ^ index as u64)
}

/// The sample at position `index` of the dataset seeded with `seed`.
pub fn make_sample(seed: u64, index: usize, cfg: &DatasetConfig) -> Result<Sample> {
    let mut rng = RngState::new(sample_seed(seed, index));
    let mask_seed = rng.next_u64();
    let noise_seed = rng.next_u64();
    let source_seed = rng.next_u64();
    let gt = gen_clean_mask(mask_seed, cfg.height, cfg.width, cfg.n_shapes)?;
    let noisy = corrupt(&gt, &cfg.noise, noise_seed)?;
    let source = render_source(&gt, source_seed, &cfg.render)?;
    Sample::new(source, noisy, gt)
}

pub fn make_dataset(seed: u64, count: usize, cfg: &DatasetConfig) -> Result<Vec<Sample>> {
    if count == 0 {
        return Err(Error::Domain("dataset count must be >= 1".into()));
    }
    (0..count).map(|i| make_sample(seed, i, cfg)).collect()
}

//! Masks with thin structures that neighborhood voting tends to erase: a
//! one-pixel-wide spur sticking out of a square and a small notch cut into
//! one of its corners.

use super::rng::RngState;
use super::{corrupt, render_source, NoiseConfig, RenderParams, Sample};
use crate::error::{Error, Result};
use crate::image::Mask;

/// A mask together with the locations of its fine details.
#[derive(Clone, Debug, PartialEq)]
pub struct DetailMask {
    pub mask: Mask,
    /// Foreground spur pixels; should stay foreground.
    pub spur: Vec<(usize, usize)>,
    /// Background pixels cut out of the square; should stay background.
    pub notch: Vec<(usize, usize)>,
    /// Square pixels whose 7x7 neighborhood lies entirely inside the square.
    pub interior: Vec<(usize, usize)>,
}

/// How many detail pixels kept their designed label after refinement.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DetailCounts {
    pub spur_survived: usize,
    pub spur_total: usize,
    pub notch_survived: usize,
    pub notch_total: usize,
}

impl DetailCounts {
    pub fn survived(&self) -> usize {
        self.spur_survived + self.notch_survived
    }

    pub fn total(&self) -> usize {
        self.spur_total + self.notch_total
    }

    pub fn removed(&self) -> usize {
        self.total() - self.survived()
    }

    /// Fraction of detail pixels carrying their designed label.
    pub fn recall(&self) -> f64 {
        if self.total() == 0 {
            1.0
        } else {
            self.survived() as f64 / self.total() as f64
        }
    }

    pub fn accumulate(&mut self, other: &DetailCounts) {
        self.spur_survived += other.spur_survived;
        self.spur_total += other.spur_total;
        self.notch_survived += other.notch_survived;
        self.notch_total += other.notch_total;
    }
}

impl DetailMask {
    pub fn survival(&self, refined: &Mask) -> Result<DetailCounts> {
        if !refined.same_dims(&self.mask) {
            return Err(Error::dim(format!(
                "refined mask {:?} vs detail mask {:?}",
                refined.dims(),
                self.mask.dims()
            )));
        }
        Ok(DetailCounts {
            spur_survived: self
                .spur
                .iter()
                .filter(|&&(y, x)| refined.get(y, x) == 1)
                .count(),
            spur_total: self.spur.len(),
            notch_survived: self
                .notch
                .iter()
                .filter(|&&(y, x)| refined.get(y, x) == 0)
                .count(),
            notch_total: self.notch.len(),
        })
    }

    /// Spur pixels that are still foreground with background on both sides
    /// across the spur, i.e. still part of a one-pixel-wide line. A spur
    /// pixel the refined edge has grown around no longer counts.
    pub fn thin_spur_pixels(&self, refined: &Mask) -> Result<usize> {
        self.survival(refined)?;
        let horizontal = self.spur.windows(2).all(|p| p[0].0 == p[1].0);
        let fg = |y: isize, x: isize| {
            y >= 0
                && x >= 0
                && (y as usize) < refined.height()
                && (x as usize) < refined.width()
                && refined.get(y as usize, x as usize) == 1
        };
        Ok(self
            .spur
            .iter()
            .filter(|&&(y, x)| {
                let (y, x) = (y as isize, x as isize);
                let (a, b) = if horizontal {
                    ((y - 1, x), (y + 1, x))
                } else {
                    ((y, x - 1), (y, x + 1))
                };
                fg(y, x) && !fg(a.0, a.1) && !fg(b.0, b.1)
            })
            .count())
    }
}

#[derive(Clone, Copy)]
enum Side {
    Left,
    Right,
    Top,
    Bottom,
}

#[derive(Clone, Copy)]
enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

struct Layout {
    height: usize,
    width: usize,
    top: usize,
    left: usize,
    size: usize,
    notch: usize,
    corner: Corner,
    spur_len: usize,
    spur_side: Side,
    /// Offset of the spur along the side it leaves from.
    spur_at: usize,
}

const INTERIOR_MARGIN: usize = 3;

fn build(l: &Layout) -> DetailMask {
    let mut mask = Mask::filled(l.height, l.width, 0);
    for y in l.top..l.top + l.size {
        for x in l.left..l.left + l.size {
            mask.set(y, x, 1);
        }
    }

    let (ny, nx) = match l.corner {
        Corner::TopLeft => (l.top, l.left),
        Corner::TopRight => (l.top, l.left + l.size - l.notch),
        Corner::BottomLeft => (l.top + l.size - l.notch, l.left),
        Corner::BottomRight => (l.top + l.size - l.notch, l.left + l.size - l.notch),
    };
    let mut notch = Vec::new();
    for y in ny..ny + l.notch {
        for x in nx..nx + l.notch {
            mask.set(y, x, 0);
            notch.push((y, x));
        }
    }

    let mut spur = Vec::new();
    for i in 1..=l.spur_len {
        let p = match l.spur_side {
            Side::Left => (l.top + l.spur_at, l.left - i),
            Side::Right => (l.top + l.spur_at, l.left + l.size - 1 + i),
            Side::Top => (l.top - i, l.left + l.spur_at),
            Side::Bottom => (l.top + l.size - 1 + i, l.left + l.spur_at),
        };
        mask.set(p.0, p.1, 1);
        spur.push(p);
    }
    spur.sort_unstable();

    let mut interior = Vec::new();
    for y in l.top..l.top + l.size {
        for x in l.left..l.left + l.size {
            let clear = (y.saturating_sub(INTERIOR_MARGIN)..=y + INTERIOR_MARGIN).all(|yy| {
                (x.saturating_sub(INTERIOR_MARGIN)..=x + INTERIOR_MARGIN).all(|xx| {
                    yy >= l.top
                        && xx >= l.left
                        && yy < l.top + l.size
                        && xx < l.left + l.size
                        && mask.get(yy, xx) == 1
                })
            });
            if clear {
                interior.push((y, x));
            }
        }
    }

    DetailMask {
        mask,
        spur,
        notch,
        interior,
    }
}

/// The fixed 32x32 probe: a 16x16 square at rows 8..24, columns 12..28,
/// with its top-right 4x4 corner removed and a 6-pixel spur running left
/// from row 15.
pub fn canonical_detail_mask() -> DetailMask {
    build(&Layout {
        height: 32,
        width: 32,
        top: 8,
        left: 12,
        size: 16,
        notch: 4,
        corner: Corner::TopRight,
        spur_len: 6,
        spur_side: Side::Left,
        spur_at: 7,
    })
}

/// A detail-bearing frame: randomized square, notch and spur; the mask is
/// corrupted with `noise` and the source renders every true foreground
/// pixel, spur included, at foreground intensity.
#[derive(Clone, Debug)]
pub struct DetailSample {
    pub detail: DetailMask,
    pub sample: Sample,
}

pub fn gen_detail_sample(
    seed: u64,
    height: usize,
    width: usize,
    noise: &NoiseConfig,
    render: &RenderParams,
) -> Result<DetailSample> {
    if height < 32 || width < 32 {
        return Err(Error::Domain(format!(
            "detail samples need at least 32x32 pixels, got {height}x{width}"
        )));
    }
    let mut rng = RngState::new(seed);
    let margin = 12;
    let max_size = (height.min(width) - 2 * margin).min(32);
    let size = rng.range_inclusive(16, max_size.max(16) as i64) as usize;
    let top = rng.range_inclusive(margin as i64, (height - margin - size) as i64) as usize;
    let left = rng.range_inclusive(margin as i64, (width - margin - size) as i64) as usize;
    let notch = rng.range_inclusive(3, 5) as usize;
    let corner = match rng.below(4) {
        0 => Corner::TopLeft,
        1 => Corner::TopRight,
        2 => Corner::BottomLeft,
        _ => Corner::BottomRight,
    };
    let spur_side = match rng.below(4) {
        0 => Side::Left,
        1 => Side::Right,
        2 => Side::Top,
        _ => Side::Bottom,
    };
    let spur_len = rng.range_inclusive(6, 10) as usize;
    // Keep the spur away from the notched corner.
    let spur_at = rng.range_inclusive(notch as i64 + 2, (size - notch - 3) as i64) as usize;
    let detail = build(&Layout {
        height,
        width,
        top,
        left,
        size,
        notch,
        corner,
        spur_len,
        spur_side,
        spur_at,
    });
    let noisy = corrupt(&detail.mask, noise, rng.next_u64())?;
    let source = render_source(&detail.mask, rng.next_u64(), render)?;
    let sample = Sample::new(source, noisy, detail.mask.clone())?;
    Ok(DetailSample { detail, sample })
}

/// `count` detail samples; sample `i` is drawn from the `i`-th output of
/// the stream seeded with `seed`.
pub fn make_detail_set(
    seed: u64,
    count: usize,
    height: usize,
    width: usize,
    noise: &NoiseConfig,
    render: &RenderParams,
) -> Result<Vec<DetailSample>> {
    let mut rng = RngState::new(seed);
    (0..count)
        .map(|_| gen_detail_sample(rng.next_u64(), height, width, noise, render))
        .collect()
}

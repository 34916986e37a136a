#![allow(dead_code)]

use maskrefine::net::{Batch, RefinerConfig};
use maskrefine::synth::RngState;
use maskrefine::tensor::{Activation, Layer, Tensor4};
use maskrefine::Mask;

pub fn gaussian_tensor(r: &mut RngState, dims: (usize, usize, usize, usize)) -> Tensor4<f64> {
    Tensor4::from_fn(dims, |_, _, _, _| r.gaussian())
}

/// Values bounded away from zero, so a +-1e-3 probe never crosses the ReLU
/// kink.
pub fn kink_free(r: &mut RngState, dims: (usize, usize, usize, usize)) -> Tensor4<f64> {
    Tensor4::from_fn(dims, |_, _, _, _| {
        let m = r.uniform(0.05, 2.0);
        if r.below(2) == 0 {
            m
        } else {
            -m
        }
    })
}

/// A shuffled grid with spacing 0.01: every 2x2 block has a unique maximum
/// that no +-1e-3 probe can overtake.
pub fn distinct(r: &mut RngState, dims: (usize, usize, usize, usize)) -> Tensor4<f64> {
    let n = dims.0 * dims.1 * dims.2 * dims.3;
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.5).collect();
    r.shuffle(&mut vals);
    Tensor4::from_vec(dims, vals).unwrap()
}

/// Every differentiable layer with seeded inputs.
pub fn layer_cases(seed: u64) -> Vec<(&'static str, Layer<f64>, Vec<Tensor4<f64>>)> {
    let mut r = RngState::new(seed);
    let target = Tensor4::from_fn((1, 2, 4, 4), |_, _, _, _| r.below(2) as f64);
    let pred = Tensor4::from_fn((1, 2, 4, 4), |_, _, _, _| r.uniform(0.05, 0.95));
    vec![
        (
            "conv2d 3x3",
            Layer::Conv2d,
            vec![
                gaussian_tensor(&mut r, (1, 2, 4, 4)),
                gaussian_tensor(&mut r, (3, 2, 3, 3)),
                gaussian_tensor(&mut r, (1, 3, 1, 1)),
            ],
        ),
        (
            "conv2d 1x1",
            Layer::Conv2d,
            vec![
                gaussian_tensor(&mut r, (2, 3, 3, 5)),
                gaussian_tensor(&mut r, (2, 3, 1, 1)),
                gaussian_tensor(&mut r, (1, 2, 1, 1)),
            ],
        ),
        (
            "maxpool2",
            Layer::MaxPool2,
            vec![distinct(&mut r, (2, 2, 4, 6))],
        ),
        (
            "avgpool2",
            Layer::AvgPool2,
            vec![gaussian_tensor(&mut r, (2, 2, 4, 6))],
        ),
        (
            "upsample2",
            Layer::Upsample2,
            vec![gaussian_tensor(&mut r, (1, 3, 3, 2))],
        ),
        (
            "concat_c",
            Layer::ConcatC,
            vec![
                gaussian_tensor(&mut r, (1, 2, 3, 3)),
                gaussian_tensor(&mut r, (1, 1, 3, 3)),
            ],
        ),
        (
            "relu",
            Layer::Activation(Activation::Relu),
            vec![kink_free(&mut r, (1, 3, 4, 4))],
        ),
        (
            "sigmoid",
            Layer::Activation(Activation::Sigmoid),
            vec![gaussian_tensor(&mut r, (1, 3, 4, 4))],
        ),
        (
            "bce_loss",
            Layer::BceLoss {
                target: target.clone(),
            },
            vec![pred],
        ),
        (
            "bce_loss(sigmoid)",
            Layer::Chain(
                Box::new(Layer::Activation(Activation::Sigmoid)),
                Box::new(Layer::BceLoss { target }),
            ),
            vec![gaussian_tensor(&mut r, (1, 2, 4, 4))],
        ),
    ]
}

pub fn tiny_config() -> RefinerConfig {
    RefinerConfig {
        levels: 1,
        base_channels: 2,
        source_channels: 1,
        threshold: 0.5,
    }
}

/// Random binary mask, uniform source and binary target, `(1, 1, h, w)`.
pub fn random_batch(seed: u64, h: usize, w: usize) -> Batch<f64> {
    let mut r = RngState::new(seed);
    let dims = (1, 1, h, w);
    Batch {
        mask: Tensor4::from_fn(dims, |_, _, _, _| r.below(2) as f64),
        source: Tensor4::from_fn(dims, |_, _, _, _| r.next_f64()),
        target: Tensor4::from_fn(dims, |_, _, _, _| r.below(2) as f64),
    }
}

pub fn random_mask(seed: u64, h: usize, w: usize) -> Mask {
    let mut r = RngState::new(seed);
    Mask::from_fn(h, w, |_, _| r.below(2) as u8)
}

/// Neighborhood-vote refinement written out with plain loops over
/// `Vec<Vec<u8>>`, independent of the library implementation.
pub fn naive_refine(
    mask: &[Vec<u8>],
    window: usize,
    sigma: f64,
    max_iters: usize,
    threshold: f64,
) -> Vec<Vec<u8>> {
    let h = mask.len();
    let w = mask[0].len();
    let r = (window / 2) as i64;
    let mut cur = mask.to_vec();
    for _ in 0..max_iters {
        let mut next = vec![vec![0u8; w]; h];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut num = 0.0f64;
                let mut den = 0.0f64;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (yy, xx) = (y + dy, x + dx);
                        if (dy, dx) == (0, 0)
                            || yy < 0
                            || xx < 0
                            || yy >= h as i64
                            || xx >= w as i64
                        {
                            continue;
                        }
                        let g = (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp();
                        num += g * cur[yy as usize][xx as usize] as f64;
                        den += g;
                    }
                }
                let p = if den > 0.0 {
                    num / den
                } else {
                    cur[y as usize][x as usize] as f64
                };
                next[y as usize][x as usize] = (p >= threshold) as u8;
            }
        }
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

pub fn to_rows(m: &Mask) -> Vec<Vec<u8>> {
    (0..m.height())
        .map(|y| (0..m.width()).map(|x| m.get(y, x)).collect())
        .collect()
}

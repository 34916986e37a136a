use maskrefine::net::*;
use maskrefine::synth::{make_dataset, DatasetConfig, RngState};
use maskrefine::tensor::Tensor4;
use proptest::prelude::*;

/// Closed form written independently of the library: per level, conv
/// weights 9*in*out plus out biases.
fn expected_params(levels: usize, c0: usize, cs: usize) -> usize {
    let c = |l: usize| c0 * (1 << l);
    let mut n = 0;
    for l in 0..=levels {
        let cin = if l == 0 { 1 + cs } else { c(l - 1) + cs };
        n += 9 * cin * c(l) + c(l) + 9 * c(l) * c(l) + c(l);
    }
    for l in 1..=levels {
        n += 9 * (c(l) + c(l - 1)) * c(l - 1) + c(l - 1) + 9 * c(l - 1) * c(l - 1) + c(l - 1);
    }
    n + c0 + 1
}

proptest! {
    #[test]
    fn param_count_closed_form(levels in 1usize..=3, c0 in 2usize..=16, cs in 1usize..=3) {
        let cfg = RefinerConfig { levels, base_channels: c0, source_channels: cs, threshold: 0.5 };
        let want = expected_params(levels, c0, cs);
        prop_assert_eq!(cfg.param_count(), want);
        let p = RefinerParams::<f32>::zeros(cfg).unwrap();
        prop_assert_eq!(p.param_count(), want);
        prop_assert_eq!(p.to_flat().len(), want);
    }
}

fn test_input(seed: u64, h: usize, w: usize) -> (Tensor4, Tensor4) {
    let s = &make_dataset(seed, 1, &DatasetConfig::new(h, w)).unwrap()[0];
    (s.mask_noisy.to_tensor(), s.source.to_tensor())
}

#[test]
fn zeroed_source_changes_the_output() {
    let (mask, source) = test_input(3, 32, 32);
    let zero = Tensor4::zeros(source.dims());
    let changed = (0..20)
        .filter(|&seed| {
            let p = init_params(&RefinerConfig::default(), seed).unwrap();
            let a = forward(&p, &mask, &source).unwrap();
            let b = forward(&p, &mask, &zero).unwrap();
            a.max_abs_diff(&b) > 0.0
        })
        .count();
    assert!(changed >= 19, "{changed}/20");
}

#[test]
fn every_encoder_level_sees_the_source() {
    // Cutting the source channel's weights at a single level must change
    // the output, for every level.
    let cfg = RefinerConfig::default();
    let (mask, source) = test_input(4, 32, 32);
    let p = init_params(&cfg, 21).unwrap();
    let base = forward(&p, &mask, &source).unwrap();
    for l in 0..=cfg.levels {
        let mut cut = p.clone();
        let w = cut.encoder[l].conv1.weights_mut();
        let src_ch = w.c() - 1;
        for o in 0..w.n() {
            for v in &mut w.plane_mut(o, src_ch)[..] {
                *v = 0.0;
            }
        }
        let out = forward(&cut, &mask, &source).unwrap();
        assert!(out.max_abs_diff(&base) > 0.0, "level {l} is not wired");
    }
}

/// Radius, in full-resolution pixels, beyond which an input pixel cannot
/// influence an output pixel: two 3x3 convolutions per block at every
/// scale, plus one scale step for every pool and every upsample.
fn receptive_radius(levels: usize) -> usize {
    let enc: usize = (0..=levels).map(|l| 2 << l).sum();
    let dec: usize = (1..=levels).map(|l| 2 << (l - 1)).sum();
    let resample: usize = (1..=levels).map(|l| 2 << l).sum();
    enc + dec + resample
}

#[test]
fn forward_is_translation_consistent_in_the_interior() {
    let cfg = RefinerConfig::default();
    let shift = cfg.spatial_multiple();
    let (h, w) = (192, 160);
    let r = receptive_radius(cfg.levels);
    assert_eq!(r, 72);
    let (mask, source) = test_input(5, h, w);
    let roll =
        |t: &Tensor4| Tensor4::from_fn(t.dims(), |n, c, y, x| t.get(n, c, (y + h - shift) % h, x));
    for seed in 0..3 {
        let p = init_params(&cfg, seed).unwrap();
        let a = forward(&p, &mask, &source).unwrap();
        let b = forward(&p, &roll(&mask), &roll(&source)).unwrap();
        let mut worst = 0.0f32;
        for y in (r + shift)..(h - r) {
            for x in r..(w - r) {
                worst = worst.max((b.get(0, 0, y, x) - a.get(0, 0, y - shift, x)).abs());
            }
        }
        assert!(worst < 1e-4, "seed {seed}: {worst}");
    }
}

#[test]
fn random_init_is_seed_determined() {
    let cfg = RefinerConfig::default();
    let (mask, source) = test_input(6, 16, 16);
    let a = init_params(&cfg, 99).unwrap();
    let b = init_params(&cfg, 99).unwrap();
    assert_eq!(a.to_flat(), b.to_flat());
    assert_eq!(
        forward(&a, &mask, &source).unwrap().data(),
        forward(&b, &mask, &source).unwrap().data()
    );
}

#[test]
fn batch_and_single_forward_agree() {
    let p = init_params(&RefinerConfig::default(), 1).unwrap();
    let mut r = RngState::new(8);
    let mask = Tensor4::from_fn((3, 1, 16, 16), |_, _, _, _| r.below(2) as f32);
    let source = Tensor4::from_fn((3, 1, 16, 16), |_, _, _, _| r.next_f64() as f32);
    let all = forward(&p, &mask, &source).unwrap();
    for i in 0..3 {
        let one = forward(
            &p,
            &mask.batch_slice(i, 1).unwrap(),
            &source.batch_slice(i, 1).unwrap(),
        )
        .unwrap();
        assert_eq!(one, all.batch_slice(i, 1).unwrap());
    }
}

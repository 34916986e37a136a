//! Classical neighborhood refinement of binary masks.
//!
//! With a uniform prior over the two labels and Gaussian-weighted evidence
//! from the surrounding labels, the foreground posterior at a pixel is the
//! weighted fraction of foreground neighbors in a `window x window` box
//! (clipped at the borders, center excluded). Every pixel is then relabeled
//! by thresholding its posterior, synchronously, until nothing changes.

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::synth::{canonical_detail_mask, DetailCounts};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BayesConfig {
    /// Odd side length of the neighborhood, at least 3.
    pub window: usize,
    /// Spatial Gaussian scale in pixels.
    pub sigma: f64,
    pub max_iters: usize,
    /// Posterior at or above this becomes foreground.
    pub flip_threshold: f64,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            window: 5,
            sigma: 1.5,
            max_iters: 10,
            flip_threshold: 0.5,
        }
    }
}

impl BayesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::Config(format!(
                "bayes window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!(
                "bayes sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("bayes max_iters must be >= 1".into()));
        }
        if !(self.flip_threshold > 0.0 && self.flip_threshold < 1.0) {
            return Err(Error::Config(format!(
                "bayes flip_threshold must be in (0, 1), got {}",
                self.flip_threshold
            )));
        }
        Ok(())
    }

    /// Unnormalized Gaussian weights over the window in row-major order.
    fn weights(&self) -> Vec<f64> {
        let r = (self.window / 2) as i64;
        let two_s2 = 2.0 * self.sigma * self.sigma;
        let mut out = Vec::with_capacity(self.window * self.window);
        for dy in -r..=r {
            for dx in -r..=r {
                out.push((-((dy * dy + dx * dx) as f64) / two_s2).exp());
            }
        }
        out
    }
}

/// Foreground posterior of every pixel given its neighbors' labels.
///
/// A pixel with no neighbors at all (a 1x1 image) keeps its own label as
/// its posterior.
pub fn posterior_map(mask: &Mask, cfg: &BayesConfig) -> Result<Image<f64>> {
    cfg.validate()?;
    mask.check_binary()?;
    Ok(posterior_unchecked(mask, cfg, &cfg.weights()))
}

fn posterior_unchecked(mask: &Mask, cfg: &BayesConfig, weights: &[f64]) -> Image<f64> {
    let (h, w) = mask.dims();
    let r = (cfg.window / 2) as i64;
    Image::from_fn(h, w, |y, x| {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut k = 0;
        for dy in -r..=r {
            for dx in -r..=r {
                let g = weights[k];
                k += 1;
                if dy == 0 && dx == 0 {
                    continue;
                }
                let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
                    continue;
                }
                num += g * mask.get(yy as usize, xx as usize) as f64;
                den += g;
            }
        }
        if den > 0.0 {
            num / den
        } else {
            mask.get(y, x) as f64
        }
    })
}

/// Outcome of [`refine_iterate_traced`].
#[derive(Clone, Debug, PartialEq)]
pub struct BayesRun {
    pub mask: Mask,
    /// Synchronous sweeps performed, including the final no-change sweep.
    pub iterations: usize,
    /// Whether a sweep left every label unchanged before `max_iters`.
    pub converged: bool,
}

pub fn refine_iterate_traced(mask: &Mask, cfg: &BayesConfig) -> Result<BayesRun> {
    cfg.validate()?;
    mask.check_binary()?;
    let weights = cfg.weights();
    let mut current = mask.clone();
    for iter in 1..=cfg.max_iters {
        let post = posterior_unchecked(&current, cfg, &weights);
        let next = Mask::new(
            current.height(),
            current.width(),
            post.data()
                .iter()
                .map(|&p| (p >= cfg.flip_threshold) as u8)
                .collect(),
        )?;
        if next == current {
            return Ok(BayesRun {
                mask: current,
                iterations: iter,
                converged: true,
            });
        }
        current = next;
    }
    Ok(BayesRun {
        mask: current,
        iterations: cfg.max_iters,
        converged: false,
    })
}

/// Relabels every pixel from its neighborhood posterior until a fixed point
/// or `max_iters` sweeps.
pub fn refine_iterate(mask: &Mask, cfg: &BayesConfig) -> Result<Mask> {
    Ok(refine_iterate_traced(mask, cfg)?.mask)
}

/// What happened to the fine structures of the canonical detail mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub counts: DetailCounts,
    /// Spur pixels still forming a one-pixel-wide line; zero means the
    /// spur is gone.
    pub thin_spur: usize,
    pub interior_unchanged: bool,
    pub refined: Mask,
}

/// Runs the refiner on the canonical spur-and-notch mask and reports which
/// detail pixels kept their labels.
pub fn corner_erosion_probe(cfg: &BayesConfig) -> Result<ProbeReport> {
    let detail = canonical_detail_mask();
    let refined = refine_iterate(&detail.mask, cfg)?;
    let counts = detail.survival(&refined)?;
    let thin_spur = detail.thin_spur_pixels(&refined)?;
    let interior_unchanged = detail.interior.iter().all(|&(y, x)| refined.get(y, x) == 1);
    Ok(ProbeReport {
        counts,
        thin_spur,
        interior_unchanged,
        refined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::RngState;

    fn random_mask(seed: u64, h: usize, w: usize) -> Mask {
        let mut r = RngState::new(seed);
        Mask::from_fn(h, w, |_, _| r.below(2) as u8)
    }

    #[test]
    fn all_ones_posterior_is_one() {
        let p = posterior_map(&Mask::filled(7, 9, 1), &BayesConfig::default()).unwrap();
        assert!(p.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn isolated_pixel_has_zero_posterior_and_is_removed() {
        let mut m = Mask::filled(9, 9, 0);
        m.set(4, 4, 1);
        let cfg = BayesConfig::default();
        assert_eq!(posterior_map(&m, &cfg).unwrap().get(4, 4), 0.0);
        let run = refine_iterate_traced(&m, &cfg).unwrap();
        assert_eq!(run.mask, Mask::filled(9, 9, 0));
        assert_eq!(run.iterations, 2);
    }

    #[test]
    fn vertical_edge_posterior() {
        // Columns 0..3 foreground, 3..6 background; pixel (2, 2) sits on the
        // foreground side of the edge.
        let m = Mask::from_fn(5, 6, |_, x| (x < 3) as u8);
        let cfg = BayesConfig {
            window: 3,
            ..BayesConfig::default()
        };
        let p = posterior_map(&m, &cfg).unwrap();
        let g = |d2: f64| (-d2 / (2.0 * 1.5 * 1.5)).exp();
        let mut num = 0.0;
        let mut den = 0.0;
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                if dy == 0 && dx == 0 {
                    continue;
                }
                let wgt = g((dy * dy + dx * dx) as f64);
                den += wgt;
                if 2 + dx < 3 {
                    num += wgt;
                }
            }
        }
        assert!((p.get(2, 2) - num / den).abs() < 1e-15);
        // Two axial plus two diagonal neighbors out of eight.
        let closed = (2.0 * g(1.0) + 2.0 * g(2.0) + g(1.0)) / (4.0 * g(1.0) + 4.0 * g(2.0));
        assert!((p.get(2, 2) - closed).abs() < 1e-12);
    }

    #[test]
    fn background_is_a_fixed_point() {
        let run = refine_iterate_traced(&Mask::filled(8, 8, 0), &BayesConfig::default()).unwrap();
        assert_eq!(run.mask, Mask::filled(8, 8, 0));
        assert_eq!(run.iterations, 1);
        assert!(run.converged);
    }

    #[test]
    fn rejects_non_binary_and_bad_config() {
        let m = Mask::filled(4, 4, 3);
        assert!(matches!(
            posterior_map(&m, &BayesConfig::default()),
            Err(Error::Domain(_))
        ));
        let ok = Mask::filled(4, 4, 0);
        for bad in [
            BayesConfig {
                window: 4,
                ..BayesConfig::default()
            },
            BayesConfig {
                window: 1,
                ..BayesConfig::default()
            },
            BayesConfig {
                sigma: 0.0,
                ..BayesConfig::default()
            },
            BayesConfig {
                max_iters: 0,
                ..BayesConfig::default()
            },
            BayesConfig {
                flip_threshold: 1.0,
                ..BayesConfig::default()
            },
        ] {
            assert!(refine_iterate(&ok, &bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn single_pixel_image_keeps_label() {
        let cfg = BayesConfig::default();
        for v in [0u8, 1] {
            assert_eq!(
                refine_iterate(&Mask::filled(1, 1, v), &cfg)
                    .unwrap()
                    .get(0, 0),
                v
            );
        }
    }

    #[test]
    fn idempotent_once_converged() {
        let cfg = BayesConfig::default();
        for seed in 0..50 {
            let m = random_mask(seed, 16, 16);
            let run = refine_iterate_traced(&m, &cfg).unwrap();
            if run.converged {
                assert_eq!(
                    refine_iterate(&run.mask, &cfg).unwrap(),
                    run.mask,
                    "seed {seed}"
                );
            }
        }
    }

    #[test]
    fn probe_removes_spur_and_keeps_interior() {
        let report = corner_erosion_probe(&BayesConfig::default()).unwrap();
        assert_eq!(report.counts.spur_total, 6);
        assert_eq!(report.thin_spur, 0);
        // The attachment pixel stays: the edge beside it grows outward by
        // one pixel and absorbs it. Everything further out is erased.
        let spur = &canonical_detail_mask().spur;
        let kept: Vec<_> = spur
            .iter()
            .filter(|&&(y, x)| report.refined.get(y, x) == 1)
            .collect();
        assert_eq!(kept, vec![spur.iter().max_by_key(|p| p.1).unwrap()]);
        assert!(report.interior_unchanged);
        assert_eq!(
            report.counts.removed() + report.counts.survived(),
            report.counts.total()
        );
    }
}

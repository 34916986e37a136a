//! Source-injected U-Net refiner.
//!
//! The encoder takes the noisy mask concatenated with the source frame; at
//! every deeper level the max-pooled features are concatenated with an
//! average-pooled copy of the source at the matching resolution. The
//! decoder is a plain U-Net decoder (nearest-neighbor upsampling plus skip
//! concatenation) followed by a 1x1 head and a sigmoid.

mod model;

pub use model::{
    forward, loss_and_grads, loss_and_grads_tensors, params_grad_check, refine, refine_mask,
    samples_to_batch, Batch, ParamsGradCheck,
};

use crate::error::{Error, Result};
use crate::synth::RngState;
use crate::tensor::{avgpool2, ConvKernel, Real, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefinerConfig {
    /// Number of downsampling stages.
    pub levels: usize,
    /// Feature channels at full resolution; doubles per level.
    pub base_channels: usize,
    /// Channels of the source frame (1 for grayscale).
    pub source_channels: usize,
    /// Probability at or above which a pixel is labeled foreground.
    pub threshold: f32,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            base_channels: 8,
            source_channels: 1,
            threshold: 0.5,
        }
    }
}

impl RefinerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.base_channels == 0 || self.source_channels == 0 {
            return Err(Error::Config(format!(
                "levels, base_channels and source_channels must be >= 1, got {self:?}"
            )));
        }
        if self.levels > 16 {
            return Err(Error::Config(format!(
                "levels = {} is unreasonably deep",
                self.levels
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold must be in [0, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Feature channels produced by encoder level `level`.
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Input channels of encoder level `level`: the previous features (or
    /// the one-channel mask at level 0) plus the injected source.
    pub fn encoder_in(&self, level: usize) -> usize {
        let prev = if level == 0 {
            1
        } else {
            self.channels(level - 1)
        };
        prev + self.source_channels
    }

    /// Input channels of decoder level `level` (1..=levels): upsampled
    /// features from below plus the encoder skip from `level - 1`.
    pub fn decoder_in(&self, level: usize) -> usize {
        self.channels(level) + self.channels(level - 1)
    }

    /// Spatial dims must be multiples of this.
    pub fn spatial_multiple(&self) -> usize {
        1 << self.levels
    }

    /// Number of learned scalars, with `C_l = C0 * 2^l`, `Cs` source
    /// channels and `L` levels:
    ///
    /// ```text
    ///   sum_{l=0..=L}  [9 * in_l * C_l + C_l] + [9 * C_l^2 + C_l]
    /// + sum_{l=1..=L}  [9 * (C_l + C_{l-1}) * C_{l-1} + C_{l-1}] + [9 * C_{l-1}^2 + C_{l-1}]
    /// + C0 + 1
    /// ```
    ///
    /// where `in_0 = 1 + Cs` and `in_l = C_{l-1} + Cs`.
    pub fn param_count(&self) -> usize {
        let conv = |cin: usize, cout: usize| 9 * cin * cout + cout;
        let mut total = 0;
        for l in 0..=self.levels {
            let c = self.channels(l);
            total += conv(self.encoder_in(l), c) + conv(c, c);
        }
        for l in 1..=self.levels {
            let c = self.channels(l - 1);
            total += conv(self.decoder_in(l), c) + conv(c, c);
        }
        total + self.base_channels + 1
    }
}

/// Two 3x3 convolutions, each followed by ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<T: Real = f32> {
    pub conv1: ConvKernel<T>,
    pub conv2: ConvKernel<T>,
}

impl<T: Real> Block<T> {
    fn zeros(cin: usize, cout: usize) -> Result<Self> {
        Ok(Self {
            conv1: ConvKernel::zeros(cout, cin, 3)?,
            conv2: ConvKernel::zeros(cout, cout, 3)?,
        })
    }

    fn cast<U: Real>(&self) -> Block<U> {
        Block {
            conv1: self.conv1.cast(),
            conv2: self.conv2.cast(),
        }
    }
}

/// Every learned weight of the refiner.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinerParams<T: Real = f32> {
    config: RefinerConfig,
    /// Levels 0..=L.
    pub encoder: Vec<Block<T>>,
    /// Levels 1..=L; `decoder[i]` is level `i + 1`.
    pub decoder: Vec<Block<T>>,
    /// 1x1 projection to a single logit channel.
    pub head: ConvKernel<T>,
}

impl<T: Real> RefinerParams<T> {
    /// All-zero parameters with the shapes `config` implies.
    pub fn zeros(config: RefinerConfig) -> Result<Self> {
        config.validate()?;
        let encoder = (0..=config.levels)
            .map(|l| Block::zeros(config.encoder_in(l), config.channels(l)))
            .collect::<Result<_>>()?;
        let decoder = (1..=config.levels)
            .map(|l| Block::zeros(config.decoder_in(l), config.channels(l - 1)))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            encoder,
            decoder,
            head: ConvKernel::zeros(1, config.base_channels, 1)?,
        })
    }

    pub fn config(&self) -> &RefinerConfig {
        &self.config
    }

    pub fn set_threshold(&mut self, threshold: f32) -> Result<()> {
        let cfg = RefinerConfig {
            threshold,
            ..self.config
        };
        cfg.validate()?;
        self.config = cfg;
        Ok(())
    }

    /// Kernels in canonical order: encoder levels ascending, decoder levels
    /// ascending, head; two kernels per block.
    pub fn kernels(&self) -> Vec<&ConvKernel<T>> {
        let mut out = Vec::with_capacity(2 * (self.encoder.len() + self.decoder.len()) + 1);
        for b in self.encoder.iter().chain(&self.decoder) {
            out.push(&b.conv1);
            out.push(&b.conv2);
        }
        out.push(&self.head);
        out
    }

    pub fn kernels_mut(&mut self) -> Vec<&mut ConvKernel<T>> {
        let mut out = Vec::with_capacity(2 * (self.encoder.len() + self.decoder.len()) + 1);
        for b in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.push(&mut b.conv1);
            out.push(&mut b.conv2);
        }
        out.push(&mut self.head);
        out
    }

    pub fn param_count(&self) -> usize {
        self.kernels().iter().map(|k| k.param_count()).sum()
    }

    /// Parameters flattened in canonical order, weights before bias.
    pub fn to_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.param_count());
        for k in self.kernels() {
            v.extend_from_slice(k.weights().data());
            v.extend_from_slice(k.bias());
        }
        v
    }

    pub fn set_from_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::dim(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut at = 0;
        for k in self.kernels_mut() {
            let nw = k.weights().len();
            k.weights_mut()
                .data_mut()
                .copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = k.bias().len();
            k.bias_mut().copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.kernels()
            .iter()
            .all(|k| k.weights().is_finite() && k.bias().iter().all(|b| b.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> RefinerParams<U> {
        RefinerParams {
            config: self.config,
            encoder: self.encoder.iter().map(Block::cast).collect(),
            decoder: self.decoder.iter().map(Block::cast).collect(),
            head: self.head.cast(),
        }
    }
}

/// He-normal initialization: weights `N(0, 2 / fan_in)` from the splitmix64
/// stream of `seed` (Box-Muller), biases zero. Kernels are filled in
/// canonical order.
pub fn init_params(config: &RefinerConfig, seed: u64) -> Result<RefinerParams> {
    let mut params = RefinerParams::zeros(*config)?;
    let mut rng = RngState::new(seed);
    for k in params.kernels_mut() {
        let fan_in = (k.c_in() * k.k() * k.k()) as f64;
        let std = (2.0 / fan_in).sqrt();
        for w in k.weights_mut().data_mut() {
            *w = (std * rng.gaussian()) as f32;
        }
    }
    Ok(params)
}

/// The source at full resolution followed by `levels` successive 2x2
/// average poolings.
pub fn source_pyramid<T: Real>(source: &Tensor4<T>, levels: usize) -> Result<Vec<Tensor4<T>>> {
    let m = 1usize
        .checked_shl(levels as u32)
        .ok_or_else(|| Error::dim(format!("pyramid depth {levels} too large")))?;
    if source.h() % m != 0 || source.w() % m != 0 {
        return Err(Error::dim(format!(
            "source {}x{} is not divisible by 2^{levels} = {m}",
            source.h(),
            source.w()
        )));
    }
    let mut out = Vec::with_capacity(levels + 1);
    out.push(source.clone());
    for l in 0..levels {
        let next = avgpool2(&out[l])?;
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config() {
        let c = RefinerConfig::default();
        assert_eq!((c.levels, c.base_channels, c.source_channels), (3, 8, 1));
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.encoder_in(0), 2);
        assert_eq!(c.encoder_in(2), 17);
        assert_eq!(c.decoder_in(1), 24);
        assert_eq!(c.decoder_in(3), 96);
    }

    #[test]
    fn tiny_param_count_by_hand() {
        // L = 1, C0 = 2, Cs = 1:
        // enc0: 9*2*2+2 + 9*2*2+2 = 76; enc1: 9*3*4+4 + 9*4*4+4 = 260;
        // dec1: 9*6*2+2 + 9*2*2+2 = 148; head: 3.
        let c = RefinerConfig {
            levels: 1,
            base_channels: 2,
            source_channels: 1,
            threshold: 0.5,
        };
        assert_eq!(c.param_count(), 76 + 260 + 148 + 3);
        assert_eq!(RefinerParams::<f32>::zeros(c).unwrap().param_count(), 487);
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let c = RefinerConfig::default();
        let a = init_params(&c, 3).unwrap();
        assert_eq!(a, init_params(&c, 3).unwrap());
        assert_ne!(a, init_params(&c, 4).unwrap());
        assert!(a
            .kernels()
            .iter()
            .all(|k| k.bias().iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_scale_matches_fan_in() {
        // Encoder level 0 conv2 and decoder level 1 conv2 both have fan-in
        // 3 * 3 * 8 = 72; together they hold 1152 weights.
        let p = init_params(&RefinerConfig::default(), 21).unwrap();
        let mut ws: Vec<f64> = Vec::new();
        for k in [&p.encoder[0].conv2, &p.decoder[0].conv2] {
            assert_eq!(k.c_in() * 9, 72);
            ws.extend(k.weights().data().iter().map(|&w| w as f64));
        }
        assert!(ws.len() >= 500);
        let mean = ws.iter().sum::<f64>() / ws.len() as f64;
        let sd =
            (ws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (ws.len() - 1) as f64).sqrt();
        let want = (2.0f64 / 72.0).sqrt();
        assert!((sd / want - 1.0).abs() < 0.3, "sd {sd} vs {want}");
    }

    #[test]
    fn flat_roundtrip() {
        let p = init_params(&RefinerConfig::default(), 1).unwrap();
        let mut q = RefinerParams::zeros(*p.config()).unwrap();
        q.set_from_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.set_from_flat(&[0.0; 3]).is_err());
    }

    #[test]
    fn pyramid_shapes_and_tile_means() {
        let mut r = RngState::new(2);
        let src = Tensor4::<f32>::from_fn((1, 1, 8, 8), |_, _, _, _| r.next_f64() as f32);
        let p0 = source_pyramid(&src, 0).unwrap();
        assert_eq!(p0, vec![src.clone()]);

        let p = source_pyramid(&src, 2).unwrap();
        let dims: Vec<_> = p.iter().map(|t| (t.h(), t.w())).collect();
        assert_eq!(dims, vec![(8, 8), (4, 4), (2, 2)]);
        for ty in 0..2 {
            for tx in 0..2 {
                let mut s = 0.0f64;
                for y in 4 * ty..4 * ty + 4 {
                    for x in 4 * tx..4 * tx + 4 {
                        s += src.get(0, 0, y, x) as f64;
                    }
                }
                assert!((p[2].get(0, 0, ty, tx) as f64 - s / 16.0).abs() < 1e-6);
            }
        }
        assert!(source_pyramid(&Tensor4::<f32>::zeros((1, 1, 12, 8)), 3).is_err());
    }
}

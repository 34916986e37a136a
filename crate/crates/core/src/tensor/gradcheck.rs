//! Finite-difference verification of the hand-written backward passes.

use super::ops::*;
use super::{Real, Tensor4};
use crate::error::{Error, Result};
use crate::synth::rng::RngState;

/// Central-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-3;

/// Upper bound on the total number of input elements a check may perturb.
pub const GRAD_CHECK_MAX_ELEMENTS: usize = 512;

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// A differentiable operation over a list of input tensors.
///
/// Parameters are treated as inputs: `Conv2d` takes `[x, weights, bias]`
/// with the bias shaped `(1, c_out, 1, 1)`. Scalar losses produce a
/// `(1, 1, 1, 1)` tensor.
#[derive(Clone, Debug)]
pub enum Layer<T: Real> {
    Conv2d,
    MaxPool2,
    AvgPool2,
    Upsample2,
    ConcatC,
    Activation(Activation),
    BceLoss {
        target: Tensor4<T>,
    },
    /// Hard thresholding at the given level. Piecewise constant, so it has
    /// no usable backward.
    Threshold(T),
    /// `outer(inner(inputs))`; `outer` must take a single input.
    Chain(Box<Layer<T>>, Box<Layer<T>>),
}

fn arity<T: Real>(name: &str, inputs: &[Tensor4<T>], want: usize) -> Result<()> {
    if inputs.len() != want {
        return Err(Error::dim(format!(
            "{name} takes {want} inputs, got {}",
            inputs.len()
        )));
    }
    Ok(())
}

fn kernel_from<T: Real>(w: &Tensor4<T>, b: &Tensor4<T>) -> Result<ConvKernel<T>> {
    ConvKernel::new(w.clone(), b.data().to_vec())
}

impl<T: Real> Layer<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d => "conv2d",
            Layer::MaxPool2 => "maxpool2",
            Layer::AvgPool2 => "avgpool2",
            Layer::Upsample2 => "upsample2",
            Layer::ConcatC => "concat_c",
            Layer::Activation(Activation::Relu) => "relu",
            Layer::Activation(Activation::Sigmoid) => "sigmoid",
            Layer::BceLoss { .. } => "bce_loss",
            Layer::Threshold(_) => "threshold",
            Layer::Chain(..) => "chain",
        }
    }

    pub fn forward(&self, inputs: &[Tensor4<T>]) -> Result<Tensor4<T>> {
        match self {
            Layer::Conv2d => {
                arity("conv2d", inputs, 3)?;
                conv2d(&inputs[0], &kernel_from(&inputs[1], &inputs[2])?)
            }
            Layer::MaxPool2 => {
                arity("maxpool2", inputs, 1)?;
                Ok(maxpool2(&inputs[0])?.0)
            }
            Layer::AvgPool2 => {
                arity("avgpool2", inputs, 1)?;
                avgpool2(&inputs[0])
            }
            Layer::Upsample2 => {
                arity("upsample2", inputs, 1)?;
                Ok(upsample2(&inputs[0]))
            }
            Layer::ConcatC => {
                arity("concat_c", inputs, 2)?;
                concat_c(&inputs[0], &inputs[1])
            }
            Layer::Activation(kind) => {
                arity("activation", inputs, 1)?;
                Ok(activation(&inputs[0], *kind))
            }
            Layer::BceLoss { target } => {
                arity("bce_loss", inputs, 1)?;
                let l = bce_loss(&inputs[0], target)?;
                Tensor4::from_vec((1, 1, 1, 1), vec![l])
            }
            Layer::Threshold(tau) => {
                arity("threshold", inputs, 1)?;
                let tau = *tau;
                Ok(inputs[0].map(|v| if v >= tau { T::one() } else { T::zero() }))
            }
            Layer::Chain(inner, outer) => {
                let mid = inner.forward(inputs)?;
                outer.forward(std::slice::from_ref(&mid))
            }
        }
    }

    /// Gradients with respect to every input, given the upstream gradient.
    pub fn backward(
        &self,
        inputs: &[Tensor4<T>],
        grad_out: &Tensor4<T>,
    ) -> Result<Vec<Tensor4<T>>> {
        match self {
            Layer::Conv2d => {
                arity("conv2d", inputs, 3)?;
                let g =
                    conv2d_backward(&inputs[0], &kernel_from(&inputs[1], &inputs[2])?, grad_out)?;
                let gb = Tensor4::from_vec(inputs[2].dims(), g.bias)?;
                Ok(vec![g.input, g.weights, gb])
            }
            Layer::MaxPool2 => {
                arity("maxpool2", inputs, 1)?;
                let (_, idx) = maxpool2(&inputs[0])?;
                Ok(vec![maxpool2_backward(grad_out, &idx)?])
            }
            Layer::AvgPool2 => {
                arity("avgpool2", inputs, 1)?;
                Ok(vec![avgpool2_backward(grad_out)])
            }
            Layer::Upsample2 => {
                arity("upsample2", inputs, 1)?;
                Ok(vec![upsample2_backward(grad_out)?])
            }
            Layer::ConcatC => {
                arity("concat_c", inputs, 2)?;
                let (a, b) = split_c(grad_out, inputs[0].c())?;
                Ok(vec![a, b])
            }
            Layer::Activation(kind) => {
                arity("activation", inputs, 1)?;
                let y = activation(&inputs[0], *kind);
                Ok(vec![activation_backward(*kind, &inputs[0], &y, grad_out)?])
            }
            Layer::BceLoss { target } => {
                arity("bce_loss", inputs, 1)?;
                let mut g = bce_loss_backward(&inputs[0], target)?;
                g.scale(grad_out.data()[0]);
                Ok(vec![g])
            }
            Layer::Threshold(_) => Err(Error::UnsupportedOp("threshold")),
            Layer::Chain(inner, outer) => {
                let mid = inner.forward(inputs)?;
                let g_mid = outer.backward(std::slice::from_ref(&mid), grad_out)?;
                inner.backward(inputs, &g_mid[0])
            }
        }
    }
}

/// Maximum relative error between the analytic backward pass of `layer` and
/// central finite differences, over every element of every input.
///
/// The layer output is reduced to a scalar through a fixed random
/// projection drawn from `seed`, accumulated in `f64`.
pub fn grad_check<T: Real>(layer: &Layer<T>, inputs: &[Tensor4<T>], seed: u64) -> Result<f64> {
    let total: usize = inputs.iter().map(Tensor4::len).sum();
    if total > GRAD_CHECK_MAX_ELEMENTS {
        return Err(Error::dim(format!(
            "grad_check is limited to {GRAD_CHECK_MAX_ELEMENTS} input elements, got {total}"
        )));
    }

    let out = layer.forward(inputs)?;
    let mut rng = RngState::new(seed);
    let proj: Vec<f64> = (0..out.len()).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let objective = |y: &Tensor4<T>| -> f64 {
        y.data()
            .iter()
            .zip(&proj)
            .map(|(&v, &r)| v.as_f64() * r)
            .sum()
    };

    let upstream = Tensor4::from_vec(out.dims(), proj.iter().map(|&r| T::of(r)).collect())?;
    let analytic = layer.backward(inputs, &upstream)?;

    let h = T::of(GRAD_CHECK_STEP);
    let two_h = (h + h).as_f64();
    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (which, grads) in analytic.iter().enumerate() {
        for k in 0..probe[which].len() {
            let orig = probe[which].data()[k];
            probe[which].data_mut()[k] = orig + h;
            let up = objective(&layer.forward(&probe)?);
            probe[which].data_mut()[k] = orig - h;
            let down = objective(&layer.forward(&probe)?);
            probe[which].data_mut()[k] = orig;
            let numeric = (up - down) / two_h;
            worst = worst.max(relative_error(grads.data()[k].as_f64(), numeric));
        }
    }
    Ok(worst)
}

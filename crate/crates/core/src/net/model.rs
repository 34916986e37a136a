use super::{source_pyramid, Block, RefinerParams};
use crate::error::{Error, Result};
use crate::image::{Frame, Mask};
use crate::synth::Sample;
use crate::tensor::{
    activation, activation_backward, bce_loss, concat_c, conv2d, conv2d_backward, maxpool2,
    maxpool2_backward, relative_error, split_c, upsample2, upsample2_backward, Activation,
    ConvGrads, ConvKernel, PoolIndices, Real, Tensor4, BCE_EPS, GRAD_CHECK_STEP,
};

/// Stacked network inputs and targets.
#[derive(Clone, Debug)]
pub struct Batch<T: Real = f32> {
    pub mask: Tensor4<T>,
    pub source: Tensor4<T>,
    pub target: Tensor4<T>,
}

/// Stacks samples along the batch axis.
pub fn samples_to_batch(samples: &[&Sample]) -> Result<Batch> {
    if samples.is_empty() {
        return Err(Error::dim("empty batch"));
    }
    let dims = samples[0].dims();
    if let Some(s) = samples.iter().find(|s| s.dims() != dims) {
        return Err(Error::dim(format!(
            "batch mixes sample dims {:?} and {:?}",
            dims,
            s.dims()
        )));
    }
    let stack = |f: &dyn Fn(&Sample) -> Tensor4| {
        Tensor4::stack(&samples.iter().map(|s| f(s)).collect::<Vec<_>>())
    };
    Ok(Batch {
        mask: stack(&|s| s.mask_noisy.to_tensor())?,
        source: stack(&|s| s.source.to_tensor())?,
        target: stack(&|s| s.mask_gt.to_tensor())?,
    })
}

fn check_inputs<T: Real>(
    params: &RefinerParams<T>,
    mask: &Tensor4<T>,
    source: &Tensor4<T>,
) -> Result<()> {
    let cfg = params.config();
    let (n, c, h, w) = mask.dims();
    if c != 1 {
        return Err(Error::dim(format!("mask must have 1 channel, got {c}")));
    }
    if source.dims() != (n, cfg.source_channels, h, w) {
        return Err(Error::dim(format!(
            "source {:?} does not match mask {:?} with {} source channels",
            source.dims(),
            mask.dims(),
            cfg.source_channels
        )));
    }
    let m = cfg.spatial_multiple();
    if h % m != 0 || w % m != 0 {
        return Err(Error::dim(format!(
            "input {h}x{w} is not divisible by 2^{} = {m}",
            cfg.levels
        )));
    }
    if mask.data().iter().any(|&v| v != T::zero() && v != T::one()) {
        return Err(Error::Domain("mask values must be 0 or 1".into()));
    }
    if source
        .data()
        .iter()
        .any(|&v| !(v >= T::zero() && v <= T::one()))
    {
        return Err(Error::Domain("source values must lie in [0, 1]".into()));
    }
    Ok(())
}

struct BlockCache<T: Real> {
    input: Tensor4<T>,
    pre1: Tensor4<T>,
    act1: Tensor4<T>,
    pre2: Tensor4<T>,
    out: Tensor4<T>,
}

fn block_forward<T: Real>(block: &Block<T>, input: Tensor4<T>) -> Result<BlockCache<T>> {
    let pre1 = conv2d(&input, &block.conv1)?;
    let act1 = activation(&pre1, Activation::Relu);
    let pre2 = conv2d(&act1, &block.conv2)?;
    let out = activation(&pre2, Activation::Relu);
    Ok(BlockCache {
        input,
        pre1,
        act1,
        pre2,
        out,
    })
}

fn block_backward<T: Real>(
    block: &Block<T>,
    cache: &BlockCache<T>,
    grad_out: &Tensor4<T>,
) -> Result<(Tensor4<T>, Block<T>)> {
    let g_pre2 = activation_backward(Activation::Relu, &cache.pre2, &cache.out, grad_out)?;
    let g2 = conv2d_backward(&cache.act1, &block.conv2, &g_pre2)?;
    let g_pre1 = activation_backward(Activation::Relu, &cache.pre1, &cache.act1, &g2.input)?;
    let g1 = conv2d_backward(&cache.input, &block.conv1, &g_pre1)?;
    let to_kernel = |g: ConvGrads<T>| ConvKernel::new(g.weights, g.bias);
    let input_grad = g1.input.clone();
    Ok((
        input_grad,
        Block {
            conv1: to_kernel(g1)?,
            conv2: to_kernel(g2)?,
        },
    ))
}

struct Trace<T: Real> {
    encoder: Vec<BlockCache<T>>,
    pools: Vec<PoolIndices>,
    decoder: Vec<BlockCache<T>>,
    prob: Tensor4<T>,
}

fn sigmoid_clamped<T: Real>(z: T) -> T {
    let p = if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    };
    let eps = T::of(BCE_EPS);
    p.max(eps).min(T::one() - eps)
}

fn run<T: Real>(
    params: &RefinerParams<T>,
    mask: &Tensor4<T>,
    source: &Tensor4<T>,
) -> Result<Trace<T>> {
    check_inputs(params, mask, source)?;
    let levels = params.config().levels;
    let pyramid = source_pyramid(source, levels)?;

    let mut encoder: Vec<BlockCache<T>> = Vec::with_capacity(levels + 1);
    let mut pools = Vec::with_capacity(levels);
    for (l, block) in params.encoder.iter().enumerate() {
        let input = if l == 0 {
            concat_c(mask, &pyramid[0])?
        } else {
            let (pooled, idx) = maxpool2(&encoder[l - 1].out)?;
            pools.push(idx);
            concat_c(&pooled, &pyramid[l])?
        };
        encoder.push(block_forward(block, input)?);
    }

    let mut decoder: Vec<BlockCache<T>> = Vec::with_capacity(levels);
    for l in (1..=levels).rev() {
        let below = decoder.last().map_or(&encoder[levels].out, |c| &c.out);
        let input = concat_c(&upsample2(below), &encoder[l - 1].out)?;
        decoder.push(block_forward(&params.decoder[l - 1], input)?);
    }

    let top = decoder.last().map_or(&encoder[levels].out, |c| &c.out);
    let prob = conv2d(top, &params.head)?.map(sigmoid_clamped);
    Ok(Trace {
        encoder,
        pools,
        decoder,
        prob,
    })
}

/// Per-pixel foreground probability, `(n, 1, h, w)`. Probabilities are
/// clipped to `[1e-7, 1 - 1e-7]` so they stay strictly inside (0, 1) even
/// where the logistic saturates in single precision.
pub fn forward<T: Real>(
    params: &RefinerParams<T>,
    mask: &Tensor4<T>,
    source: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    Ok(run(params, mask, source)?.prob)
}

/// Mean BCE against `target` and its gradient with respect to every
/// parameter. Gradients reaching the source pyramid are dropped.
pub fn loss_and_grads_tensors<T: Real>(
    params: &RefinerParams<T>,
    batch: &Batch<T>,
) -> Result<(T, RefinerParams<T>)> {
    let trace = run(params, &batch.mask, &batch.source)?;
    if batch.target.dims() != trace.prob.dims() {
        return Err(Error::dim(format!(
            "target {:?} vs prediction {:?}",
            batch.target.dims(),
            trace.prob.dims()
        )));
    }
    let loss = bce_loss(&trace.prob, &batch.target)?;
    let cfg = *params.config();
    let levels = cfg.levels;

    // d(loss)/d(logit) for sigmoid followed by mean BCE.
    let inv_n = T::one() / T::of(trace.prob.len() as f64);
    let mut g_logit = trace.prob.clone();
    for (g, &t) in g_logit.data_mut().iter_mut().zip(batch.target.data()) {
        *g = (*g - t) * inv_n;
    }

    let mut grads = RefinerParams::zeros(cfg)?;
    let top = trace
        .decoder
        .last()
        .map_or(&trace.encoder[levels].out, |c| &c.out);
    let gh = conv2d_backward(top, &params.head, &g_logit)?;
    grads.head = ConvKernel::new(gh.weights, gh.bias)?;

    // Decoder caches are stored deepest level first.
    let mut skip_grads: Vec<Option<Tensor4<T>>> = vec![None; levels + 1];
    let mut g = gh.input;
    for l in 1..=levels {
        let cache = &trace.decoder[levels - l];
        let (g_in, block_grads) = block_backward(&params.decoder[l - 1], cache, &g)?;
        grads.decoder[l - 1] = block_grads;
        let (g_up, g_skip) = split_c(&g_in, cfg.channels(l))?;
        skip_grads[l - 1] = Some(g_skip);
        g = upsample2_backward(&g_up)?;
    }

    for l in (0..=levels).rev() {
        if let Some(s) = skip_grads[l].take() {
            g.add_assign(&s)?;
        }
        let (g_in, block_grads) = block_backward(&params.encoder[l], &trace.encoder[l], &g)?;
        grads.encoder[l] = block_grads;
        if l > 0 {
            let (g_pooled, _source_grad) = split_c(&g_in, cfg.channels(l - 1))?;
            g = maxpool2_backward(&g_pooled, &trace.pools[l - 1])?;
        }
    }
    Ok((loss, grads))
}

pub fn loss_and_grads(params: &RefinerParams, samples: &[&Sample]) -> Result<(f32, RefinerParams)> {
    let batch = samples_to_batch(samples)?;
    loss_and_grads_tensors(params, &batch)
}

/// Binary labels: 1 where the forward probability is at least `tau`.
pub fn refine<T: Real>(
    params: &RefinerParams<T>,
    mask: &Tensor4<T>,
    source: &Tensor4<T>,
    tau: T,
) -> Result<Tensor4<T>> {
    let p = forward(params, mask, source)?;
    Ok(p.map(|v| if v >= tau { T::one() } else { T::zero() }))
}

/// [`refine`] for a single mask/frame pair.
pub fn refine_mask(params: &RefinerParams, mask: &Mask, source: &Frame, tau: f32) -> Result<Mask> {
    if !mask.same_dims(source) {
        return Err(Error::dim(format!(
            "mask {:?} vs source {:?}",
            mask.dims(),
            source.dims()
        )));
    }
    mask.check_binary()?;
    let out = refine(params, &mask.to_tensor(), &source.to_tensor(), tau)?;
    Mask::new(
        mask.height(),
        mask.width(),
        out.data().iter().map(|&v| v as u8).collect(),
    )
}

/// Which side of every ReLU kink and which pooling argmax the forward pass
/// took. The network is smooth in its parameters while this stays fixed.
fn region<T: Real>(trace: &Trace<T>) -> Vec<usize> {
    let mut out = Vec::new();
    for c in trace.encoder.iter().chain(&trace.decoder) {
        for pre in [&c.pre1, &c.pre2] {
            out.extend(pre.data().iter().map(|&v| (v > T::zero()) as usize));
        }
    }
    for p in &trace.pools {
        out.extend_from_slice(p.argmax());
    }
    out
}

/// Outcome of [`params_grad_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamsGradCheck {
    /// Largest relative error over the compared parameters.
    pub max_error: f64,
    pub compared: usize,
    /// Parameters whose `+-h` perturbation crossed a ReLU kink or changed
    /// a pooling argmax; a central difference across a kink does not
    /// estimate the derivative, so these are not compared.
    pub skipped: usize,
}

/// Compares [`loss_and_grads_tensors`] with central finite differences of
/// the loss, one parameter at a time.
pub fn params_grad_check<T: Real>(
    params: &RefinerParams<T>,
    batch: &Batch<T>,
) -> Result<ParamsGradCheck> {
    let (_, grads) = loss_and_grads_tensors(params, batch)?;
    let analytic = grads.to_flat();
    let base = params.to_flat();
    let base_region = region(&run(params, &batch.mask, &batch.source)?);
    let mut probe = params.clone();
    let h = T::of(GRAD_CHECK_STEP);
    let eval = |p: &RefinerParams<T>| -> Result<(f64, bool)> {
        let trace = run(p, &batch.mask, &batch.source)?;
        let loss = bce_loss(&trace.prob, &batch.target)?.as_f64();
        Ok((loss, region(&trace) == base_region))
    };
    let mut flat = base.clone();
    let mut out = ParamsGradCheck {
        max_error: 0.0,
        compared: 0,
        skipped: 0,
    };
    for i in 0..base.len() {
        flat[i] = base[i] + h;
        probe.set_from_flat(&flat)?;
        let (up, same_up) = eval(&probe)?;
        flat[i] = base[i] - h;
        probe.set_from_flat(&flat)?;
        let (down, same_down) = eval(&probe)?;
        flat[i] = base[i];
        if !(same_up && same_down) {
            out.skipped += 1;
            continue;
        }
        let numeric = (up - down) / (h + h).as_f64();
        out.max_error = out
            .max_error
            .max(relative_error(analytic[i].as_f64(), numeric));
        out.compared += 1;
    }
    Ok(out)
}

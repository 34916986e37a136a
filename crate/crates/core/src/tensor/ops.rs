use super::{Dims, Real, Tensor4};
use crate::error::{Error, Result};

/// Clamp applied to probabilities before taking logs in the BCE loss.
pub const BCE_EPS: f64 = 1e-7;

/// Convolution weights `(c_out, c_in, k, k)` plus one bias per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel<T: Real = f32> {
    weights: Tensor4<T>,
    bias: Vec<T>,
}

impl<T: Real> ConvKernel<T> {
    pub fn new(weights: Tensor4<T>, bias: Vec<T>) -> Result<Self> {
        let (co, _, kh, kw) = weights.dims();
        if kh != kw || !(kh == 1 || kh == 3) {
            return Err(Error::dim(format!(
                "kernel must be 1x1 or 3x3, got {kh}x{kw}"
            )));
        }
        if bias.len() != co {
            return Err(Error::dim(format!(
                "kernel has {co} output channels but {} biases",
                bias.len()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(c_out: usize, c_in: usize, k: usize) -> Result<Self> {
        Self::new(Tensor4::zeros((c_out, c_in, k, k)), vec![T::zero(); c_out])
    }

    pub fn c_out(&self) -> usize {
        self.weights.n()
    }

    pub fn c_in(&self) -> usize {
        self.weights.c()
    }

    pub fn k(&self) -> usize {
        self.weights.h()
    }

    pub fn weights(&self) -> &Tensor4<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Tensor4<T> {
        &mut self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn cast<U: Real>(&self) -> ConvKernel<U> {
        ConvKernel {
            weights: self.weights.cast(),
            bias: self.bias.iter().map(|&b| U::of(b.as_f64())).collect(),
        }
    }
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Clone, Debug)]
pub struct ConvGrads<T: Real = f32> {
    pub input: Tensor4<T>,
    pub weights: Tensor4<T>,
    pub bias: Vec<T>,
}

/// `dst[y][x] += wv * src[y + dy][x + dx]` over every in-range source pixel.
#[inline]
fn accumulate_shifted<T: Real>(
    dst: &mut [T],
    src: &[T],
    h: usize,
    w: usize,
    dy: isize,
    dx: isize,
    wv: T,
) {
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
    if x0 >= x1 {
        return;
    }
    for y in 0..h {
        let sy = y as isize + dy;
        if sy < 0 || sy >= h as isize {
            continue;
        }
        let sx0 = (x0 as isize + dx) as usize;
        let d = &mut dst[y * w + x0..y * w + x1];
        let s = &src[sy as usize * w + sx0..sy as usize * w + sx0 + (x1 - x0)];
        for (o, &i) in d.iter_mut().zip(s) {
            *o += wv * i;
        }
    }
}

/// `sum over y, x of a[y][x] * b[y + dy][x + dx]`, in-range terms only.
#[inline]
fn dot_shifted<T: Real>(a: &[T], b: &[T], h: usize, w: usize, dy: isize, dx: isize) -> T {
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
    let mut acc = T::zero();
    if x0 >= x1 {
        return acc;
    }
    for y in 0..h {
        let sy = y as isize + dy;
        if sy < 0 || sy >= h as isize {
            continue;
        }
        let sx0 = (x0 as isize + dx) as usize;
        let ra = &a[y * w + x0..y * w + x1];
        let rb = &b[sy as usize * w + sx0..sy as usize * w + sx0 + (x1 - x0)];
        for (&p, &q) in ra.iter().zip(rb) {
            acc += p * q;
        }
    }
    acc
}

/// Stride-1 cross-correlation preserving spatial dims: zero padding 1 for
/// 3x3 kernels, none for 1x1. Each output element accumulates bias first,
/// then input channels, kernel rows, kernel columns in that fixed order.
pub fn conv2d<T: Real>(x: &Tensor4<T>, kern: &ConvKernel<T>) -> Result<Tensor4<T>> {
    let (n, ci, h, w) = x.dims();
    if kern.c_in() != ci {
        return Err(Error::dim(format!(
            "conv2d: kernel expects {} input channels, input has {ci}",
            kern.c_in()
        )));
    }
    let co = kern.c_out();
    let k = kern.k();
    let pad = (k / 2) as isize;
    let kw = kern.weights.data();
    let mut out = Tensor4::zeros((n, co, h, w));
    for b in 0..n {
        for o in 0..co {
            let dst = out.plane_mut(b, o);
            dst.fill(kern.bias[o]);
            for i in 0..ci {
                let src = x.plane(b, i);
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = kw[((o * ci + i) * k + ky) * k + kx];
                        accumulate_shifted(
                            dst,
                            src,
                            h,
                            w,
                            ky as isize - pad,
                            kx as isize - pad,
                            wv,
                        );
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor4<T>,
    kern: &ConvKernel<T>,
    grad_out: &Tensor4<T>,
) -> Result<ConvGrads<T>> {
    let (n, ci, h, w) = x.dims();
    let co = kern.c_out();
    if kern.c_in() != ci || grad_out.dims() != (n, co, h, w) {
        return Err(Error::dim(format!(
            "conv2d_backward: input {:?}, kernel ({co}, {}), grad {:?}",
            x.dims(),
            kern.c_in(),
            grad_out.dims()
        )));
    }
    let k = kern.k();
    let pad = (k / 2) as isize;
    let kw = kern.weights.data();

    let mut gin = Tensor4::zeros(x.dims());
    for b in 0..n {
        for i in 0..ci {
            let dst = gin.plane_mut(b, i);
            for o in 0..co {
                let g = grad_out.plane(b, o);
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = kw[((o * ci + i) * k + ky) * k + kx];
                        accumulate_shifted(dst, g, h, w, pad - ky as isize, pad - kx as isize, wv);
                    }
                }
            }
        }
    }

    let mut gw = Tensor4::zeros(kern.weights.dims());
    let mut gb = vec![T::zero(); co];
    {
        let gwd = gw.data_mut();
        for b in 0..n {
            for o in 0..co {
                let g = grad_out.plane(b, o);
                let mut s = T::zero();
                for &v in g {
                    s += v;
                }
                gb[o] += s;
                for i in 0..ci {
                    let src = x.plane(b, i);
                    for ky in 0..k {
                        for kx in 0..k {
                            gwd[((o * ci + i) * k + ky) * k + kx] +=
                                dot_shifted(g, src, h, w, ky as isize - pad, kx as isize - pad);
                        }
                    }
                }
            }
        }
    }

    Ok(ConvGrads {
        input: gin,
        weights: gw,
        bias: gb,
    })
}

fn check_even(op: &str, dims: Dims) -> Result<()> {
    if dims.2 % 2 != 0 || dims.3 % 2 != 0 {
        return Err(Error::dim(format!(
            "{op}: spatial dims must be even, got {}x{}",
            dims.2, dims.3
        )));
    }
    Ok(())
}

/// Winning input position of every max-pool output, for routing gradients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    input_dims: Dims,
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn input_dims(&self) -> Dims {
        self.input_dims
    }

    /// Flat input index chosen for each output element.
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// 2x2 max pooling, stride 2. Ties go to the first element in row-major
/// block order.
pub fn maxpool2<T: Real>(x: &Tensor4<T>) -> Result<(Tensor4<T>, PoolIndices)> {
    check_even("maxpool2", x.dims())?;
    let (n, c, h, w) = x.dims();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor4::zeros((n, c, oh, ow));
    let mut argmax = Vec::with_capacity(out.len());
    let src = x.data();
    let mut j = 0;
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let p = base + 2 * oy * w + 2 * ox;
                    let mut best = p;
                    for q in [p + 1, p + w, p + w + 1] {
                        if src[q] > src[best] {
                            best = q;
                        }
                    }
                    out.data_mut()[j] = src[best];
                    argmax.push(best);
                    j += 1;
                }
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            input_dims: x.dims(),
            argmax,
        },
    ))
}

pub fn maxpool2_backward<T: Real>(grad_out: &Tensor4<T>, idx: &PoolIndices) -> Result<Tensor4<T>> {
    if grad_out.len() != idx.argmax.len() {
        return Err(Error::dim(format!(
            "maxpool2_backward: {} gradients for {} pooled outputs",
            grad_out.len(),
            idx.argmax.len()
        )));
    }
    let mut gin = Tensor4::zeros(idx.input_dims);
    let d = gin.data_mut();
    for (&g, &i) in grad_out.data().iter().zip(&idx.argmax) {
        d[i] += g;
    }
    Ok(gin)
}

/// 2x2 mean pooling, stride 2.
pub fn avgpool2<T: Real>(x: &Tensor4<T>) -> Result<Tensor4<T>> {
    check_even("avgpool2", x.dims())?;
    let (n, c, h, w) = x.dims();
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::of(0.25);
    let src = x.data();
    let mut out = Tensor4::zeros((n, c, oh, ow));
    let mut j = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let p = base + 2 * oy * w + 2 * ox;
                out.data_mut()[j] = (src[p] + src[p + 1] + src[p + w] + src[p + w + 1]) * quarter;
                j += 1;
            }
        }
    }
    Ok(out)
}

pub fn avgpool2_backward<T: Real>(grad_out: &Tensor4<T>) -> Tensor4<T> {
    let mut g = upsample2(grad_out);
    g.scale(T::of(0.25));
    g
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample2<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    let (n, c, h, w) = x.dims();
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Tensor4::zeros((n, c, oh, ow));
    let src = x.data();
    let dst = out.data_mut();
    for plane in 0..n * c {
        for y in 0..h {
            let row = &src[(plane * h + y) * w..(plane * h + y + 1) * w];
            let o0 = (plane * oh + 2 * y) * ow;
            for (x, &v) in row.iter().enumerate() {
                dst[o0 + 2 * x] = v;
                dst[o0 + 2 * x + 1] = v;
            }
            dst.copy_within(o0..o0 + ow, o0 + ow);
        }
    }
    out
}

/// Sums each 2x2 block of the upstream gradient.
pub fn upsample2_backward<T: Real>(grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    check_even("upsample2_backward", grad_out.dims())?;
    let (n, c, h, w) = grad_out.dims();
    let (oh, ow) = (h / 2, w / 2);
    let src = grad_out.data();
    let mut gin = Tensor4::zeros((n, c, oh, ow));
    let mut j = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let p = base + 2 * oy * w + 2 * ox;
                gin.data_mut()[j] = src[p] + src[p + 1] + src[p + w] + src[p + w + 1];
                j += 1;
            }
        }
    }
    Ok(gin)
}

/// Channel concatenation: all channels of `a`, then all channels of `b`.
pub fn concat_c<T: Real>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let (n, ca, h, w) = a.dims();
    let (nb, cb, hb, wb) = b.dims();
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::dim(format!(
            "concat_c: {:?} and {:?} differ in batch or spatial dims",
            a.dims(),
            b.dims()
        )));
    }
    let per_a = ca * h * w;
    let per_b = cb * h * w;
    let mut data = Vec::with_capacity(n * (per_a + per_b));
    for i in 0..n {
        data.extend_from_slice(&a.data()[i * per_a..(i + 1) * per_a]);
        data.extend_from_slice(&b.data()[i * per_b..(i + 1) * per_b]);
    }
    Tensor4::from_vec((n, ca + cb, h, w), data)
}

/// Inverse of [`concat_c`]: the first `ca` channels and the rest.
pub fn split_c<T: Real>(x: &Tensor4<T>, ca: usize) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let (n, c, h, w) = x.dims();
    if ca == 0 || ca >= c {
        return Err(Error::dim(format!(
            "split_c: cannot split {c} channels at {ca}"
        )));
    }
    let cb = c - ca;
    let hw = h * w;
    let mut a = Vec::with_capacity(n * ca * hw);
    let mut b = Vec::with_capacity(n * cb * hw);
    for i in 0..n {
        let s = &x.data()[i * c * hw..(i + 1) * c * hw];
        a.extend_from_slice(&s[..ca * hw]);
        b.extend_from_slice(&s[ca * hw..]);
    }
    Ok((
        Tensor4::from_vec((n, ca, h, w), a)?,
        Tensor4::from_vec((n, cb, h, w), b)?,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[inline]
fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn activation<T: Real>(x: &Tensor4<T>, kind: Activation) -> Tensor4<T> {
    match kind {
        Activation::Relu => x.map(|v| v.max(T::zero())),
        Activation::Sigmoid => x.map(sigmoid),
    }
}

/// `x` is the activation input and `y` its output.
pub fn activation_backward<T: Real>(
    kind: Activation,
    x: &Tensor4<T>,
    y: &Tensor4<T>,
    grad_out: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    if x.dims() != grad_out.dims() || y.dims() != grad_out.dims() {
        return Err(Error::dim(format!(
            "activation_backward: input {:?}, output {:?}, grad {:?}",
            x.dims(),
            y.dims(),
            grad_out.dims()
        )));
    }
    let mut g = grad_out.clone();
    match kind {
        Activation::Relu => {
            for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
                if xv <= T::zero() {
                    *gv = T::zero();
                }
            }
        }
        Activation::Sigmoid => {
            for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                *gv *= yv * (T::one() - yv);
            }
        }
    }
    Ok(g)
}

/// Mean binary cross-entropy with predictions clamped to `[eps, 1 - eps]`.
pub fn bce_loss<T: Real>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<T> {
    if pred.dims() != target.dims() {
        return Err(Error::dim(format!(
            "bce_loss: pred {:?} vs target {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    let eps = T::of(BCE_EPS);
    let hi = T::one() - eps;
    let mut sum = T::zero();
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let p = p.max(eps).min(hi);
        sum -= t * p.ln() + (T::one() - t) * (T::one() - p).ln();
    }
    Ok(sum / T::of(pred.len() as f64))
}

/// Gradient of [`bce_loss`] with respect to `pred`; zero where the clamp is
/// active.
pub fn bce_loss_backward<T: Real>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<Tensor4<T>> {
    if pred.dims() != target.dims() {
        return Err(Error::dim(format!(
            "bce_loss_backward: pred {:?} vs target {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    let eps = T::of(BCE_EPS);
    let hi = T::one() - eps;
    let inv_n = T::one() / T::of(pred.len() as f64);
    let mut g = Tensor4::zeros(pred.dims());
    for ((gv, &p), &t) in g.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        if p >= eps && p <= hi {
            *gv = (-t / p + (T::one() - t) / (T::one() - p)) * inv_n;
        }
    }
    Ok(g)
}

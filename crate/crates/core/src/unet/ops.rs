//! Network layers with hand-written reverse-mode derivatives.
//!
//! Every layer is a forward function plus a backward function that takes
//! the gradient of the loss with respect to the layer output and returns
//! (and/or accumulates) the gradients with respect to its inputs and
//! parameters.

use super::real::{gemm, Operand, Real};
use crate::error::{Error, Result};
use crate::imageops::{linear_taps, ImageTensor, LinearTap};

/// Channels-first activation tensor for a single image.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            h,
            w,
            data: vec![T::zero(); c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(Error::Shape(format!(
                "{} values cannot form a {c}x{h}x{w} tensor",
                data.len()
            )));
        }
        Ok(Tensor { c, h, w, data })
    }

    pub fn from_image(img: &ImageTensor) -> Self {
        Tensor {
            c: img.channels(),
            h: img.height(),
            w: img.width(),
            data: img.data().iter().map(|&v| T::from_f64_lossy(v as f64)).collect(),
        }
    }

    pub fn to_image(&self) -> ImageTensor {
        let data = self.data.iter().map(|v| v.as_f64() as f32).collect();
        ImageTensor::from_vec(self.c, self.h, self.w, data).expect("tensor shape is consistent")
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.c, self.h, self.w]
    }

    pub fn plane(&self, c: usize) -> &[T] {
        &self.data[c * self.hw()..(c + 1) * self.hw()]
    }
}

/// A named-parameter buffer with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> ParamTensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "{} values cannot form shape {shape:?}",
                data.len()
            )));
        }
        Ok(ParamTensor { shape, data })
    }

    pub fn filled(shape: Vec<usize>, v: T) -> Self {
        let n = shape.iter().product();
        ParamTensor {
            shape,
            data: vec![v; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Convolution

/// Upper bound on the im2col scratch buffer, in elements.
const BAND_ELEMS: usize = 1 << 20;

fn band_rows(cols_per_row: usize, h: usize) -> usize {
    (BAND_ELEMS / cols_per_row.max(1)).clamp(1, h)
}

/// Gathers the zero-padded 3x3 neighbourhoods of rows `r0..r1`; row
/// `ci * 9 + ky * 3 + kx` of the result holds tap `(ky, kx)` of channel `ci`.
fn im2col<T: Real>(x: &Tensor<T>, r0: usize, r1: usize, col: &mut Vec<T>) {
    let (w, h) = (x.w, x.h);
    let p = (r1 - r0) * w;
    col.clear();
    col.resize(x.c * 9 * p, T::zero());
    for ci in 0..x.c {
        let plane = x.plane(ci);
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 9) + ky * 3 + kx) * p..][..p];
                for y in r0..r1 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst = &mut row[(y - r0) * w..(y - r0 + 1) * w];
                    match kx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
}

/// Scatter-adds the columns produced by [`im2col`] back onto `dx`.
fn col2im_add<T: Real>(col: &[T], r0: usize, r1: usize, dx: &mut Tensor<T>) {
    let (w, h) = (dx.w, dx.h);
    let p = (r1 - r0) * w;
    let hw = dx.hw();
    for ci in 0..dx.c {
        let plane = &mut dx.data[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 9) + ky * 3 + kx) * p..][..p];
                for y in r0..r1 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[(y - r0) * w..(y - r0 + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let (d, s) = match kx {
                        0 => (&mut dst[..w - 1], &src[1..]),
                        1 => (&mut dst[..], src),
                        _ => (&mut dst[1..], &src[..w - 1]),
                    };
                    for (a, &b) in d.iter_mut().zip(s) {
                        *a += b;
                    }
                }
            }
        }
    }
}

fn check_conv(x: &Tensor<impl Real>, weight: &ParamTensor<impl Real>, bias: Option<usize>) -> Result<(usize, usize)> {
    let [cout, cin, kh, kw] = match weight.shape[..] {
        [a, b, c, d] => [a, b, c, d],
        _ => {
            return Err(Error::Shape(format!(
                "convolution weight must be 4-D, got shape {:?}",
                weight.shape
            )))
        }
    };
    if kh != kw || !(kh == 1 || kh == 3) {
        return Err(Error::Shape(format!(
            "kernel size must be 1x1 or 3x3, got {kh}x{kw}"
        )));
    }
    if cin != x.c {
        return Err(Error::Shape(format!(
            "input channels: weight expects {cin}, input has {}",
            x.c
        )));
    }
    if let Some(b) = bias {
        if b != cout {
            return Err(Error::Shape(format!(
                "output channels: weight has {cout}, bias has {b}"
            )));
        }
    }
    Ok((cout, kh))
}

/// Stride-1 cross-correlation with zero padding that keeps the spatial
/// size (3x3 kernels pad by one, 1x1 kernels do not pad).
pub fn conv2d_same<T: Real>(x: &Tensor<T>, weight: &ParamTensor<T>, bias: Option<&ParamTensor<T>>) -> Result<Tensor<T>> {
    let (cout, k) = check_conv(x, weight, bias.map(|b| b.len()))?;
    Ok(conv_forward(x, &weight.data, cout, k, bias.map(|b| &b.data[..])))
}

pub(crate) fn conv_forward<T: Real>(x: &Tensor<T>, weight: &[T], cout: usize, k: usize, bias: Option<&[T]>) -> Tensor<T> {
    let hw = x.hw();
    let mut out = Tensor::zeros(cout, x.h, x.w);
    if k == 1 {
        gemm(cout, x.c, hw, T::one(), Operand::new(weight, x.c), Operand::new(&x.data, hw), T::zero(), &mut out.data, hw);
    } else {
        let kdim = x.c * 9;
        let rows = band_rows(kdim * x.w, x.h);
        let mut col = Vec::new();
        let mut r0 = 0;
        while r0 < x.h {
            let r1 = (r0 + rows).min(x.h);
            let p = (r1 - r0) * x.w;
            im2col(x, r0, r1, &mut col);
            gemm(cout, kdim, p, T::one(), Operand::new(weight, kdim), Operand::new(&col, p), T::zero(), &mut out.data[r0 * x.w..], hw);
            r0 = r1;
        }
    }
    if let Some(b) = bias {
        for (co, &bv) in b.iter().enumerate() {
            for v in &mut out.data[co * hw..(co + 1) * hw] {
                *v += bv;
            }
        }
    }
    out
}

/// Accumulates weight (and bias) gradients into `dw` / `db` and returns the
/// input gradient when `need_dx` is set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    cout: usize,
    k: usize,
    dy: &Tensor<T>,
    dw: &mut [T],
    db: Option<&mut [T]>,
    need_dx: bool,
) -> Option<Tensor<T>> {
    let hw = x.hw();
    if let Some(db) = db {
        for (co, g) in db.iter_mut().enumerate() {
            *g += dy.data[co * hw..(co + 1) * hw].iter().copied().sum::<T>();
        }
    }
    if k == 1 {
        gemm(cout, hw, x.c, T::one(), Operand::new(&dy.data, hw), Operand::t(&x.data, hw), T::one(), dw, x.c);
        return need_dx.then(|| {
            let mut dx = Tensor::zeros(x.c, x.h, x.w);
            gemm(x.c, cout, hw, T::one(), Operand::t(weight, x.c), Operand::new(&dy.data, hw), T::zero(), &mut dx.data, hw);
            dx
        });
    }
    let kdim = x.c * 9;
    let rows = band_rows(kdim * x.w, x.h);
    let mut col = Vec::new();
    let mut dcol = Vec::new();
    let mut dx = need_dx.then(|| Tensor::zeros(x.c, x.h, x.w));
    let mut r0 = 0;
    while r0 < x.h {
        let r1 = (r0 + rows).min(x.h);
        let p = (r1 - r0) * x.w;
        let dy_band = &dy.data[r0 * x.w..];
        im2col(x, r0, r1, &mut col);
        gemm(cout, p, kdim, T::one(), Operand::new(dy_band, hw), Operand::t(&col, p), T::one(), dw, kdim);
        if let Some(dx) = dx.as_mut() {
            dcol.clear();
            dcol.resize(kdim * p, T::zero());
            gemm(kdim, cout, p, T::one(), Operand::t(weight, kdim), Operand::new(dy_band, hw), T::zero(), &mut dcol, p);
            col2im_add(&dcol, r0, r1, dx);
        }
        r0 = r1;
    }
    dx
}

// ---------------------------------------------------------------------------
// Instance normalization

pub(crate) struct NormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

/// Per-channel standardization over the spatial extent of one instance,
/// followed by the affine map `gamma * xhat + beta`. Uses the population
/// variance.
pub fn instance_norm2d<T: Real>(x: &Tensor<T>, gamma: &[T], beta: &[T], eps: f64) -> Result<Tensor<T>> {
    if gamma.len() != x.c || beta.len() != x.c {
        return Err(Error::Shape(format!(
            "channels: input has {}, gamma has {}, beta has {}",
            x.c,
            gamma.len(),
            beta.len()
        )));
    }
    if x.hw() == 0 {
        return Err(Error::Shape("instance norm needs at least one pixel".into()));
    }
    Ok(norm_forward(x, gamma, beta, eps).0)
}

pub(crate) fn norm_forward<T: Real>(x: &Tensor<T>, gamma: &[T], beta: &[T], eps: f64) -> (Tensor<T>, NormCache<T>) {
    let hw = x.hw();
    let n = hw as f64;
    let mut out = Tensor::zeros(x.c, x.h, x.w);
    let mut xhat = vec![T::zero(); x.data.len()];
    let mut inv_std = Vec::with_capacity(x.c);
    for c in 0..x.c {
        let src = x.plane(c);
        let mean = src.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let var = src.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
        let istd = 1.0 / (var + eps).sqrt();
        let (m, s) = (T::from_f64_lossy(mean), T::from_f64_lossy(istd));
        let (g, b) = (gamma[c], beta[c]);
        let xh = &mut xhat[c * hw..(c + 1) * hw];
        let dst = &mut out.data[c * hw..(c + 1) * hw];
        for i in 0..hw {
            let v = (src[i] - m) * s;
            xh[i] = v;
            dst[i] = g * v + b;
        }
        inv_std.push(s);
    }
    (out, NormCache { xhat, inv_std })
}

/// Given `dy` (gradient w.r.t. the affine output), accumulates `dgamma` /
/// `dbeta` and returns the gradient w.r.t. the normalized input.
pub(crate) fn norm_backward<T: Real>(cache: &NormCache<T>, gamma: &[T], dy: &Tensor<T>, dgamma: &mut [T], dbeta: &mut [T]) -> Tensor<T> {
    let hw = dy.hw();
    let n = T::from_usize(hw).expect("pixel count");
    let mut dx = Tensor::zeros(dy.c, dy.h, dy.w);
    for c in 0..dy.c {
        let g = &dy.data[c * hw..(c + 1) * hw];
        let xh = &cache.xhat[c * hw..(c + 1) * hw];
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for i in 0..hw {
            sum_g += g[i];
            sum_gx += g[i] * xh[i];
        }
        dgamma[c] += sum_gx;
        dbeta[c] += sum_g;
        // d/dx of gamma * xhat: gamma * inv_std / n * (n g - sum g - xhat sum g xhat)
        let scale = gamma[c] * cache.inv_std[c] / n;
        let dst = &mut dx.data[c * hw..(c + 1) * hw];
        for i in 0..hw {
            dst[i] = scale * (n * g[i] - sum_g - xh[i] * sum_gx);
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// Pointwise, pooling, resampling

pub(crate) fn relu_in_place<T: Real>(x: &mut Tensor<T>) {
    for v in &mut x.data {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Logistic function clamped to the open unit interval, so outputs never
/// round to exactly 0 or 1.
pub(crate) fn sigmoid_in_place<T: Real>(x: &mut Tensor<T>) {
    let lo = T::min_positive_value();
    let hi = T::one() - T::epsilon() / (T::one() + T::one());
    for v in &mut x.data {
        let s = T::one() / (T::one() + (-*v).exp());
        // Comparisons rather than max/min so NaN propagates.
        *v = if s < lo {
            lo
        } else if s > hi {
            hi
        } else {
            s
        };
    }
}

/// 2x2 max pooling with stride 2. Returns the pooled tensor and the flat
/// input index of each selected maximum.
pub(crate) fn maxpool2<T: Real>(x: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut out = Tensor::zeros(x.c, oh, ow);
    let mut arg = vec![0u32; x.c * oh * ow];
    for c in 0..x.c {
        let base = c * x.hw();
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * x.w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * x.w + 2 * ox + dx;
                    if x.data[i] > x.data[best] {
                        best = i;
                    }
                }
                let o = (c * oh + oy) * ow + ox;
                out.data[o] = x.data[best];
                arg[o] = best as u32;
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool2_backward<T: Real>(dy: &Tensor<T>, arg: &[u32], dx: &mut Tensor<T>) {
    for (g, &i) in dy.data.iter().zip(arg) {
        dx.data[i as usize] += *g;
    }
}

fn taps<T: Real>(in_len: usize, out_len: usize) -> Vec<(usize, usize, T, T)> {
    linear_taps(in_len, out_len)
        .into_iter()
        .map(|LinearTap { i0, i1, w0, w1 }| (i0, i1, T::from_f64_lossy(w0), T::from_f64_lossy(w1)))
        .collect()
}

/// Bilinear 2x upsampling with half-pixel centers.
pub(crate) fn upsample2<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (oh, ow) = (2 * x.h, 2 * x.w);
    let rows = taps::<T>(x.h, oh);
    let cols = taps::<T>(x.w, ow);
    let mut out = Tensor::zeros(x.c, oh, ow);
    let mut tmp = vec![T::zero(); x.h * ow];
    for c in 0..x.c {
        let src = x.plane(c);
        for y in 0..x.h {
            for (ox, &(i0, i1, w0, w1)) in cols.iter().enumerate() {
                tmp[y * ow + ox] = w0 * src[y * x.w + i0] + w1 * src[y * x.w + i1];
            }
        }
        let dst = &mut out.data[c * oh * ow..(c + 1) * oh * ow];
        for (oy, &(i0, i1, w0, w1)) in rows.iter().enumerate() {
            for ox in 0..ow {
                dst[oy * ow + ox] = w0 * tmp[i0 * ow + ox] + w1 * tmp[i1 * ow + ox];
            }
        }
    }
    out
}

/// Adjoint of [`upsample2`].
pub(crate) fn upsample2_backward<T: Real>(dy: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let (oh, ow) = (dy.h, dy.w);
    let rows = taps::<T>(h, oh);
    let cols = taps::<T>(w, ow);
    let mut dx = Tensor::zeros(dy.c, h, w);
    let mut tmp = vec![T::zero(); h * ow];
    for c in 0..dy.c {
        tmp.iter_mut().for_each(|v| *v = T::zero());
        let g = dy.plane(c);
        for (oy, &(i0, i1, w0, w1)) in rows.iter().enumerate() {
            for ox in 0..ow {
                let v = g[oy * ow + ox];
                tmp[i0 * ow + ox] += w0 * v;
                tmp[i1 * ow + ox] += w1 * v;
            }
        }
        let dst = &mut dx.data[c * h * w..(c + 1) * h * w];
        for y in 0..h {
            for (ox, &(i0, i1, w0, w1)) in cols.iter().enumerate() {
                let v = tmp[y * ow + ox];
                dst[y * w + i0] += w0 * v;
                dst[y * w + i1] += w1 * v;
            }
        }
    }
    dx
}

pub(crate) fn concat<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!((a.h, a.w), (b.h, b.w));
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Tensor {
        c: a.c + b.c,
        h: a.h,
        w: a.w,
        data,
    }
}

/// Splits a channel-concatenated gradient into its two parts.
pub(crate) fn split_channels<T: Real>(g: Tensor<T>, first: usize) -> (Tensor<T>, Tensor<T>) {
    let cut = first * g.hw();
    let mut data = g.data;
    let rest = data.split_off(cut);
    (
        Tensor {
            c: first,
            h: g.h,
            w: g.w,
            data,
        },
        Tensor {
            c: g.c - first,
            h: g.h,
            w: g.w,
            data: rest,
        },
    )
}

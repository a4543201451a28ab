//! Image buffers and the corruption / resampling operators used around the
//! network: additive noise, separable Gaussian blur, bilinear resizing and
//! reflect padding.
//!
//! All operators take their input by reference and return a new buffer.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channels-first `f32` image, row-major within each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

/// Spatial size of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub fn new(height: usize, width: usize) -> Self {
        Dims { height, width }
    }
}

impl ImageTensor {
    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        ImageTensor {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    /// Image whose channel `c` is the constant `color[c]`.
    pub fn solid(color: &[f32], height: usize, width: usize) -> Self {
        let plane = height * width;
        let mut data = Vec::with_capacity(color.len() * plane);
        for &v in color {
            data.extend(std::iter::repeat_n(v, plane));
        }
        ImageTensor {
            channels: color.len(),
            height,
            width,
            data,
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "buffer of {} values cannot hold {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(ImageTensor {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn clamp01(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Flattens an RGBA image onto a white backdrop; other channel counts
    /// are returned unchanged.
    pub fn composite_over_white(&self) -> ImageTensor {
        if self.channels != 4 {
            return self.clone();
        }
        let n = self.height * self.width;
        let alpha = self.plane(3);
        let mut out = ImageTensor::zeros(3, self.height, self.width);
        for c in 0..3 {
            let src = self.plane(c);
            let dst = out.plane_mut(c);
            for i in 0..n {
                let a = alpha[i];
                dst[i] = a * src[i] + (1.0 - a);
            }
        }
        out
    }
}

/// Distribution family of the additive corruption noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Gaussian,
    Uniform,
}

/// Additive noise with magnitude given on the 0..255 intensity scale.
///
/// `sigma_8bit` is the standard deviation for Gaussian noise and the
/// half-range for uniform noise. It is divided by 255 before use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    #[serde(default)]
    pub sigma_8bit: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        kind: NoiseKind::None,
        sigma_8bit: 0.0,
    };

    pub fn gaussian(sigma_8bit: f64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Gaussian,
            sigma_8bit,
        }
    }

    pub fn uniform(half_range_8bit: f64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Uniform,
            sigma_8bit: half_range_8bit,
        }
    }

    /// Magnitude on the unit intensity scale.
    pub fn scale(&self) -> f64 {
        self.sigma_8bit / 255.0
    }

    pub fn is_none(&self) -> bool {
        self.kind == NoiseKind::None
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_8bit >= 0.0 && self.sigma_8bit.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "noise sigma_8bit must be a finite value >= 0, got {}",
                self.sigma_8bit
            )));
        }
        Ok(())
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::NONE
    }
}

/// Draws `len` raw (unclamped) noise values, one per element in buffer
/// order. Returns an empty vector for `NoiseKind::None`.
pub fn sample_noise<R: Rng + ?Sized>(spec: &NoiseSpec, len: usize, rng: &mut R) -> Vec<f32> {
    let scale = spec.scale();
    match spec.kind {
        NoiseKind::None => Vec::new(),
        NoiseKind::Gaussian => (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                (z * scale) as f32
            })
            .collect(),
        NoiseKind::Uniform => (0..len)
            .map(|_| {
                let u: f64 = rng.random();
                ((2.0 * u - 1.0) * scale) as f32
            })
            .collect(),
    }
}

/// Adds independent noise to every value and clamps the result to [0,1].
pub fn add_noise<R: Rng + ?Sized>(img: &ImageTensor, spec: &NoiseSpec, rng: &mut R) -> ImageTensor {
    if spec.is_none() {
        return img.clone();
    }
    let noise = sample_noise(spec, img.data.len(), rng);
    let mut out = img.clone();
    for (v, n) in out.data.iter_mut().zip(noise) {
        *v = (*v + n).clamp(0.0, 1.0);
    }
    out
}

/// Index into `0..n` after mirroring about the edges without repeating the
/// edge sample (`-1 -> 1`, `n -> n - 2`).
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Normalized 1-D Gaussian taps for a blur of the given radius.
///
/// The standard deviation is `radius / 2` and the kernel extends
/// `ceil(3 * sigma)` taps on either side of the center.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    radius: f64,
    weights: Vec<f32>,
}

impl BlurKernel {
    pub fn gaussian(radius: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "blur radius must be finite and >= 0, got {radius}"
            )));
        }
        if radius == 0.0 {
            return Ok(BlurKernel {
                radius,
                weights: vec![1.0],
            });
        }
        let sigma = radius / 2.0;
        let half = (3.0 * sigma).ceil() as isize;
        let raw: Vec<f64> = (-half..=half)
            .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        Ok(BlurKernel {
            radius,
            weights: raw.iter().map(|w| (w / total) as f32).collect(),
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn half_width(&self) -> usize {
        self.weights.len() / 2
    }
}

/// Separable Gaussian blur with reflect borders, applied to every channel.
/// A zero radius returns an exact copy.
pub fn gaussian_blur(img: &ImageTensor, radius: f64) -> Result<ImageTensor> {
    let kernel = BlurKernel::gaussian(radius)?;
    if radius == 0.0 {
        return Ok(img.clone());
    }
    Ok(convolve_separable(img, &kernel))
}

fn convolve_separable(img: &ImageTensor, kernel: &BlurKernel) -> ImageTensor {
    let (h, w) = (img.height, img.width);
    let taps = kernel.weights();
    let half = kernel.half_width() as isize;
    let mut out = ImageTensor::zeros(img.channels, h, w);
    let mut tmp = vec![0f32; h * w];
    let mut column = vec![0f32; h];
    for c in 0..img.channels {
        let src = img.plane(c);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for x in 0..w {
                let mut acc = 0f32;
                for (k, &t) in taps.iter().enumerate() {
                    acc += t * row[reflect_index(x as isize + k as isize - half, w)];
                }
                tmp[y * w + x] = acc;
            }
        }
        let dst = out.plane_mut(c);
        for x in 0..w {
            for (y, v) in column.iter_mut().enumerate() {
                *v = tmp[y * w + x];
            }
            for y in 0..h {
                let mut acc = 0f32;
                for (k, &t) in taps.iter().enumerate() {
                    acc += t * column[reflect_index(y as isize + k as isize - half, h)];
                }
                dst[y * w + x] = acc;
            }
        }
    }
    out
}

/// One output sample of a 1-D linear interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LinearTap {
    pub i0: usize,
    pub i1: usize,
    pub w0: f64,
    pub w1: f64,
}

/// Half-pixel-center linear interpolation taps mapping `in_len` samples to
/// `out_len` samples. Source coordinates are clamped to the valid range.
pub(crate) fn linear_taps(in_len: usize, out_len: usize) -> Vec<LinearTap> {
    let scale = in_len as f64 / out_len as f64;
    let last = (in_len - 1) as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            let w1 = src - i0 as f64;
            LinearTap {
                i0,
                i1,
                w0: 1.0 - w1,
                w1,
            }
        })
        .collect()
}

/// Bilinear resampling to an explicit output size.
pub fn resize_to(img: &ImageTensor, dims: Dims) -> Result<ImageTensor> {
    if dims.height == 0 || dims.width == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target {}x{} is degenerate",
            dims.height, dims.width
        )));
    }
    if img.height == 0 || img.width == 0 {
        return Err(Error::InvalidArgument("cannot resize an empty image".into()));
    }
    if dims == img.dims() {
        return Ok(img.clone());
    }
    let rows = linear_taps(img.height, dims.height);
    let cols = linear_taps(img.width, dims.width);
    let mut out = ImageTensor::zeros(img.channels, dims.height, dims.width);
    for c in 0..img.channels {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for (oy, ty) in rows.iter().enumerate() {
            let r0 = &src[ty.i0 * img.width..(ty.i0 + 1) * img.width];
            let r1 = &src[ty.i1 * img.width..(ty.i1 + 1) * img.width];
            for (ox, tx) in cols.iter().enumerate() {
                let top = tx.w0 * r0[tx.i0] as f64 + tx.w1 * r0[tx.i1] as f64;
                let bottom = tx.w0 * r1[tx.i0] as f64 + tx.w1 * r1[tx.i1] as f64;
                dst[oy * dims.width + ox] = (ty.w0 * top + ty.w1 * bottom) as f32;
            }
        }
    }
    Ok(out)
}

/// Bilinear resampling by `factor`; output dims are `round(dim * factor)`.
pub fn resize(img: &ImageTensor, factor: f64) -> Result<ImageTensor> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "resize factor must be finite and > 0, got {factor}"
        )));
    }
    if factor == 1.0 {
        return Ok(img.clone());
    }
    resize_to(img, scaled_dims(img.dims(), factor)?)
}

pub fn scaled_dims(dims: Dims, factor: f64) -> Result<Dims> {
    let h = (dims.height as f64 * factor).round();
    let w = (dims.width as f64 * factor).round();
    if h < 1.0 || w < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "scaling {}x{} by {factor} gives a degenerate {h}x{w} image",
            dims.height, dims.width
        )));
    }
    Ok(Dims::new(h as usize, w as usize))
}

/// Reflect-pads the bottom and right edges so both dimensions become
/// multiples of `m`. Returns the padded image and the original size.
pub fn pad_to_multiple(img: &ImageTensor, m: usize) -> Result<(ImageTensor, Dims)> {
    if m == 0 {
        return Err(Error::InvalidArgument("padding multiple must be >= 1".into()));
    }
    if img.height == 0 || img.width == 0 {
        return Err(Error::InvalidArgument("cannot pad an empty image".into()));
    }
    let orig = img.dims();
    let h = orig.height.div_ceil(m) * m;
    let w = orig.width.div_ceil(m) * m;
    if (h, w) == (orig.height, orig.width) {
        return Ok((img.clone(), orig));
    }
    let mut out = ImageTensor::zeros(img.channels, h, w);
    for c in 0..img.channels {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            let sy = reflect_index(y as isize, orig.height);
            for x in 0..w {
                let sx = reflect_index(x as isize, orig.width);
                dst[y * w + x] = src[sy * orig.width + sx];
            }
        }
    }
    Ok((out, orig))
}

/// Top-left crop.
pub fn crop(img: &ImageTensor, dims: Dims) -> Result<ImageTensor> {
    if dims.height > img.height || dims.width > img.width {
        return Err(Error::InvalidArgument(format!(
            "crop {}x{} exceeds image {}x{}",
            dims.height, dims.width, img.height, img.width
        )));
    }
    if dims == img.dims() {
        return Ok(img.clone());
    }
    let mut data = Vec::with_capacity(img.channels * dims.height * dims.width);
    for c in 0..img.channels {
        let src = img.plane(c);
        for y in 0..dims.height {
            data.extend_from_slice(&src[y * img.width..y * img.width + dims.width]);
        }
    }
    ImageTensor::from_vec(img.channels, dims.height, dims.width, data)
}

/// Mean absolute 4-neighbour Laplacian over interior pixels, averaged over
/// channels. Larger values mean denser edges.
pub fn edge_density(img: &ImageTensor) -> f64 {
    let (h, w) = (img.height, img.width);
    if h < 3 || w < 3 {
        return 0.0;
    }
    let mut total = 0f64;
    for c in 0..img.channels {
        let p = img.plane(c);
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let i = y * w + x;
                let lap = p[i - 1] + p[i + 1] + p[i - w] + p[i + w] - 4.0 * p[i];
                total += lap.abs() as f64;
            }
        }
    }
    total / (img.channels * (h - 2) * (w - 2)) as f64
}

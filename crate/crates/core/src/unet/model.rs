use indexmap::IndexMap;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::loss::LossRecord;
use super::ops::{
    concat, conv_backward, conv_forward, maxpool2, maxpool2_backward, norm_backward, norm_forward, relu_in_place,
    sigmoid_in_place, split_channels, upsample2, upsample2_backward, NormCache, ParamTensor, Tensor,
};
use super::real::Real;
use crate::error::{Error, Result};
use crate::imageops::ImageTensor;
use crate::rng::{self, Domain};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Number of 2x2 pooling stages.
    pub depth: usize,
    /// Channels of the first stage; doubled at every stage below it.
    pub base_channels: usize,
    pub norm_epsilon: f64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            in_channels: 3,
            out_channels: 3,
            depth: 4,
            base_channels: 64,
            norm_epsilon: 1e-5,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 16 {
            return Err(Error::InvalidArgument(format!("depth must be in 1..=16, got {}", self.depth)));
        }
        if self.base_channels == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidArgument("channel counts must be >= 1".into()));
        }
        if !(self.norm_epsilon > 0.0 && self.norm_epsilon.is_finite()) {
            return Err(Error::InvalidArgument("norm_epsilon must be > 0".into()));
        }
        Ok(())
    }

    /// Spatial dimensions must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }

    /// Channels at stage `level` (`level == depth` is the bottleneck).
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        param_specs(self).iter().map(|(_, shape)| shape.iter().product::<usize>()).sum()
    }
}

/// Parameter names and shapes in their canonical order:
///
/// ```text
/// enc{k}.conv1.weight  enc{k}.norm1.{gamma,beta}  enc{k}.conv2.weight  enc{k}.norm2.{gamma,beta}   k = 0..depth
/// bottleneck.conv1.weight ... bottleneck.norm2.beta
/// dec{k}.up.{weight,bias}  dec{k}.conv1.weight ... dec{k}.norm2.beta                             k = depth-1..=0
/// head.weight  head.bias
/// ```
///
/// Convolutions followed by instance norm carry no bias (the norm shift
/// replaces it).
pub fn param_specs(config: &UNetConfig) -> Vec<(String, Vec<usize>)> {
    let mut specs = Vec::new();
    let double = |prefix: &str, cin: usize, cout: usize, specs: &mut Vec<(String, Vec<usize>)>| {
        specs.push((format!("{prefix}.conv1.weight"), vec![cout, cin, 3, 3]));
        specs.push((format!("{prefix}.norm1.gamma"), vec![cout]));
        specs.push((format!("{prefix}.norm1.beta"), vec![cout]));
        specs.push((format!("{prefix}.conv2.weight"), vec![cout, cout, 3, 3]));
        specs.push((format!("{prefix}.norm2.gamma"), vec![cout]));
        specs.push((format!("{prefix}.norm2.beta"), vec![cout]));
    };
    let c = |l| config.channels(l);
    for k in 0..config.depth {
        let cin = if k == 0 { config.in_channels } else { c(k - 1) };
        double(&format!("enc{k}"), cin, c(k), &mut specs);
    }
    double("bottleneck", c(config.depth - 1), c(config.depth), &mut specs);
    for k in (0..config.depth).rev() {
        specs.push((format!("dec{k}.up.weight"), vec![c(k), c(k + 1), 3, 3]));
        specs.push((format!("dec{k}.up.bias"), vec![c(k)]));
        double(&format!("dec{k}"), 2 * c(k), c(k), &mut specs);
    }
    specs.push(("head.weight".into(), vec![config.out_channels, c(0), 1, 1]));
    specs.push(("head.bias".into(), vec![config.out_channels]));
    specs
}

#[derive(Debug, Clone, Copy)]
struct DoubleConv {
    conv: [usize; 2],
    gamma: [usize; 2],
    beta: [usize; 2],
}

#[derive(Debug, Clone, Copy)]
struct UpStage {
    weight: usize,
    bias: usize,
    block: DoubleConv,
}

/// Parameter indices for each layer, derived from the config.
#[derive(Debug, Clone)]
struct Layout {
    enc: Vec<DoubleConv>,
    bottleneck: DoubleConv,
    /// Indexed by level, `dec[k]` pairs with `enc[k]`.
    dec: Vec<UpStage>,
    head: (usize, usize),
}

impl Layout {
    fn new<T>(params: &IndexMap<String, ParamTensor<T>>, config: &UNetConfig) -> Self {
        let idx = |name: String| {
            params
                .get_index_of(&name)
                .unwrap_or_else(|| panic!("missing parameter {name}"))
        };
        let double = |prefix: &str| DoubleConv {
            conv: [idx(format!("{prefix}.conv1.weight")), idx(format!("{prefix}.conv2.weight"))],
            gamma: [idx(format!("{prefix}.norm1.gamma")), idx(format!("{prefix}.norm2.gamma"))],
            beta: [idx(format!("{prefix}.norm1.beta")), idx(format!("{prefix}.norm2.beta"))],
        };
        Layout {
            enc: (0..config.depth).map(|k| double(&format!("enc{k}"))).collect(),
            bottleneck: double("bottleneck"),
            dec: (0..config.depth)
                .map(|k| UpStage {
                    weight: idx(format!("dec{k}.up.weight")),
                    bias: idx(format!("dec{k}.up.bias")),
                    block: double(&format!("dec{k}")),
                })
                .collect(),
            head: (idx("head.weight".into()), idx("head.bias".into())),
        }
    }
}

struct BlockCache<T> {
    input: Tensor<T>,
    norm: NormCache<T>,
}

struct UpCache<T> {
    low: (usize, usize),
    upsampled: Tensor<T>,
    blocks: [BlockCache<T>; 2],
}

/// Intermediate values of one image's forward pass, kept for backward.
struct ImageCache<T> {
    enc: Vec<([BlockCache<T>; 2], Vec<u32>)>,
    bottleneck: [BlockCache<T>; 2],
    /// Indexed by level, like `Layout::dec`.
    dec: Vec<UpCache<T>>,
    head_input: Tensor<T>,
    output: Tensor<T>,
}

/// Saved activations of a recorded forward pass over a batch.
struct Recording<T> {
    images: Vec<ImageCache<T>>,
}

/// Network parameters, their gradient accumulators and the optional
/// recording of the last forward pass.
pub struct ModelState<T = f32> {
    config: UNetConfig,
    params: IndexMap<String, ParamTensor<T>>,
    grads: Vec<Vec<T>>,
    layout: Layout,
    recording: Option<Recording<T>>,
}

impl<T: Real> Clone for ModelState<T> {
    fn clone(&self) -> Self {
        ModelState {
            config: self.config,
            params: self.params.clone(),
            grads: self.grads.clone(),
            layout: self.layout.clone(),
            recording: None,
        }
    }
}

impl<T: Real> std::fmt::Debug for ModelState<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelState")
            .field("config", &self.config)
            .field("parameters", &self.params.len())
            .field("recording", &self.recording.is_some())
            .finish()
    }
}

/// Builds a freshly initialized U-Net in working precision.
pub fn build_unet(config: UNetConfig, seed: u64) -> Result<ModelState<f32>> {
    ModelState::build(config, seed)
}

impl<T: Real> ModelState<T> {
    /// Convolution weights get fan-in scaled normal draws (std
    /// `sqrt(2 / fan_in)`), biases and norm shifts zero, norm scales one.
    /// Each parameter draws from its own stream keyed by its position.
    pub fn build(config: UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = IndexMap::new();
        for (i, (name, shape)) in param_specs(&config).into_iter().enumerate() {
            let tensor = if name.ends_with(".weight") {
                let fan_in: usize = shape[1..].iter().product();
                let std = (2.0 / fan_in as f64).sqrt();
                let mut rng = rng::stream(seed, Domain::Init, i as u64);
                let n: usize = shape.iter().product();
                let data = (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        // Drawn in f32 so both precisions start from the same values.
                        T::from_f64_lossy((z * std) as f32 as f64)
                    })
                    .collect();
                ParamTensor::new(shape, data)?
            } else if name.ends_with(".gamma") {
                ParamTensor::filled(shape, T::one())
            } else {
                ParamTensor::filled(shape, T::zero())
            };
            params.insert(name, tensor);
        }
        Self::from_params(config, params)
    }

    /// Assembles a model from named tensors, checking names and shapes
    /// against the architecture.
    pub fn from_params(config: UNetConfig, params: IndexMap<String, ParamTensor<T>>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != params.len() {
            return Err(Error::Shape(format!(
                "architecture has {} parameter tensors, got {}",
                specs.len(),
                params.len()
            )));
        }
        for ((name, shape), (got_name, got)) in specs.iter().zip(&params) {
            if name != got_name || *shape != got.shape {
                return Err(Error::Shape(format!(
                    "expected {name} {shape:?}, got {got_name} {:?}",
                    got.shape
                )));
            }
        }
        let layout = Layout::new(&params, &config);
        let grads = params.values().map(|p| vec![T::zero(); p.len()]).collect();
        Ok(ModelState {
            config,
            params,
            grads,
            layout,
            recording: None,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn params(&self) -> &IndexMap<String, ParamTensor<T>> {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.params.get(name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut ParamTensor<T>> {
        self.params.get_mut(name)
    }

    /// Gradient accumulators in parameter order.
    pub fn grads(&self) -> &[Vec<T>] {
        &self.grads
    }

    pub fn grad(&self, name: &str) -> Option<&[T]> {
        self.params.get_index_of(name).map(|i| &self.grads[i][..])
    }

    /// Direct access to one accumulator, for gradients from outside
    /// [`ModelState::backward`].
    pub fn grad_mut(&mut self, name: &str) -> Option<&mut [T]> {
        self.params.get_index_of(name).map(|i| &mut self.grads[i][..])
    }

    /// Parameter values and gradients together, for optimizers.
    pub fn params_and_grads_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamTensor<T>, &[T])> {
        self.params
            .iter_mut()
            .zip(&self.grads)
            .map(|((name, p), g)| (name.as_str(), p, &g[..]))
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(|p| p.len()).sum()
    }

    /// Converts every parameter to another precision.
    pub fn cast<U: Real>(&self) -> ModelState<U> {
        let params = self
            .params
            .iter()
            .map(|(k, p)| {
                let data = p.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect();
                (k.clone(), ParamTensor { shape: p.shape.clone(), data })
            })
            .collect();
        ModelState::from_params(self.config, params).expect("same architecture")
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "input channels: model expects {}, got {}",
                self.config.in_channels, x.c
            )));
        }
        let m = self.config.size_multiple();
        if x.h == 0 || x.w == 0 || !x.h.is_multiple_of(m) || !x.w.is_multiple_of(m) {
            return Err(Error::IndivisibleDims {
                height: x.h,
                width: x.w,
                multiple: m,
            });
        }
        Ok(())
    }

    /// Runs the network on one image without recording.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        Ok(self.net().forward(x, false).0)
    }

    /// Runs the network on an [`ImageTensor`] (values converted to `T`).
    pub fn forward_image(&self, x: &ImageTensor) -> Result<ImageTensor> {
        Ok(self.forward(&Tensor::from_image(x))?.to_image())
    }

    /// Runs the network on a batch, recording activations for
    /// [`backward`](Self::backward). Replaces any earlier recording.
    pub fn forward_recorded(&mut self, batch: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        self.recording = None;
        for x in batch {
            self.check_input(x)?;
        }
        let net = self.net();
        let mut outputs = Vec::with_capacity(batch.len());
        let mut images = Vec::with_capacity(batch.len());
        for x in batch {
            let (y, cache) = net.forward(x, true);
            outputs.push(y);
            images.push(cache.expect("recording requested"));
        }
        self.recording = Some(Recording { images });
        Ok(outputs)
    }

    /// Back-propagates `loss` through the recorded forward pass and adds the
    /// parameter gradients to the accumulators. Consumes the recording.
    pub fn backward(&mut self, loss: &LossRecord<T>) -> Result<()> {
        let recording = self.recording.take().ok_or(Error::NoRecording)?;
        let grads_out = loss.output_grads();
        if grads_out.len() != recording.images.len() {
            return Err(Error::Shape(format!(
                "loss covers {} images, recording has {}",
                grads_out.len(),
                recording.images.len()
            )));
        }
        for (cache, g) in recording.images.iter().zip(grads_out) {
            if g.shape() != cache.output.shape() {
                return Err(Error::Shape(format!(
                    "loss gradient {:?} does not match output {:?}",
                    g.shape(),
                    cache.output.shape()
                )));
            }
        }
        let mut grads = std::mem::take(&mut self.grads);
        {
            let net = self.net();
            for (cache, g) in recording.images.iter().zip(grads_out) {
                net.backward(cache, g, &mut grads);
            }
        }
        self.grads = grads;
        Ok(())
    }

    pub fn has_recording(&self) -> bool {
        self.recording.is_some()
    }

    fn net(&self) -> Net<'_, T> {
        Net {
            params: &self.params,
            layout: &self.layout,
            eps: self.config.norm_epsilon,
        }
    }
}

struct Net<'a, T> {
    params: &'a IndexMap<String, ParamTensor<T>>,
    layout: &'a Layout,
    eps: f64,
}

impl<T: Real> Net<'_, T> {
    fn p(&self, i: usize) -> &[T] {
        &self.params[i].data
    }

    fn cout(&self, i: usize) -> usize {
        self.params[i].shape[0]
    }

    /// conv3x3 -> instance norm -> ReLU
    fn block(&self, x: Tensor<T>, conv: usize, gamma: usize, beta: usize, record: bool) -> (Tensor<T>, Option<BlockCache<T>>) {
        let z = conv_forward(&x, self.p(conv), self.cout(conv), 3, None);
        let (mut y, norm) = norm_forward(&z, self.p(gamma), self.p(beta), self.eps);
        relu_in_place(&mut y);
        (y, record.then_some(BlockCache { input: x, norm }))
    }

    fn double(&self, x: Tensor<T>, d: &DoubleConv, record: bool) -> (Tensor<T>, Option<[BlockCache<T>; 2]>) {
        let (a, c1) = self.block(x, d.conv[0], d.gamma[0], d.beta[0], record);
        let (b, c2) = self.block(a, d.conv[1], d.gamma[1], d.beta[1], record);
        (b, c1.zip(c2).map(|(a, b)| [a, b]))
    }

    fn forward(&self, x: &Tensor<T>, record: bool) -> (Tensor<T>, Option<ImageCache<T>>) {
        let l = self.layout;
        let mut skips = Vec::with_capacity(l.enc.len());
        let mut enc_caches = Vec::with_capacity(l.enc.len());
        let mut cur = x.clone();
        for d in &l.enc {
            let (s, caches) = self.double(cur, d, record);
            let (pooled, arg) = maxpool2(&s);
            skips.push(s);
            if let Some(c) = caches {
                enc_caches.push((c, arg));
            }
            cur = pooled;
        }
        let (mut cur, bottleneck) = self.double(cur, &l.bottleneck, record);
        let mut dec_caches: Vec<Option<UpCache<T>>> = (0..l.dec.len()).map(|_| None).collect();
        for k in (0..l.dec.len()).rev() {
            let stage = &l.dec[k];
            let low = (cur.h, cur.w);
            let up = upsample2(&cur);
            let h = conv_forward(&up, self.p(stage.weight), self.cout(stage.weight), 3, Some(self.p(stage.bias)));
            let skip = skips.pop().expect("one skip per stage");
            let (out, caches) = self.double(concat(&h, &skip), &stage.block, record);
            if let Some(blocks) = caches {
                dec_caches[k] = Some(UpCache {
                    low,
                    upsampled: up,
                    blocks,
                });
            }
            cur = out;
        }
        let (hw, hb) = l.head;
        let mut y = conv_forward(&cur, self.p(hw), self.cout(hw), 1, Some(self.p(hb)));
        sigmoid_in_place(&mut y);
        let cache = record.then(|| ImageCache {
            enc: enc_caches,
            bottleneck: bottleneck.expect("recorded"),
            dec: dec_caches.into_iter().map(|c| c.expect("recorded")).collect(),
            head_input: cur,
            output: y.clone(),
        });
        (y, cache)
    }

    /// Backward through one conv -> norm -> ReLU block given the gradient
    /// w.r.t. its output (`out` is needed for the ReLU mask).
    fn block_backward(
        &self,
        cache: &BlockCache<T>,
        conv: usize,
        gamma: usize,
        beta: usize,
        mut dout: Tensor<T>,
        grads: &mut [Vec<T>],
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let g = self.p(gamma);
        let b = self.p(beta);
        let hw = dout.hw();
        // ReLU mask from the recomputed pre-activation gamma * xhat + beta.
        for c in 0..dout.c {
            let xh = &cache.norm.xhat[c * hw..(c + 1) * hw];
            for (d, &v) in dout.data[c * hw..(c + 1) * hw].iter_mut().zip(xh) {
                if g[c] * v + b[c] <= T::zero() {
                    *d = T::zero();
                }
            }
        }
        let (dgamma, dbeta) = two_mut(grads, gamma, beta);
        let dz = norm_backward(&cache.norm, g, &dout, dgamma, dbeta);
        conv_backward(&cache.input, self.p(conv), self.cout(conv), 3, &dz, &mut grads[conv], None, need_dx)
    }

    fn double_backward(&self, caches: &[BlockCache<T>; 2], d: &DoubleConv, dout: Tensor<T>, grads: &mut [Vec<T>], need_dx: bool) -> Option<Tensor<T>> {
        let da = self
            .block_backward(&caches[1], d.conv[1], d.gamma[1], d.beta[1], dout, grads, true)
            .expect("input gradient requested");
        self.block_backward(&caches[0], d.conv[0], d.gamma[0], d.beta[0], da, grads, need_dx)
    }

    fn backward(&self, cache: &ImageCache<T>, dy: &Tensor<T>, grads: &mut [Vec<T>]) {
        let l = self.layout;
        // Sigmoid: dz = dy * y * (1 - y).
        let mut dz = dy.clone();
        for (d, &y) in dz.data.iter_mut().zip(&cache.output.data) {
            *d *= y * (T::one() - y);
        }
        let (hw, hb) = l.head;
        let mut dhead_b = std::mem::take(&mut grads[hb]);
        let mut dcur = conv_backward(&cache.head_input, self.p(hw), self.cout(hw), 1, &dz, &mut grads[hw], Some(&mut dhead_b), true)
            .expect("input gradient requested");
        grads[hb] = dhead_b;

        let mut dskips: Vec<Option<Tensor<T>>> = (0..l.dec.len()).map(|_| None).collect();
        for k in 0..l.dec.len() {
            let stage = &l.dec[k];
            let uc = &cache.dec[k];
            let dcat = self
                .double_backward(&uc.blocks, &stage.block, dcur, grads, true)
                .expect("input gradient requested");
            let (dh, dskip) = split_channels(dcat, self.cout(stage.weight));
            dskips[k] = Some(dskip);
            let mut dbias = std::mem::take(&mut grads[stage.bias]);
            let dup = conv_backward(&uc.upsampled, self.p(stage.weight), self.cout(stage.weight), 3, &dh, &mut grads[stage.weight], Some(&mut dbias), true)
                .expect("input gradient requested");
            grads[stage.bias] = dbias;
            dcur = upsample2_backward(&dup, uc.low.0, uc.low.1);
        }
        let mut dcur = self
            .double_backward(&cache.bottleneck, &l.bottleneck, dcur, grads, true)
            .expect("input gradient requested");
        for k in (0..l.enc.len()).rev() {
            let (blocks, arg) = &cache.enc[k];
            let mut ds = dskips[k].take().expect("skip gradient");
            maxpool2_backward(&dcur, arg, &mut ds);
            match self.double_backward(blocks, &l.enc[k], ds, grads, k > 0) {
                Some(dx) => dcur = dx,
                None => break,
            }
        }
    }
}

fn two_mut<T>(v: &mut [Vec<T>], a: usize, b: usize) -> (&mut [T], &mut [T]) {
    assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

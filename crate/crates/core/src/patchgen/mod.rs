//! Procedural stroke-patch generation.
//!
//! A [`StrokeStyleSpec`] fully describes one style. Each patch is rendered
//! from its own random stream derived from `(seed, patch index)`, so a set
//! can be rendered in any order, in parallel, or one patch at a time, and
//! always produces the same pixels.

mod preset;
pub mod raster;
mod store;

use std::f64::consts::{FRAC_PI_4, TAU};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::{Dims, ImageTensor, NoiseSpec};
use crate::rng::{self, Domain};

pub use preset::{preset, presets, Fidelity, PresetInfo};
pub use raster::{draw_capsule, draw_primitive};
pub use store::{export_patch_set, write_patch_set, Manifest, PatchDir, StyleFile, GENERATOR_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    Capsule,
    Diamond,
    Wedge,
    Polyline,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColorMode {
    /// Each channel drawn from U(0,1) per stroke.
    RandomRgb,
    /// A fixed RGBA color; its alpha multiplies the style opacity.
    Fixed([f32; 4]),
}

/// Full parameterization of a stroke-patch style.
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeStyleSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub count: usize,
    /// RGBA, flattened over white when the canvas is created.
    pub background: [f32; 4],
    pub primitive: Primitive,
    pub strokes_per_patch: usize,
    pub stroke_length: f64,
    pub stroke_thickness: f64,
    pub color_mode: ColorMode,
    pub opacity: f64,
    /// Corruption noise applied by the trainer; never baked into patches.
    pub noise: NoiseSpec,
    pub noise_probability: f64,
}

impl StrokeStyleSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidSpec(format!("{}: {msg}", self.name)));
        if self.width == 0 || self.height == 0 {
            return fail(format!("size {}x{} must be at least 1x1", self.width, self.height));
        }
        if self.count == 0 {
            return fail("count must be >= 1".into());
        }
        if !(self.stroke_length >= 0.0 && self.stroke_length.is_finite()) {
            return fail(format!("stroke_length must be >= 0, got {}", self.stroke_length));
        }
        if !(self.stroke_thickness >= 1.0 && self.stroke_thickness.is_finite()) {
            return fail(format!(
                "stroke_thickness must be >= 1 pixel, got {}",
                self.stroke_thickness
            ));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return fail(format!("opacity must be in [0,1], got {}", self.opacity));
        }
        if !(0.0..=1.0).contains(&self.noise_probability) {
            return fail(format!(
                "noise_probability must be in [0,1], got {}",
                self.noise_probability
            ));
        }
        let in_unit = |c: &[f32]| c.iter().all(|v| (0.0..=1.0).contains(v));
        if !in_unit(&self.background) {
            return fail("background channels must lie in [0,1]".into());
        }
        if let ColorMode::Fixed(c) = self.color_mode {
            if !in_unit(&c) {
                return fail("stroke color channels must lie in [0,1]".into());
            }
        }
        self.noise.validate()
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.height, self.width)
    }

    /// Background color flattened over white.
    pub fn background_rgb(&self) -> [f32; 3] {
        let a = self.background[3];
        [0, 1, 2].map(|c| a * self.background[c] + (1.0 - a))
    }

    /// The default noise probability: always corrupt when the style has
    /// noise, never otherwise.
    pub fn default_noise_probability(noise: &NoiseSpec) -> f64 {
        if noise.is_none() {
            0.0
        } else {
            1.0
        }
    }
}

/// One sampled stroke, as drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeRecord {
    pub primitive: Primitive,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub thickness: f64,
    pub color: [f32; 3],
    pub alpha: f32,
    /// Position in the patch's draw order.
    pub order: usize,
    /// Polyline joint turns in radians; zero for other primitives.
    pub bends: [f64; 3],
}

#[inline]
fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Samples one stroke: orientation, start point, end point and color.
///
/// Random draws are taken in a fixed order (orientation, x1, y1, then the
/// three color channels for random colors, then the polyline bends).
pub fn sample_stroke<R: Rng + ?Sized>(spec: &StrokeStyleSpec, rng: &mut R) -> StrokeRecord {
    let len = spec.stroke_length;
    let phi = uniform(rng, 0.0, TAU);
    let x1 = uniform(rng, -len / 2.0, spec.width as f64 + len / 2.0);
    let y1 = uniform(rng, -len / 2.0, spec.height as f64 + len / 2.0);
    let (x2, y2) = (x1 + len * phi.cos(), y1 + len * phi.sin());
    let (color, alpha) = match spec.color_mode {
        ColorMode::RandomRgb => {
            let c = [0; 3].map(|_| rng.random::<f32>());
            (c, spec.opacity as f32)
        }
        ColorMode::Fixed(c) => ([c[0], c[1], c[2]], spec.opacity as f32 * c[3]),
    };
    let bends = if spec.primitive == Primitive::Polyline {
        [0; 3].map(|_| uniform(rng, -FRAC_PI_4, FRAC_PI_4))
    } else {
        [0.0; 3]
    };
    StrokeRecord {
        primitive: spec.primitive,
        x1,
        y1,
        x2,
        y2,
        thickness: spec.stroke_thickness,
        color,
        alpha,
        order: 0,
        bends,
    }
}

/// Renders one patch: a background canvas with `strokes_per_patch` strokes
/// composited in order. Returns the RGB image and the stroke log.
pub fn render_patch<R: Rng + ?Sized>(spec: &StrokeStyleSpec, rng: &mut R) -> (ImageTensor, Vec<StrokeRecord>) {
    let mut canvas = ImageTensor::solid(&spec.background_rgb(), spec.height, spec.width);
    let mut log = Vec::with_capacity(spec.strokes_per_patch);
    for order in 0..spec.strokes_per_patch {
        let mut rec = sample_stroke(spec, rng);
        rec.order = order;
        draw_primitive(&mut canvas, &rec);
        log.push(rec);
    }
    (canvas, log)
}

/// Renders patch `index` of the set identified by `(spec, seed)`.
pub fn render_patch_at(spec: &StrokeStyleSpec, seed: u64, index: usize) -> (ImageTensor, Vec<StrokeRecord>) {
    let mut rng = rng::stream(seed, Domain::Patch, index as u64);
    render_patch(spec, &mut rng)
}

/// An ordered, immutable set of rendered patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    spec: StrokeStyleSpec,
    seed: u64,
    patches: Vec<ImageTensor>,
    stroke_logs: Option<Vec<Vec<StrokeRecord>>>,
}

impl PatchSet {
    pub fn spec(&self) -> &StrokeStyleSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn patches(&self) -> &[ImageTensor] {
        &self.patches
    }

    pub fn stroke_logs(&self) -> Option<&[Vec<StrokeRecord>]> {
        self.stroke_logs.as_deref()
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

fn reserve_patches(spec: &StrokeStyleSpec) -> Result<()> {
    let bytes = (3 * spec.width)
        .checked_mul(spec.height)
        .and_then(|v| v.checked_mul(spec.count))
        .and_then(|v| v.checked_mul(std::mem::size_of::<f32>()))
        .ok_or_else(|| Error::Resource("patch set size overflows".into()))?;
    // Probe the allocation up front so a set that does not fit is reported
    // instead of aborting halfway through rendering.
    let mut probe: Vec<u8> = Vec::new();
    probe
        .try_reserve_exact(bytes)
        .map_err(|e| Error::Resource(format!("cannot allocate {bytes} bytes for patches: {e}")))
}

fn generate(spec: &StrokeStyleSpec, seed: u64, keep_logs: bool) -> Result<PatchSet> {
    spec.validate()?;
    reserve_patches(spec)?;
    let rendered: Vec<(ImageTensor, Vec<StrokeRecord>)> = (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let (img, log) = render_patch_at(spec, seed, i);
            (img, if keep_logs { log } else { Vec::new() })
        })
        .collect();
    let (patches, logs): (Vec<_>, Vec<_>) = rendered.into_iter().unzip();
    Ok(PatchSet {
        spec: spec.clone(),
        seed,
        patches,
        stroke_logs: keep_logs.then_some(logs),
    })
}

/// Renders all `spec.count` patches in memory.
pub fn generate_patch_set(spec: &StrokeStyleSpec, seed: u64) -> Result<PatchSet> {
    generate(spec, seed, false)
}

/// Like [`generate_patch_set`], also keeping the per-patch stroke logs.
pub fn generate_patch_set_with_logs(spec: &StrokeStyleSpec, seed: u64) -> Result<PatchSet> {
    generate(spec, seed, true)
}

/// Random access to a collection of equally sized training patches.
pub trait PatchSource: Sync {
    fn spec(&self) -> &StrokeStyleSpec;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns patch `index` as a 3-channel image.
    fn patch(&self, index: usize) -> Result<ImageTensor>;

    fn dims(&self) -> Dims {
        self.spec().dims()
    }
}

impl PatchSource for PatchSet {
    fn spec(&self) -> &StrokeStyleSpec {
        &self.spec
    }

    fn len(&self) -> usize {
        self.patches.len()
    }

    fn patch(&self, index: usize) -> Result<ImageTensor> {
        self.patches
            .get(index)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("patch index {index} out of range")))
    }
}

/// A patch set rendered on demand, for sets too large to hold in memory.
#[derive(Debug, Clone)]
pub struct LazyPatchSet {
    spec: StrokeStyleSpec,
    seed: u64,
}

impl LazyPatchSet {
    pub fn new(spec: StrokeStyleSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(LazyPatchSet { spec, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl PatchSource for LazyPatchSet {
    fn spec(&self) -> &StrokeStyleSpec {
        &self.spec
    }

    fn len(&self) -> usize {
        self.spec.count
    }

    fn patch(&self, index: usize) -> Result<ImageTensor> {
        if index >= self.spec.count {
            return Err(Error::InvalidArgument(format!("patch index {index} out of range")));
        }
        Ok(render_patch_at(&self.spec, self.seed, index).0)
    }
}

//! Style-spec JSON files and on-disk patch directories.
//!
//! A patch directory holds `patch_00000.png`, `patch_00001.png`, ... as
//! 8-bit RGB images plus a `manifest.json` recording the style spec, seed
//! and generator version.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{render_patch_at, ColorMode, PatchSet, PatchSource, Primitive, StrokeStyleSpec};
use crate::error::{Error, Result};
use crate::imageops::{ImageTensor, NoiseSpec};
use crate::io;

pub const GENERATOR_VERSION: &str = concat!("strokepatch ", env!("CARGO_PKG_VERSION"));

const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorModeFile {
    RandomRgb,
    Fixed([u8; 4]),
}

/// JSON form of [`StrokeStyleSpec`]. Colors are 8-bit RGBA arrays; unknown
/// keys are rejected. `noise_probability` may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleFile {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub count: usize,
    pub background: [u8; 4],
    pub primitive: Primitive,
    pub strokes_per_patch: usize,
    pub stroke_length: f64,
    pub stroke_thickness: f64,
    pub color_mode: ColorModeFile,
    pub opacity: f64,
    pub noise: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_probability: Option<f64>,
}

fn from_8bit(c: [u8; 4]) -> [f32; 4] {
    c.map(|v| v as f32 / 255.0)
}

fn to_8bit(c: [f32; 4]) -> [u8; 4] {
    c.map(io::quantize)
}

impl StyleFile {
    pub fn into_spec(self) -> Result<StrokeStyleSpec> {
        let noise_probability = self
            .noise_probability
            .unwrap_or_else(|| StrokeStyleSpec::default_noise_probability(&self.noise));
        let spec = StrokeStyleSpec {
            name: self.name,
            width: self.width,
            height: self.height,
            count: self.count,
            background: from_8bit(self.background),
            primitive: self.primitive,
            strokes_per_patch: self.strokes_per_patch,
            stroke_length: self.stroke_length,
            stroke_thickness: self.stroke_thickness,
            color_mode: match self.color_mode {
                ColorModeFile::RandomRgb => ColorMode::RandomRgb,
                ColorModeFile::Fixed(c) => ColorMode::Fixed(from_8bit(c)),
            },
            opacity: self.opacity,
            noise: self.noise,
            noise_probability,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_spec(spec: &StrokeStyleSpec) -> Self {
        StyleFile {
            name: spec.name.clone(),
            width: spec.width,
            height: spec.height,
            count: spec.count,
            background: to_8bit(spec.background),
            primitive: spec.primitive,
            strokes_per_patch: spec.strokes_per_patch,
            stroke_length: spec.stroke_length,
            stroke_thickness: spec.stroke_thickness,
            color_mode: match spec.color_mode {
                ColorMode::RandomRgb => ColorModeFile::RandomRgb,
                ColorMode::Fixed(c) => ColorModeFile::Fixed(to_8bit(c)),
            },
            opacity: spec.opacity,
            noise: spec.noise,
            noise_probability: Some(spec.noise_probability),
        }
    }

    pub fn parse(text: &str, path: &Path) -> Result<StrokeStyleSpec> {
        let file: StyleFile = serde_json::from_str(text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        file.into_spec()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<StrokeStyleSpec> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub generator: String,
    pub seed: u64,
    pub spec: StyleFile,
}

impl Manifest {
    pub fn new(spec: &StrokeStyleSpec, seed: u64) -> Self {
        Manifest {
            generator: GENERATOR_VERSION.to_string(),
            seed,
            spec: StyleFile::from_spec(spec),
        }
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path, source })
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

pub fn patch_file_name(index: usize) -> String {
    format!("patch_{index:05}.png")
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes an in-memory patch set and its manifest to `dir`.
pub fn write_patch_set(set: &PatchSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    prepare_dir(dir)?;
    set.patches()
        .par_iter()
        .enumerate()
        .try_for_each(|(i, img)| io::write_png(img, dir.join(patch_file_name(i))))?;
    Manifest::new(set.spec(), set.seed()).write(dir)
}

/// Renders the set identified by `(spec, seed)` straight to `dir`, holding
/// only one patch per worker in memory.
pub fn export_patch_set(spec: &StrokeStyleSpec, seed: u64, dir: impl AsRef<Path>) -> Result<()> {
    spec.validate()?;
    let dir = dir.as_ref();
    prepare_dir(dir)?;
    (0..spec.count).into_par_iter().try_for_each(|i| {
        let (img, _) = render_patch_at(spec, seed, i);
        io::write_png(&img, dir.join(patch_file_name(i)))
    })?;
    Manifest::new(spec, seed).write(dir)
}

/// A patch directory opened for training; patches are decoded on access.
#[derive(Debug, Clone)]
pub struct PatchDir {
    dir: PathBuf,
    manifest: Manifest,
    spec: StrokeStyleSpec,
}

impl PatchDir {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = Manifest::load(&dir)?;
        let spec = manifest.spec.clone().into_spec()?;
        Ok(PatchDir {
            dir,
            manifest,
            spec,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }
}

impl PatchSource for PatchDir {
    fn spec(&self) -> &StrokeStyleSpec {
        &self.spec
    }

    fn len(&self) -> usize {
        self.spec.count
    }

    fn patch(&self, index: usize) -> Result<ImageTensor> {
        let path = self.dir.join(patch_file_name(index));
        let img = io::read_png_rgb(&path)?;
        if img.dims() != self.spec.dims() {
            return Err(Error::Shape(format!(
                "{}: {}x{} does not match manifest size {}x{}",
                path.display(),
                img.width(),
                img.height(),
                self.spec.width,
                self.spec.height
            )));
        }
        Ok(img)
    }
}

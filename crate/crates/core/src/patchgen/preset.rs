use super::{ColorMode, Primitive, StrokeStyleSpec};
use crate::error::{Error, Result};
use crate::imageops::NoiseSpec;

/// Whether a preset's parameters are taken from published values or are an
/// invented approximation of a look.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fidelity {
    PaperFaithful,
    Approximate,
}

impl Fidelity {
    pub fn as_str(self) -> &'static str {
        match self {
            Fidelity::PaperFaithful => "paper-faithful",
            Fidelity::Approximate => "approximate",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PresetInfo {
    pub name: &'static str,
    pub fidelity: Fidelity,
    pub summary: &'static str,
}

const WHITE: [f32; 4] = [1.0, 1.0, 1.0, 1.0];
const BLACK: ColorMode = ColorMode::Fixed([0.0, 0.0, 0.0, 1.0]);

const PRESETS: &[PresetInfo] = &[
    PresetInfo {
        name: "wet_brush",
        fidelity: Fidelity::PaperFaithful,
        summary: "50 random-color round brush strokes, 80 px long, 40 px wide",
    },
    PresetInfo {
        name: "rough_silverpoint",
        fidelity: Fidelity::PaperFaithful,
        summary: "700 black 1 px lines, 50 px long",
    },
    PresetInfo {
        name: "fine_silverpoint",
        fidelity: Fidelity::PaperFaithful,
        summary: "1200 black 1 px lines, 50 px long",
    },
    PresetInfo {
        name: "letratape",
        fidelity: Fidelity::PaperFaithful,
        summary: "200 black 5 px lines, 50 px long",
    },
    PresetInfo {
        name: "smooth_brush",
        fidelity: Fidelity::PaperFaithful,
        summary: "50 black 40 px strokes, 120 px long, heavy Gaussian noise",
    },
    PresetInfo {
        name: "speedball_pen",
        fidelity: Fidelity::Approximate,
        summary: "short black pen strokes",
    },
    PresetInfo {
        name: "diamond_brush",
        fidelity: Fidelity::Approximate,
        summary: "random-color rhombus dabs",
    },
    PresetInfo {
        name: "cuneiform_brush",
        fidelity: Fidelity::Approximate,
        summary: "black wedge marks",
    },
    PresetInfo {
        name: "scribble_pencil",
        fidelity: Fidelity::Approximate,
        summary: "thin dark-gray jittered polylines",
    },
];

pub fn presets() -> &'static [PresetInfo] {
    PRESETS
}

fn wet_brush() -> StrokeStyleSpec {
    StrokeStyleSpec {
        name: "wet_brush".into(),
        width: 400,
        height: 400,
        count: 5000,
        background: WHITE,
        primitive: Primitive::Capsule,
        strokes_per_patch: 50,
        stroke_length: 80.0,
        stroke_thickness: 40.0,
        color_mode: ColorMode::RandomRgb,
        opacity: 1.0,
        noise: NoiseSpec::gaussian(500.0),
        noise_probability: 1.0,
    }
}

fn silverpoint(name: &str, strokes: usize, thickness: f64) -> StrokeStyleSpec {
    StrokeStyleSpec {
        name: name.into(),
        strokes_per_patch: strokes,
        stroke_length: 50.0,
        stroke_thickness: thickness,
        color_mode: BLACK,
        noise: NoiseSpec::NONE,
        noise_probability: 0.0,
        ..wet_brush()
    }
}

/// Looks up a preset by name.
pub fn preset(name: &str) -> Result<StrokeStyleSpec> {
    let spec = match name {
        "wet_brush" => wet_brush(),
        "rough_silverpoint" => silverpoint(name, 700, 1.0),
        "fine_silverpoint" => silverpoint(name, 1200, 1.0),
        "letratape" => silverpoint(name, 200, 5.0),
        "smooth_brush" => StrokeStyleSpec {
            stroke_length: 120.0,
            stroke_thickness: 40.0,
            noise: NoiseSpec::gaussian(500.0),
            noise_probability: 1.0,
            ..silverpoint(name, 50, 40.0)
        },
        "speedball_pen" => StrokeStyleSpec {
            stroke_length: 30.0,
            ..silverpoint(name, 150, 3.0)
        },
        "diamond_brush" => StrokeStyleSpec {
            name: name.into(),
            primitive: Primitive::Diamond,
            strokes_per_patch: 120,
            stroke_length: 60.0,
            stroke_thickness: 24.0,
            ..wet_brush()
        },
        "cuneiform_brush" => StrokeStyleSpec {
            primitive: Primitive::Wedge,
            stroke_length: 40.0,
            ..silverpoint(name, 150, 14.0)
        },
        "scribble_pencil" => StrokeStyleSpec {
            primitive: Primitive::Polyline,
            stroke_length: 100.0,
            color_mode: ColorMode::Fixed([0.2, 0.2, 0.2, 1.0]),
            opacity: 0.8,
            ..silverpoint(name, 60, 2.0)
        },
        _ => {
            return Err(Error::UnknownPreset {
                name: name.to_string(),
                available: PRESETS.iter().map(|p| p.name.to_string()).collect(),
            })
        }
    };
    Ok(spec)
}

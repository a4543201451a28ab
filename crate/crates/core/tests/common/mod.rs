//! Reference implementations shared by the integration tests and the
//! acceptance suite. Everything here is written directly from the
//! definitions, without calling into the code paths it checks.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strokepatch::patchgen::{draw_primitive, Primitive, StrokeRecord};
use strokepatch::ImageTensor;

pub const SUBSAMPLES: usize = 16;

fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let l2 = vx * vx + vy * vy;
    let t = if l2 == 0.0 { 0.0 } else { ((wx * vx + wy * vy) / l2).clamp(0.0, 1.0) };
    ((wx - t * vx).powi(2) + (wy - t * vy).powi(2)).sqrt()
}

fn polyline_vertices(r: &StrokeRecord) -> Vec<(f64, f64)> {
    let len = ((r.x2 - r.x1).powi(2) + (r.y2 - r.y1).powi(2)).sqrt();
    let mut angle = (r.y2 - r.y1).atan2(r.x2 - r.x1);
    let mut pts = vec![(r.x1, r.y1)];
    for k in 0..4 {
        if k > 0 {
            angle += r.bends[k - 1];
        }
        let last = *pts.last().unwrap();
        pts.push((last.0 + len / 4.0 * angle.cos(), last.1 + len / 4.0 * angle.sin()));
    }
    pts
}

/// Whether point `p` lies inside the stroke's shape.
pub fn inside(r: &StrokeRecord, p: (f64, f64)) -> bool {
    let half_t = r.thickness / 2.0;
    let (dx, dy) = (r.x2 - r.x1, r.y2 - r.y1);
    let len = (dx * dx + dy * dy).sqrt();
    match r.primitive {
        Primitive::Capsule => seg_dist(p, (r.x1, r.y1), (r.x2, r.y2)) <= half_t,
        Primitive::Polyline => {
            let v = polyline_vertices(r);
            v.windows(2).any(|s| seg_dist(p, s[0], s[1]) <= half_t)
        }
        Primitive::Diamond => {
            if len == 0.0 {
                return false;
            }
            let (ux, uy) = (dx / len, dy / len);
            let (px, py) = (p.0 - r.x1, p.1 - r.y1);
            let along = (px * ux + py * uy).abs();
            let across = (-px * uy + py * ux).abs();
            along / (len / 2.0) + across / half_t <= 1.0
        }
        Primitive::Wedge => {
            if len == 0.0 {
                return false;
            }
            let (nx, ny) = (-dy / len, dx / len);
            let a = (r.x1 + half_t * nx, r.y1 + half_t * ny);
            let b = (r.x2, r.y2);
            let c = (r.x1 - half_t * nx, r.y1 - half_t * ny);
            let cross = |o: (f64, f64), e: (f64, f64)| (e.0 - o.0) * (p.1 - o.1) - (e.1 - o.1) * (p.0 - o.0);
            let (s1, s2, s3) = (cross(a, b), cross(b, c), cross(c, a));
            (s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0) || (s1 <= 0.0 && s2 <= 0.0 && s3 <= 0.0)
        }
    }
}

/// Fraction of a 16x16 grid of sample points in pixel `(row, col)` that
/// fall inside the stroke.
pub fn supersampled_coverage(r: &StrokeRecord, row: usize, col: usize) -> f64 {
    let n = SUBSAMPLES;
    let mut hits = 0;
    for j in 0..n {
        for i in 0..n {
            let p = (
                col as f64 + (i as f64 + 0.5) / n as f64,
                row as f64 + (j as f64 + 0.5) / n as f64,
            );
            if inside(r, p) {
                hits += 1;
            }
        }
    }
    hits as f64 / (n * n) as f64
}

pub fn random_stroke(primitive: Primitive, size: usize, rng: &mut ChaCha8Rng) -> StrokeRecord {
    let len = rng.random_range(0.0..60.0);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let x1 = rng.random_range(-10.0..size as f64 + 10.0);
    let y1 = rng.random_range(-10.0..size as f64 + 10.0);
    let bends = if primitive == Primitive::Polyline {
        [0; 3].map(|_| rng.random_range(-std::f64::consts::FRAC_PI_4..std::f64::consts::FRAC_PI_4))
    } else {
        [0.0; 3]
    };
    StrokeRecord {
        primitive,
        x1,
        y1,
        x2: x1 + len * phi.cos(),
        y2: y1 + len * phi.sin(),
        thickness: rng.random_range(2.0..40.0),
        color: [1.0; 3],
        alpha: 1.0,
        order: 0,
        bends,
    }
}

/// Largest per-pixel gap between rendered coverage and the supersampling
/// oracle over `strokes` random strokes of one primitive.
pub fn rasterizer_max_error(primitive: Primitive, strokes: usize, seed: u64) -> f64 {
    let size = 48;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..strokes {
        let rec = random_stroke(primitive, size, &mut rng);
        let mut canvas = ImageTensor::zeros(3, size, size);
        draw_primitive(&mut canvas, &rec);
        for row in 0..size {
            for col in 0..size {
                let got = canvas.get(0, row, col) as f64;
                let want = supersampled_coverage(&rec, row, col);
                worst = worst.max((got - want).abs());
            }
        }
    }
    worst
}

/// 1-D Gaussian taps for a blur radius, from the definition: sigma is half
/// the radius, half-width is ceil(3 sigma), weights normalized.
pub fn gaussian_taps(radius: f64) -> Vec<f64> {
    let sigma = radius / 2.0;
    let half = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-half..=half)
        .map(|k| (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// Direct zero-padded 3x3 cross-correlation.
pub fn naive_conv3(x: &[f64], cin: usize, h: usize, w: usize, weight: &[f64], cout: usize, bias: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cout * h * w];
    for co in 0..cout {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = bias[co];
                for ci in 0..cin {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let sy = y as i64 + ky as i64 - 1;
                            let sx = xx as i64 + kx as i64 - 1;
                            if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                                continue;
                            }
                            acc += weight[((co * cin + ci) * 3 + ky) * 3 + kx] * x[(ci * h + sy as usize) * w + sx as usize];
                        }
                    }
                }
                out[(co * h + y) * w + xx] = acc;
            }
        }
    }
    out
}

/// Per-channel standardization with population variance, then affine.
pub fn naive_instance_norm(x: &[f64], c: usize, hw: usize, gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for ch in 0..c {
        let v = &x[ch * hw..(ch + 1) * hw];
        let mean = v.iter().sum::<f64>() / hw as f64;
        let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / hw as f64;
        for i in 0..hw {
            out[ch * hw + i] = gamma[ch] * (v[i] - mean) / (var + eps).sqrt() + beta[ch];
        }
    }
    out
}

/// Scalar Adam with the default moments, `steps` updates on `grad(p)`.
pub fn scalar_adam(p0: f64, grad: impl Fn(f64) -> f64, steps: usize, lr: f64) -> f64 {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
    let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
    for t in 1..=steps as i32 {
        let g = grad(p);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        p -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
    }
    p
}

pub fn uniform_vec(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

//! Coverage rasterization of stroke primitives with source-over compositing.
//!
//! Capsules use signed-distance coverage with a one pixel linear band,
//! `clamp(0.5 + T/2 - d, 0, 1)` measured at the pixel center. Bent
//! polylines evaluate the same band on a sub-pixel grid.
//! The polygonal primitives (diamond, wedge) use the exact area of the
//! polygon inside each pixel square, because distance coverage is badly
//! wrong near acute corners. Pixel `(row, col)` covers the square
//! `[col, col+1) x [row, row+1)`; its center is `(col + 0.5, row + 0.5)`.

use super::{Primitive, StrokeRecord};
use crate::imageops::ImageTensor;

type Point = (f64, f64);

/// Number of segments in a polyline stroke.
pub const POLYLINE_SEGMENTS: usize = 4;

/// Composites `color` with effective opacity `a` over pixel `(y, x)`.
///
/// 3-channel canvases are opaque surfaces; 4-channel canvases carry a
/// straight (non-premultiplied) alpha channel.
#[inline]
fn blend(canvas: &mut ImageTensor, y: usize, x: usize, color: &[f32; 3], a: f32) {
    if a <= 0.0 {
        return;
    }
    if canvas.channels() == 4 {
        let dst_a = canvas.get(3, y, x);
        let out_a = a + dst_a * (1.0 - a);
        for (c, &src) in color.iter().enumerate() {
            let dst = canvas.get(c, y, x);
            let v = if out_a > 0.0 {
                (a * src + dst_a * (1.0 - a) * dst) / out_a
            } else {
                0.0
            };
            canvas.set(c, y, x, v);
        }
        canvas.set(3, y, x, out_a);
    } else {
        for (c, &src) in color.iter().enumerate().take(canvas.channels()) {
            let dst = canvas.get(c, y, x);
            canvas.set(c, y, x, a * src + (1.0 - a) * dst);
        }
    }
}

/// Pixel index range whose squares intersect `[lo, hi]`, clipped to `0..n`.
fn pixel_span(lo: f64, hi: f64, n: usize) -> std::ops::Range<usize> {
    let start = lo.floor().max(0.0);
    let end = (hi.ceil()).min(n as f64);
    if !(start < end) {
        return 0..0;
    }
    start as usize..end as usize
}

pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

#[inline]
fn band_coverage(half_thickness: f64, distance: f64) -> f32 {
    (0.5 + half_thickness - distance).clamp(0.0, 1.0) as f32
}

/// Sub-pixel grid used for bent polylines, whose outline has concave
/// corners where single-sample distance coverage is inaccurate.
pub const POLYLINE_SUBSAMPLES: usize = 4;

fn min_distance(p: Point, points: &[Point]) -> f64 {
    points
        .windows(2)
        .map(|s| segment_distance(p, s[0], s[1]))
        .fold(f64::INFINITY, f64::min)
}

/// Rasterizes the union of capsules around consecutive `points`.
///
/// With `subsamples == 1` coverage is the distance band at the pixel
/// center. Otherwise pixels in the anti-aliasing band average a
/// `subsamples x subsamples` grid of bands scaled to the sub-pixel size.
fn draw_segments(canvas: &mut ImageTensor, points: &[Point], rec: &StrokeRecord, subsamples: usize) {
    let r = rec.thickness / 2.0;
    let pad = r + 1.0;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(px, py) in points {
        x0 = x0.min(px);
        x1 = x1.max(px);
        y0 = y0.min(py);
        y1 = y1.max(py);
    }
    let cols = pixel_span(x0 - pad, x1 + pad, canvas.width());
    let rows = pixel_span(y0 - pad, y1 + pad, canvas.height());
    let k = subsamples.max(1);
    let kf = k as f64;
    // Sub-sample centers lie within this distance of the pixel center.
    let reach = std::f64::consts::FRAC_1_SQRT_2 * (1.0 - 1.0 / kf) + 0.5 / kf;
    for y in rows {
        for x in cols.clone() {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let d = min_distance(p, points);
            let cov = if k == 1 {
                band_coverage(r, d)
            } else if d <= r - reach {
                1.0
            } else if d >= r + reach {
                0.0
            } else {
                let mut acc = 0.0f64;
                for j in 0..k {
                    for i in 0..k {
                        let q = (x as f64 + (i as f64 + 0.5) / kf, y as f64 + (j as f64 + 0.5) / kf);
                        acc += (0.5 + kf * (r - min_distance(q, points))).clamp(0.0, 1.0);
                    }
                }
                (acc / (kf * kf)) as f32
            };
            if cov > 0.0 {
                blend(canvas, y, x, &rec.color, cov * rec.alpha);
            }
        }
    }
}

/// Round-capped thick line from `(x1, y1)` to `(x2, y2)`.
pub fn draw_capsule(canvas: &mut ImageTensor, rec: &StrokeRecord) {
    draw_segments(canvas, &[(rec.x1, rec.y1), (rec.x2, rec.y2)], rec, 1);
}

/// Dispatches on the record's primitive.
pub fn draw_primitive(canvas: &mut ImageTensor, rec: &StrokeRecord) {
    match rec.primitive {
        Primitive::Capsule => draw_capsule(canvas, rec),
        // A straight polyline is exactly a capsule.
        Primitive::Polyline if rec.bends.iter().all(|&b| b == 0.0) => draw_capsule(canvas, rec),
        Primitive::Polyline => draw_segments(canvas, &polyline_points(rec), rec, POLYLINE_SUBSAMPLES),
        Primitive::Diamond | Primitive::Wedge => {
            if let Some(poly) = polygon(rec) {
                draw_polygon(canvas, &poly, rec);
            }
        }
    }
}

/// Unit direction and length of the stroke axis. Zero-length strokes point
/// along +x.
fn axis(rec: &StrokeRecord) -> (f64, f64, f64) {
    let (dx, dy) = (rec.x2 - rec.x1, rec.y2 - rec.y1);
    let len = (dx * dx + dy * dy).sqrt();
    if len > 0.0 {
        (dx / len, dy / len, len)
    } else {
        (1.0, 0.0, 0.0)
    }
}

/// Vertices of the polyline: starts at `(x1, y1)` heading towards
/// `(x2, y2)`, segments of length `L / 4`, turning by `bends[k]` at joint k.
pub fn polyline_points(rec: &StrokeRecord) -> Vec<Point> {
    let (ux, uy, len) = axis(rec);
    let mut heading = uy.atan2(ux);
    let step = len / POLYLINE_SEGMENTS as f64;
    let mut pts = Vec::with_capacity(POLYLINE_SEGMENTS + 1);
    let mut p = (rec.x1, rec.y1);
    pts.push(p);
    for k in 0..POLYLINE_SEGMENTS {
        if k > 0 {
            heading += rec.bends[k - 1];
        }
        p = if k == POLYLINE_SEGMENTS - 1 && rec.bends.iter().all(|&b| b == 0.0) {
            (rec.x2, rec.y2)
        } else {
            (p.0 + step * heading.cos(), p.1 + step * heading.sin())
        };
        pts.push(p);
    }
    pts
}

/// Counter-clockwise-or-clockwise convex outline for the polygonal
/// primitives; `None` when the shape has no area.
pub fn polygon(rec: &StrokeRecord) -> Option<Vec<Point>> {
    let (ux, uy, len) = axis(rec);
    let (nx, ny) = (-uy, ux);
    let half_t = rec.thickness / 2.0;
    let (cx, cy) = (rec.x1, rec.y1);
    match rec.primitive {
        Primitive::Diamond => {
            let half_l = len / 2.0;
            if half_l <= 0.0 || half_t <= 0.0 {
                return None;
            }
            Some(vec![
                (cx + half_l * ux, cy + half_l * uy),
                (cx + half_t * nx, cy + half_t * ny),
                (cx - half_l * ux, cy - half_l * uy),
                (cx - half_t * nx, cy - half_t * ny),
            ])
        }
        Primitive::Wedge => {
            if len <= 0.0 || half_t <= 0.0 {
                return None;
            }
            Some(vec![
                (cx + half_t * nx, cy + half_t * ny),
                (rec.x2, rec.y2),
                (cx - half_t * nx, cy - half_t * ny),
            ])
        }
        _ => None,
    }
}

fn shoelace(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        acc += a.0 * b.1 - b.0 * a.1;
    }
    acc.abs() / 2.0
}

/// Clips `poly` to the half-plane where `inside` holds, along one axis.
fn clip(poly: &[Point], coord: impl Fn(Point) -> f64, bound: f64, keep_below: bool) -> Vec<Point> {
    let inside = |p: Point| {
        if keep_below {
            coord(p) <= bound
        } else {
            coord(p) >= bound
        }
    };
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let cur = poly[i];
        let prev = poly[(i + poly.len() - 1) % poly.len()];
        let (ci, pi) = (inside(cur), inside(prev));
        if ci != pi {
            let t = (bound - coord(prev)) / (coord(cur) - coord(prev));
            out.push((prev.0 + t * (cur.0 - prev.0), prev.1 + t * (cur.1 - prev.1)));
        }
        if ci {
            out.push(cur);
        }
    }
    out
}

/// Area of the convex polygon inside the unit pixel square at `(x, y)`.
pub fn pixel_area(poly: &[Point], x: f64, y: f64) -> f64 {
    let mut p = clip(poly, |p| p.0, x, false);
    if p.is_empty() {
        return 0.0;
    }
    p = clip(&p, |p| p.0, x + 1.0, true);
    if p.is_empty() {
        return 0.0;
    }
    p = clip(&p, |p| p.1, y, false);
    if p.is_empty() {
        return 0.0;
    }
    p = clip(&p, |p| p.1, y + 1.0, true);
    if p.len() < 3 {
        return 0.0;
    }
    shoelace(&p).min(1.0)
}

fn draw_polygon(canvas: &mut ImageTensor, poly: &[Point], rec: &StrokeRecord) {
    let x0 = poly.iter().map(|p| p.0).fold(f64::MAX, f64::min);
    let x1 = poly.iter().map(|p| p.0).fold(f64::MIN, f64::max);
    let y0 = poly.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    let y1 = poly.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let cols = pixel_span(x0, x1, canvas.width());
    let rows = pixel_span(y0, y1, canvas.height());
    for y in rows {
        for x in cols.clone() {
            let cov = pixel_area(poly, x as f64, y as f64) as f32;
            if cov > 0.0 {
                blend(canvas, y, x, &rec.color, cov * rec.alpha);
            }
        }
    }
}

//! Procedurally rendered 28x28 handwritten-style digits, plus letters A-J drawn the same
//! way as a structured out-of-distribution set.
//!
//! Each class is a fixed stroke skeleton (polylines in the unit square, y pointing down).
//! A sample jitters every skeleton vertex, applies a random affine map (rotation, per-axis
//! scale, shear, translation), and rasterizes the strokes with a random pen width and a
//! one-pixel soft edge. Pixels are quantized to 8-bit levels, so the output is exactly
//! representable in an unsigned-byte IDX file.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numkernel::{Matrix, Rng};
use crate::snn::LabeledBatch;

pub const DIGIT_SIDE: usize = 28;
pub const DIGIT_CLASSES: usize = 10;

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Stroke {
    let n = 14;
    (0..=n)
        .map(|i| {
            let a = (from_deg + (to_deg - from_deg) * i as f64 / n as f64) * PI / 180.0;
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

fn line(points: &[(f64, f64)]) -> Stroke {
    points.to_vec()
}

fn skeleton(digit: usize) -> Vec<Stroke> {
    match digit {
        0 => vec![arc(0.5, 0.5, 0.2, 0.32, 0.0, 360.0)],
        1 => vec![line(&[(0.38, 0.27), (0.52, 0.16), (0.52, 0.84)])],
        2 => {
            let mut s = arc(0.5, 0.34, 0.19, 0.17, 190.0, 380.0);
            s.extend([(0.3, 0.84), (0.73, 0.84)]);
            vec![s]
        }
        3 => vec![
            arc(0.49, 0.33, 0.18, 0.16, 210.0, 450.0),
            arc(0.49, 0.66, 0.2, 0.18, 270.0, 510.0),
        ],
        4 => vec![line(&[
            (0.63, 0.84),
            (0.63, 0.16),
            (0.26, 0.6),
            (0.78, 0.6),
        ])],
        5 => {
            let mut s = line(&[(0.72, 0.16), (0.34, 0.16), (0.31, 0.46)]);
            s.extend(arc(0.49, 0.63, 0.21, 0.2, 225.0, 505.0));
            vec![s]
        }
        6 => {
            let mut s = arc(0.62, 0.55, 0.3, 0.4, 260.0, 180.0);
            s.extend(arc(0.5, 0.65, 0.18, 0.18, 180.0, -180.0));
            vec![s]
        }
        7 => vec![line(&[(0.27, 0.16), (0.75, 0.16), (0.43, 0.84)])],
        8 => vec![
            arc(0.5, 0.32, 0.15, 0.15, 0.0, 360.0),
            arc(0.5, 0.66, 0.19, 0.18, 0.0, 360.0),
        ],
        9 => {
            let mut s = arc(0.5, 0.35, 0.18, 0.18, 0.0, 360.0);
            s.extend([(0.66, 0.6), (0.6, 0.84)]);
            vec![s]
        }
        _ => unreachable!("digit out of range"),
    }
}

fn letter_skeleton(letter: usize) -> Vec<Stroke> {
    match letter {
        0 => vec![
            line(&[(0.25, 0.84), (0.5, 0.16), (0.75, 0.84)]),
            line(&[(0.35, 0.6), (0.65, 0.6)]),
        ],
        1 => vec![line(&[
            (0.3, 0.5),
            (0.3, 0.16),
            (0.55, 0.16),
            (0.65, 0.24),
            (0.65, 0.42),
            (0.55, 0.5),
            (0.3, 0.5),
            (0.3, 0.84),
            (0.58, 0.84),
            (0.7, 0.76),
            (0.7, 0.58),
            (0.55, 0.5),
        ])],
        2 => vec![arc(0.55, 0.5, 0.25, 0.34, 45.0, 315.0)],
        3 => vec![line(&[
            (0.3, 0.16),
            (0.5, 0.16),
            (0.68, 0.3),
            (0.7, 0.5),
            (0.68, 0.7),
            (0.5, 0.84),
            (0.3, 0.84),
            (0.3, 0.16),
        ])],
        4 => vec![
            line(&[(0.7, 0.16), (0.3, 0.16), (0.3, 0.84), (0.7, 0.84)]),
            line(&[(0.3, 0.5), (0.62, 0.5)]),
        ],
        5 => vec![
            line(&[(0.7, 0.16), (0.3, 0.16), (0.3, 0.84)]),
            line(&[(0.3, 0.5), (0.6, 0.5)]),
        ],
        6 => {
            let mut s = arc(0.52, 0.5, 0.24, 0.34, 315.0, 45.0);
            s.extend([(0.69, 0.55), (0.55, 0.55)]);
            vec![s]
        }
        7 => vec![
            line(&[(0.3, 0.16), (0.3, 0.84)]),
            line(&[(0.7, 0.16), (0.7, 0.84)]),
            line(&[(0.3, 0.5), (0.7, 0.5)]),
        ],
        8 => vec![
            line(&[(0.5, 0.16), (0.5, 0.84)]),
            line(&[(0.38, 0.16), (0.62, 0.16)]),
            line(&[(0.38, 0.84), (0.62, 0.84)]),
        ],
        9 => {
            let mut s = line(&[(0.6, 0.16), (0.6, 0.66)]);
            s.extend(arc(0.45, 0.66, 0.15, 0.18, 0.0, 180.0));
            vec![line(&[(0.4, 0.16), (0.7, 0.16)]), s]
        }
        _ => unreachable!("letter out of range"),
    }
}

fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Renders one sample of `digit` as 784 pixels in `[0, 1]`.
pub fn render_digit(digit: usize, rng: &mut Rng) -> Vec<f64> {
    render(skeleton(digit), rng)
}

/// Renders one sample of letter `letter` (0 = A, ..., 9 = J) like [`render_digit`].
pub fn render_letter(letter: usize, rng: &mut Rng) -> Vec<f64> {
    render(letter_skeleton(letter), rng)
}

fn render(skeleton: Vec<Stroke>, rng: &mut Rng) -> Vec<f64> {
    let angle = 0.18 * rng.normal();
    let (sx, sy) = (rng.uniform_range(0.8, 1.1), rng.uniform_range(0.8, 1.1));
    let shear = 0.2 * rng.normal();
    let (tx, ty) = (0.05 * rng.normal(), 0.05 * rng.normal());
    let (c, s) = (angle.cos(), angle.sin());
    let jitter = 0.035;
    let strokes: Vec<Stroke> = skeleton
        .into_iter()
        .map(|stroke| {
            stroke
                .into_iter()
                .map(|(x, y)| {
                    let (x, y) = (
                        x - 0.5 + jitter * rng.normal(),
                        y - 0.5 + jitter * rng.normal(),
                    );
                    let (x, y) = (sx * (x + shear * y), sy * y);
                    (c * x - s * y + 0.5 + tx, s * x + c * y + 0.5 + ty)
                })
                .collect()
        })
        .collect();
    let pen = rng.uniform_range(0.035, 0.065);
    let edge = 1.0 / DIGIT_SIDE as f64;
    let mut out = Vec::with_capacity(DIGIT_SIDE * DIGIT_SIDE);
    for py in 0..DIGIT_SIDE {
        for px in 0..DIGIT_SIDE {
            let p = (
                (px as f64 + 0.5) / DIGIT_SIDE as f64,
                (py as f64 + 0.5) / DIGIT_SIDE as f64,
            );
            let d = strokes
                .iter()
                .flat_map(|st| st.windows(2).map(|w| seg_dist(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            let v = ((pen - d) / edge + 0.5).clamp(0.0, 1.0);
            out.push((v * 255.0).round() / 255.0);
        }
    }
    out
}

/// `n` digits with labels drawn uniformly from 0..9.
pub fn gen_synthetic_digits(rng: &mut Rng, n: usize) -> Result<LabeledBatch> {
    generate(rng, n, render_digit)
}

/// `n` letters A-J, labeled 0..9 by letter. Out-of-distribution for a digit model: same
/// pen, jitter and affine variation, different glyphs.
pub fn gen_synthetic_letters(rng: &mut Rng, n: usize) -> Result<LabeledBatch> {
    generate(rng, n, render_letter)
}

fn generate(
    rng: &mut Rng,
    n: usize,
    draw: fn(usize, &mut Rng) -> Vec<f64>,
) -> Result<LabeledBatch> {
    if n == 0 {
        return Err(Error::invalid("need at least one image"));
    }
    let mut data = Vec::with_capacity(n * DIGIT_SIDE * DIGIT_SIDE);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.below(DIGIT_CLASSES);
        data.extend(draw(y, rng));
        labels.push(y);
    }
    LabeledBatch::new(Matrix::new(n, DIGIT_SIDE * DIGIT_SIDE, data)?, labels)
}

/// Out-of-distribution copies: each image's pixels independently permuted.
pub fn shuffle_pixels(batch: &LabeledBatch, rng: &mut Rng) -> LabeledBatch {
    let x = batch.points();
    let mut out = x.clone();
    for i in 0..x.rows() {
        let perm = rng.permutation(x.cols());
        let src = x.row(i);
        for (dst, &j) in out.row_mut(i).iter_mut().zip(&perm) {
            *dst = src[j];
        }
    }
    batch.with_points(out).expect("same shape")
}

//! Procedural digit glyphs: fixed stroke skeletons per digit, rendered under a
//! random affine warp with vertex jitter and variable stroke width.

use rand::Rng;

type Stroke = Vec<(f64, f64)>;

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, from: f64, to: f64, steps: usize) -> Stroke {
    (0..=steps)
        .map(|k| {
            let t = from + (to - from) * k as f64 / steps as f64;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Skeletons in unit coordinates, `x` to the right and `y` downwards.
fn skeleton(digit: u8) -> Vec<Stroke> {
    use std::f64::consts::PI;
    match digit {
        0 => vec![ellipse(0.5, 0.5, 0.26, 0.4, 0.0, 2.0 * PI, 20)],
        1 => vec![vec![(0.36, 0.26), (0.52, 0.1), (0.52, 0.9)]],
        2 => vec![vec![(0.26, 0.3), (0.36, 0.14), (0.55, 0.1), (0.72, 0.2), (0.72, 0.38), (0.26, 0.9), (0.78, 0.9)]],
        3 => vec![vec![(0.26, 0.14), (0.72, 0.14), (0.46, 0.44), (0.7, 0.58), (0.72, 0.8), (0.5, 0.92), (0.26, 0.84)]],
        4 => vec![vec![(0.64, 0.9), (0.64, 0.1), (0.22, 0.64), (0.8, 0.64)]],
        5 => vec![vec![
            (0.75, 0.1),
            (0.32, 0.1),
            (0.28, 0.46),
            (0.55, 0.4),
            (0.74, 0.56),
            (0.72, 0.8),
            (0.5, 0.92),
            (0.26, 0.84),
        ]],
        6 => vec![vec![
            (0.7, 0.1),
            (0.42, 0.3),
            (0.28, 0.6),
            (0.34, 0.86),
            (0.58, 0.92),
            (0.72, 0.72),
            (0.6, 0.52),
            (0.36, 0.54),
            (0.28, 0.66),
        ]],
        7 => vec![vec![(0.22, 0.12), (0.78, 0.12), (0.42, 0.9)]],
        8 => vec![
            ellipse(0.5, 0.29, 0.19, 0.18, 0.0, 2.0 * PI, 14),
            ellipse(0.5, 0.69, 0.24, 0.22, 0.0, 2.0 * PI, 16),
        ],
        9 => vec![ellipse(0.5, 0.32, 0.22, 0.2, 0.0, 2.0 * PI, 14), vec![(0.72, 0.32), (0.62, 0.9)]],
        _ => panic!("digit out of range: {digit}"),
    }
}

/// Random rendering parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlyphStyle {
    pub scale: f64,
    pub rotation: f64,
    pub shear: f64,
    pub shift: (f64, f64),
    pub thickness: f64,
    pub intensity: f64,
}

impl GlyphStyle {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        GlyphStyle {
            scale: rng.gen_range(0.8..1.0),
            rotation: rng.gen_range(-0.2..0.2),
            shear: rng.gen_range(-0.15..0.15),
            shift: (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)),
            thickness: rng.gen_range(1.5..2.5),
            intensity: rng.gen_range(0.6..1.0),
        }
    }
}

fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Grey-level glyph in `[0, 1]`, row-major `size x size`.
pub fn render<R: Rng + ?Sized>(digit: u8, size: usize, rng: &mut R) -> Vec<f32> {
    let style = GlyphStyle::sample(rng);
    let side = size as f64;
    let (sin, cos) = style.rotation.sin_cos();
    let strokes: Vec<Stroke> = skeleton(digit)
        .into_iter()
        .map(|stroke| {
            stroke
                .into_iter()
                .map(|(x, y)| {
                    let x = x + rng.gen_range(-0.04..0.04) - 0.5;
                    let y = y + rng.gen_range(-0.04..0.04) - 0.5;
                    let x = x + style.shear * y;
                    let (x, y) = (cos * x - sin * y, sin * x + cos * y);
                    let k = style.scale * side * 0.8;
                    (side / 2.0 + k * x + style.shift.0, side / 2.0 + k * y + style.shift.1)
                })
                .collect()
        })
        .collect();

    let half = style.thickness / 2.0;
    let mut out = vec![0.0f32; size * size];
    for i in 0..size {
        for j in 0..size {
            let p = (j as f64 + 0.5, i as f64 + 0.5);
            let mut d = f64::INFINITY;
            for s in &strokes {
                for w in s.windows(2) {
                    d = d.min(seg_dist(p, w[0], w[1]));
                }
            }
            let cover = (half + 0.5 - d).clamp(0.0, 1.0);
            if cover > 0.0 {
                let v = style.intensity * cover + rng.gen_range(-0.1..0.1) * cover;
                out[i * size + j] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    out
}

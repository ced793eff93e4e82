//! Synthetic 28x28 digit-like glyphs: seven-segment skeletons drawn with random
//! affine jitter, stroke width, intensity and background noise. Stands in for
//! handwritten digits when no IDX files are available.

use rand::Rng as _;

use super::image::ImageDataset;
use crate::rng::Rng;

pub const SIDE: usize = 28;

// segment endpoints in glyph coordinates, x in [-1, 1], y in [-1, 1] (down)
const SEGMENTS: [[(f64, f64); 2]; 7] = [
    [(-1.0, -1.0), (1.0, -1.0)], // top
    [(1.0, -1.0), (1.0, 0.0)],   // upper right
    [(1.0, 0.0), (1.0, 1.0)],    // lower right
    [(-1.0, 1.0), (1.0, 1.0)],   // bottom
    [(-1.0, 0.0), (-1.0, 1.0)],  // lower left
    [(-1.0, -1.0), (-1.0, 0.0)], // upper left
    [(-1.0, 0.0), (1.0, 0.0)],   // middle
];

const DIGITS: [[bool; 7]; 10] = [
    [true, true, true, true, true, true, false],
    [false, true, true, false, false, false, false],
    [true, true, false, true, true, false, true],
    [true, true, true, true, false, false, true],
    [false, true, true, false, false, true, true],
    [true, false, true, true, false, true, true],
    [true, false, true, true, true, true, true],
    [true, true, true, false, false, false, false],
    [true, true, true, true, true, true, true],
    [true, true, true, true, false, true, true],
];

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Render one glyph of class `label` into a 784-pixel row.
pub fn render(label: usize, rng: &mut Rng) -> Vec<f64> {
    let angle = rng.random_range(-0.2..0.2);
    let shear = rng.random_range(-0.25..0.25);
    let sx = rng.random_range(3.2..4.8);
    let sy = rng.random_range(6.5..8.5);
    let cx = 13.5 + rng.random_range(-2.5..2.5);
    let cy = 13.5 + rng.random_range(-2.5..2.5);
    let width = rng.random_range(0.9..2.0);
    let ink = rng.random_range(0.7..1.0);
    let (sin, cos) = f64::sin_cos(angle);
    let place = |(x, y): (f64, f64)| {
        let (x, y) = (x * sx + shear * y * sy, y * sy);
        (cx + cos * x - sin * y, cy + sin * x + cos * y)
    };
    let strokes: Vec<[(f64, f64); 2]> = SEGMENTS
        .iter()
        .zip(DIGITS[label % 10])
        .filter(|(_, on)| *on)
        .map(|(seg, _)| {
            let mut j = || (rng.random_range(-0.12..0.12), rng.random_range(-0.12..0.12));
            let (a, b) = (j(), j());
            [place((seg[0].0 + a.0, seg[0].1 + a.1)), place((seg[1].0 + b.0, seg[1].1 + b.1))]
        })
        .collect();
    let noise = rng.random_range(0.0..0.15);
    let mut pixels = vec![0.0; SIDE * SIDE];
    for (i, px) in pixels.iter_mut().enumerate() {
        let p = ((i % SIDE) as f64, (i / SIDE) as f64);
        let d = strokes.iter().map(|s| segment_distance(p, s[0], s[1])).fold(f64::INFINITY, f64::min);
        let v = ink * (1.0 - (d - width / 2.0)).clamp(0.0, 1.0);
        *px = (v + noise * rng.random::<f64>()).clamp(0.0, 1.0);
    }
    pixels
}

/// `n` glyphs with uniformly drawn labels.
pub fn generate(n: usize, rng: &mut Rng) -> ImageDataset {
    let mut features = Vec::with_capacity(n * SIDE * SIDE);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.random_range(0..10);
        features.extend(render(label, rng));
        labels.push(label);
    }
    ImageDataset::new(features, SIDE * SIDE, labels).expect("rendered pixels lie in [0, 1]")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn glyphs_are_valid_and_seeded() {
        let a = generate(30, &mut seeded(1));
        assert_eq!(a, generate(30, &mut seeded(1)));
        assert_eq!(a.dim(), 784);
        for i in 0..a.len() {
            let ink: f64 = a.example(i).iter().sum();
            assert!(ink > 20.0, "glyph {i} nearly blank");
        }
    }

    #[test]
    fn classes_differ_on_average() {
        let mut rng = seeded(2);
        let mean = |label: usize, rng: &mut Rng| {
            let mut m = vec![0.0; SIDE * SIDE];
            for _ in 0..50 {
                for (a, b) in m.iter_mut().zip(render(label, rng)) {
                    *a += b / 50.0;
                }
            }
            m
        };
        let one = mean(1, &mut rng);
        let eight = mean(8, &mut rng);
        let dist: f64 = one.iter().zip(&eight).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(dist > 10.0, "{dist}");
    }
}

//! Deterministic synthetic shape dataset.
//!
//! Renders one glyph family per class — disk, ring, cross, bars, triangle,
//! checker, X, frame, vertical bars, dot grid — with per-example jitter in
//! position, scale, orientation, stroke thickness, and intensity, so the
//! full pipeline runs with no downloads. The jitter ranges deliberately
//! overlap between look-alike classes (a rotated cross approaches the X, a
//! thick ring approaches the disk), leaving a small band of genuinely
//! ambiguous examples for generators to exploit. Every pixel is a pure
//! function of (seed, class, index).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::LabeledDataset;
use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::seeds;

const MAX_CLASSES: usize = 10;

/// Generate `num_classes × per_class` glyph images of `side × side` pixels.
///
/// `num_classes` must lie in `4..=10` and `side` must be at least 8. The
/// same arguments and seed always produce a bit-identical dataset.
pub fn synth_shapes(
    num_classes: usize,
    per_class: usize,
    side: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if !(4..=MAX_CLASSES).contains(&num_classes) {
        return Err(Error::Parameter(format!(
            "num_classes {num_classes} outside 4..=10"
        )));
    }
    if side < 8 {
        return Err(Error::Parameter(format!("side {side} below minimum 8")));
    }
    if per_class == 0 {
        return Err(Error::Parameter("per_class must be positive".into()));
    }

    let count = num_classes * per_class;
    let mut images = Tensor::zeros(vec![count, side, side, 1]);
    let mut labels = Vec::with_capacity(count);
    let pixels = images.data_mut();
    let d = side * side;

    for class in 0..num_classes {
        for index in 0..per_class {
            let stream = seeds::derive_indexed(seed, "synth", &[class as u64, index as u64]);
            let mut rng = seeds::rng(stream);
            let example = class * per_class + index;
            render(
                class,
                side,
                &mut rng,
                &mut pixels[example * d..(example + 1) * d],
            );
            labels.push(class);
        }
    }
    LabeledDataset::new(images, labels, num_classes)
}

struct Glyph {
    class: usize,
    radius: f64,
    rotation: f64,
    stroke: f64,
    band_radius: f64,
    offset: f64,
    cell: f64,
    checker_phase: bool,
}

fn render(class: usize, side: usize, rng: &mut ChaCha8Rng, out: &mut [Real]) {
    let s = side as f64;
    let cx = s / 2.0 + uniform(rng, -0.14, 0.14) * s;
    let cy = s / 2.0 + uniform(rng, -0.14, 0.14) * s;
    let glyph = Glyph {
        class,
        radius: s * (0.30 + uniform(rng, -0.06, 0.06)),
        rotation: uniform(rng, -0.45, 0.45),
        stroke: uniform(rng, 0.18, 0.32),
        band_radius: uniform(rng, 0.60, 0.88),
        offset: uniform(rng, 0.45, 0.66),
        cell: uniform(rng, 0.40, 0.62),
        checker_phase: rng.random::<bool>(),
    };
    let intensity = 0.55 + uniform(rng, 0.0, 0.45);

    let (sin, cos) = glyph.rotation.sin_cos();
    for py in 0..side {
        for px in 0..side {
            let x0 = px as f64 + 0.5 - cx;
            let y0 = py as f64 + 0.5 - cy;
            let x = cos * x0 + sin * y0;
            let y = -sin * x0 + cos * y0;
            let c = coverage(&glyph, x, y);
            let noise = uniform(rng, 0.0, 0.08);
            out[py * side + px] = ((intensity * c + noise).clamp(0.0, 1.0)) as Real;
        }
    }
}

/// Fractional coverage of the glyph at rotated offset (x, y) from its
/// center, via a one-pixel soft edge on the signed distance.
fn coverage(glyph: &Glyph, x: f64, y: f64) -> f64 {
    let r = glyph.radius;
    let d = match glyph.class {
        // Filled disk.
        0 => len(x, y) - r,
        // Annulus; at its thickest it closes in on the disk.
        1 => (len(x, y) - r * glyph.band_radius).abs() - r * glyph.stroke,
        // Upright cross; under rotation it drifts toward the X.
        2 => cross_sdf(x, y, r, r * glyph.stroke),
        // Two horizontal bars.
        3 => {
            let t = r * glyph.stroke;
            let off = r * glyph.offset;
            box_sdf(x, y - off, r, t).min(box_sdf(x, y + off, r, t))
        }
        // Filled upward triangle.
        4 => triangle_sdf(x, y, r),
        // Checkerboard patch; parity handled below.
        5 => box_sdf(x, y, r, r),
        // Diagonal X: the cross rotated a further 45°.
        6 => {
            let inv = std::f64::consts::FRAC_1_SQRT_2;
            let (rx, ry) = (inv * (x + y), inv * (y - x));
            cross_sdf(rx, ry, r * 1.1, r * glyph.stroke)
        }
        // Square frame.
        7 => box_sdf(x, y, r, r).abs() - r * glyph.stroke,
        // Two vertical bars.
        8 => {
            let t = r * glyph.stroke;
            let off = r * glyph.offset;
            box_sdf(x - off, y, t, r).min(box_sdf(x + off, y, t, r))
        }
        // Four-dot grid.
        9 => {
            let off = r * glyph.offset;
            let dot = r * (glyph.stroke + 0.12);
            let mut best = f64::INFINITY;
            for sx in [-1.0, 1.0] {
                for sy in [-1.0, 1.0] {
                    best = best.min(len(x - sx * off, y - sy * off) - dot);
                }
            }
            best
        }
        _ => unreachable!("class count validated at entry"),
    };
    let mut c = (0.5 - d).clamp(0.0, 1.0);
    if glyph.class == 5 && c > 0.0 {
        let cell = (r * glyph.cell).max(1.0);
        let parity = ((x.div_euclid(cell) + y.div_euclid(cell)) as i64).rem_euclid(2) == 0;
        if parity == glyph.checker_phase {
            c = 0.0;
        }
    }
    c
}

fn len(x: f64, y: f64) -> f64 {
    x.hypot(y)
}

fn cross_sdf(x: f64, y: f64, arm: f64, thickness: f64) -> f64 {
    box_sdf(x, y, arm, thickness).min(box_sdf(x, y, thickness, arm))
}

/// Signed distance to an axis-aligned box of half-extents (hx, hy);
/// negative inside.
fn box_sdf(x: f64, y: f64, hx: f64, hy: f64) -> f64 {
    let dx = x.abs() - hx;
    let dy = y.abs() - hy;
    let outside = len(dx.max(0.0), dy.max(0.0));
    outside + dx.max(dy).min(0.0)
}

/// Signed distance to an upward triangle, exact inside, rounded at external
/// corners (fine for soft-edge rendering).
fn triangle_sdf(x: f64, y: f64, r: f64) -> f64 {
    let apex = (0.0, -r);
    let left = (-0.95 * r, 0.75 * r);
    let right = (0.95 * r, 0.75 * r);
    let e0 = edge_distance(x, y, apex, right);
    let e1 = edge_distance(x, y, right, left);
    let e2 = edge_distance(x, y, left, apex);
    e0.max(e1).max(e2)
}

/// Signed distance to the line through a→b; positive on the outward side of
/// a counterclockwise polygon.
fn edge_distance(x: f64, y: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (ex, ey) = (b.0 - a.0, b.1 - a.1);
    let norm = len(ex, ey);
    ((x - a.0) * ey - (y - a.1) * ex) / norm
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + rng.random::<f64>() * (hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_gives_bit_identical_datasets() {
        let a = synth_shapes(5, 20, 16, 77).unwrap();
        let b = synth_shapes(5, 20, 16, 77).unwrap();
        assert_eq!(a.images().data(), b.images().data());
        assert_eq!(a.labels(), b.labels());
        let c = synth_shapes(5, 20, 16, 78).unwrap();
        assert_ne!(a.images().data(), c.images().data());
    }

    #[test]
    fn counts_and_balance() {
        let ds = synth_shapes(5, 100, 16, 1).unwrap();
        assert_eq!(ds.len(), 500);
        for class in 0..5 {
            assert_eq!(ds.labels().iter().filter(|&&l| l == class).count(), 100);
        }
    }

    #[test]
    fn unsupported_class_counts_are_rejected() {
        assert!(matches!(
            synth_shapes(3, 10, 16, 0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            synth_shapes(11, 10, 16, 0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            synth_shapes(5, 10, 7, 0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn class_prototypes_differ_on_average() {
        let per_class = 40;
        let ds = synth_shapes(10, per_class, 16, 5).unwrap();
        let d = ds.input_dim();
        // Per-class mean images; pairwise distances must clear the jitter
        // floor even though individual examples may be ambiguous.
        let mut means = vec![vec![0.0; d]; 10];
        for i in 0..ds.len() {
            let class = ds.label(i);
            for (m, v) in means[class].iter_mut().zip(ds.image(i)) {
                *m += v / per_class as Real;
            }
        }
        for a in 0..10 {
            for b in (a + 1)..10 {
                let dist: Real = means[a]
                    .iter()
                    .zip(&means[b])
                    .map(|(x, y)| (x - y).abs())
                    .sum::<Real>()
                    / d as Real;
                assert!(dist > 0.015, "classes {a} and {b} too similar: {dist}");
            }
        }
    }
}

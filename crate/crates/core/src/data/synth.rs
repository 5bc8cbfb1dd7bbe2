//! Procedural RGB-D scenes.
//!
//! Depth is piecewise constant over random ellipses and convex polygons. Each region gets
//! its own colour, so every depth edge is also a colour edge; stripes and translucent
//! decals add colour edges with no depth counterpart.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Minimum L1 distance between region colours.
const COLOUR_SEPARATION: f64 = 0.6;
const STRIPE_AMPLITUDE: f64 = 0.04;
const DECAL_OPACITY: f64 = 0.5;

enum Shape {
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        angle: f64,
    },
    /// Counter-clockwise convex polygon.
    Polygon(Vec<(f64, f64)>),
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, size: f64) -> Shape {
        let cx = rng.random_range(0.1..0.9) * size;
        let cy = rng.random_range(0.1..0.9) * size;
        let r = rng.random_range(0.1..0.3) * size;
        if rng.random_bool(0.5) {
            Shape::Ellipse {
                cx,
                cy,
                rx: r,
                ry: r * rng.random_range(0.4..1.0),
                angle: rng.random_range(0.0..std::f64::consts::PI),
            }
        } else {
            let n = rng.random_range(3..=6);
            let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            angles.sort_by(f64::total_cmp);
            Shape::Polygon(
                angles
                    .into_iter()
                    .map(|a| {
                        let rr = r * rng.random_range(0.7..1.0);
                        (cx + rr * a.cos(), cy + rr * a.sin())
                    })
                    .collect(),
            )
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Ellipse { cx, cy, rx, ry, angle } => {
                let (dx, dy) = (x - cx, y - cy);
                let (s, c) = angle.sin_cos();
                let u = (c * dx + s * dy) / rx;
                let v = (-s * dx + c * dy) / ry;
                u * u + v * v <= 1.0
            }
            Shape::Polygon(pts) => (0..pts.len()).all(|i| {
                let (x0, y0) = pts[i];
                let (x1, y1) = pts[(i + 1) % pts.len()];
                (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) >= 0.0
            }),
        }
    }
}

fn distinct_colour(rng: &mut ChaCha8Rng, used: &[[f64; 3]]) -> [f64; 3] {
    let mut best = [0.5; 3];
    let mut best_d = -1.0;
    for _ in 0..200 {
        let c = [
            rng.random_range(0.15..0.85),
            rng.random_range(0.15..0.85),
            rng.random_range(0.15..0.85),
        ];
        let d = used
            .iter()
            .map(|u| (0..3).map(|k| (u[k] - c[k]).abs()).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if d >= COLOUR_SEPARATION {
            return c;
        }
        if d > best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// One scene as (`3 x size x size` RGB in `[0, 1]`, `1 x size x size` depth in `[0.1, 1]`).
pub fn make_scene<T: Scalar>(size: usize, rng: &mut ChaCha8Rng) -> (Tensor<T>, Tensor<T>) {
    let sz = size as f64;
    let n_shapes = rng.random_range(3..=6);
    let mut depths = vec![rng.random_range(0.6..1.0)];
    let mut colours = vec![distinct_colour(rng, &[])];
    let mut labels = vec![0usize; size * size];
    for label in 1..=n_shapes {
        let shape = Shape::random(rng, sz);
        depths.push(rng.random_range(0.1..0.9));
        let c = distinct_colour(rng, &colours);
        colours.push(c);
        for y in 0..size {
            for x in 0..size {
                if shape.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    labels[y * size + x] = label;
                }
            }
        }
    }
    let stripes: Vec<Option<(f64, f64, f64)>> = (0..=n_shapes)
        .map(|_| {
            rng.random_bool(0.5).then(|| {
                let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
                (a.cos(), a.sin(), rng.random_range(4.0..9.0))
            })
        })
        .collect();
    let plane = size * size;
    let mut rgb = vec![0.0f64; 3 * plane];
    let mut depth = vec![0.0f64; plane];
    for y in 0..size {
        for x in 0..size {
            let i = y * size + x;
            let l = labels[i];
            depth[i] = depths[l];
            let offset = stripes[l].map_or(0.0, |(c, s, period)| {
                let phase = (x as f64 * c + y as f64 * s) / period;
                if phase.rem_euclid(1.0) < 0.5 {
                    STRIPE_AMPLITUDE
                } else {
                    -STRIPE_AMPLITUDE
                }
            });
            for k in 0..3 {
                rgb[k * plane + i] = colours[l][k] + offset;
            }
        }
    }
    for _ in 0..rng.random_range(1..=2) {
        let w = rng.random_range(0.1..0.3) * sz;
        let h = rng.random_range(0.1..0.3) * sz;
        let x0 = rng.random_range(0.0..sz - w);
        let y0 = rng.random_range(0.0..sz - h);
        let c = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        for y in (y0 as usize)..((y0 + h) as usize).min(size) {
            for x in (x0 as usize)..((x0 + w) as usize).min(size) {
                for k in 0..3 {
                    let v = &mut rgb[k * plane + y * size + x];
                    *v = (1.0 - DECAL_OPACITY) * *v + DECAL_OPACITY * c[k];
                }
            }
        }
    }
    (
        Tensor::from_fn(&[3, size, size], |i| T::lit(rgb[i].clamp(0.0, 1.0))),
        Tensor::from_fn(&[1, size, size], |i| T::lit(depth[i])),
    )
}

/// `n` scenes; scene `i` depends only on `(seed, i)`.
pub fn make_synthetic_dataset<T: Scalar>(n: usize, size: usize, seed: u64) -> Vec<(Tensor<T>, Tensor<T>)> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            make_scene(size, &mut rng)
        })
        .collect()
}

/// Step edge (`low` left, `high` right) under a checkerboard of `cell`-pixel squares
/// with the given amplitude.
pub fn make_textured_step<T: Scalar>(size: usize, cell: usize, amplitude: f64, low: f64, high: f64) -> Tensor<T> {
    let cell = cell.max(1);
    Tensor::from_fn(&[1, size, size], |i| {
        let (y, x) = (i / size, i % size);
        let base = if x < size / 2 { low } else { high };
        let sign = if (x / cell + y / cell).is_multiple_of(2) { 1.0 } else { -1.0 };
        T::lit(base + sign * amplitude)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset() {
        assert!(make_synthetic_dataset::<f32>(0, 32, 1).is_empty());
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let a = make_synthetic_dataset::<f32>(3, 40, 9);
        let b = make_synthetic_dataset::<f32>(5, 40, 9);
        for i in 0..3 {
            assert_eq!(a[i].0, b[i].0);
            assert_eq!(a[i].1, b[i].1);
        }
        let c = make_synthetic_dataset::<f32>(3, 40, 10);
        assert_ne!(a[0].1, c[0].1);
    }

    #[test]
    fn depth_edges_are_colour_edges() {
        for (rgb, depth) in make_synthetic_dataset::<f64>(12, 48, 3) {
            let s = 48;
            let colour = |y: usize, x: usize| [rgb.at3(0, y, x), rgb.at3(1, y, x), rgb.at3(2, y, x)];
            for y in 0..s {
                for x in 0..s {
                    for (ny, nx) in [(y + 1, x), (y, x + 1)] {
                        if ny >= s || nx >= s || depth.at3(0, y, x) == depth.at3(0, ny, nx) {
                            continue;
                        }
                        let (a, b) = (colour(y, x), colour(ny, nx));
                        let d: f64 = (0..3).map(|k| (a[k] - b[k]).abs()).sum();
                        assert!(d > 0.1, "depth edge at ({y},{x}) has colour step {d}");
                    }
                }
            }
        }
    }

    #[test]
    fn value_ranges() {
        for (rgb, depth) in make_synthetic_dataset::<f32>(6, 32, 4) {
            assert!(rgb.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(depth.data().iter().all(|&v| (0.1..=1.0).contains(&v)));
        }
    }

    #[test]
    fn guidance_has_edges_without_depth_edges() {
        let data = make_synthetic_dataset::<f64>(8, 48, 5);
        let extra: usize = data
            .iter()
            .map(|(rgb, depth)| {
                (0..48 * 47)
                    .filter(|&i| {
                        let (y, x) = (i / 47, i % 47);
                        depth.at3(0, y, x) == depth.at3(0, y, x + 1)
                            && (rgb.at3(0, y, x) - rgb.at3(0, y, x + 1)).abs() > 0.05
                    })
                    .count()
            })
            .sum();
        assert!(extra > 0);
    }
}

//! Seeded synthetic images and planted assignments for tests, benchmarks and
//! demos.
//!
//! Scenes are smooth colour fields with soft blobs, a horizon band and a few
//! hard-edged shapes, so that both the colour statistics and the texture
//! energies of the builtin descriptor are exercised.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::params::{Assignment, ParamKind, Value};
use crate::transforms::{ImageBuf, PhotoChain};

/// Side length used by the acceptance fixtures.
pub const FIXTURE_SIDE: usize = 128;

struct Blob {
    cx: f64,
    cy: f64,
    radius: f64,
    color: [f64; 3],
}

struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    color: [f64; 3],
}

fn palette_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let base: f64 = rng.random_range(0.15..0.85);
    [0, 1, 2].map(|_| (base + rng.random_range(-0.25..0.25)).clamp(0.02, 0.98))
}

/// A deterministic `width x height` scene for `seed`.
pub fn scene(seed: u64, width: usize, height: usize) -> ImageBuf {
    scene_with_layout(seed, seed, width, height)
}

/// A scene whose palette comes from `palette_seed` and whose geometry
/// (horizon, waves, blob and shape placement, grain) comes from
/// `layout_seed`. Two layouts under one palette share lighting and colour
/// scheme but not content.
pub fn scene_with_layout(palette_seed: u64, layout_seed: u64, width: usize, height: usize) -> ImageBuf {
    let mut pal = ChaCha8Rng::seed_from_u64(palette_seed ^ 0x5eed_5eed);
    let sky = palette_color(&mut pal);
    let ground = palette_color(&mut pal);
    let blob_colors: Vec<[f64; 3]> = (0..5).map(|_| palette_color(&mut pal)).collect();
    let rect_colors: Vec<[f64; 3]> = (0..3).map(|_| palette_color(&mut pal)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(layout_seed ^ 0x1a70_0075);
    let horizon: f64 = rng.random_range(0.35..0.65);
    let tilt: f64 = rng.random_range(-0.15..0.15);
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(2.0..9.0),
                rng.random_range(2.0..9.0),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.02..0.07),
            )
        })
        .collect();
    let blobs: Vec<Blob> = blob_colors
        .into_iter()
        .map(|color| Blob {
            cx: rng.random(),
            cy: rng.random(),
            radius: rng.random_range(0.06..0.22),
            color,
        })
        .collect();
    let rects: Vec<Rect> = rect_colors
        .into_iter()
        .map(|color| {
            let x0: f64 = rng.random_range(0.0..0.8);
            let y0: f64 = rng.random_range(0.0..0.8);
            Rect {
                x0,
                y0,
                x1: x0 + rng.random_range(0.08..0.25),
                y1: y0 + rng.random_range(0.08..0.25),
                color,
            }
        })
        .collect();
    let grain_seed: u64 = rng.random();

    let mut grain = ChaCha8Rng::seed_from_u64(grain_seed);
    ImageBuf::from_fn(width, height, |x, y| {
        let u = (x as f64 + 0.5) / width as f64;
        let v = (y as f64 + 0.5) / height as f64;
        let t = ((v - horizon - tilt * (u - 0.5)) * 12.0).tanh() * 0.5 + 0.5;
        let mut p = [0, 1, 2].map(|i| sky[i] * (1.0 - t) + ground[i] * t);
        for (fx, fy, phase, amp) in &waves {
            let w = amp * (fx * u * std::f64::consts::TAU + fy * v * 3.0 + phase).sin();
            p = p.map(|c| c + w);
        }
        for b in &blobs {
            let d2 = ((u - b.cx).powi(2) + (v - b.cy).powi(2)) / (b.radius * b.radius);
            let a = (-d2).exp() * 0.8;
            p = [0, 1, 2].map(|i| p[i] * (1.0 - a) + b.color[i] * a);
        }
        for r in &rects {
            if u >= r.x0 && u < r.x1 && v >= r.y0 && v < r.y1 {
                p = r.color;
            }
        }
        let n: f64 = grain.random_range(-0.03..0.03);
        p.map(|c| c + n)
    })
    .expect("scene dimensions are positive")
}

/// Per-pixel uniform noise, used where a texture-free statistical image is wanted.
pub fn noise(seed: u64, width: usize, height: usize) -> ImageBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageBuf::from_fn(width, height, |_, _| [rng.random(), rng.random(), rng.random()])
        .expect("noise dimensions are positive")
}

/// Draws a planted assignment for the builtin chain: a non-`none` filter at
/// strength in `[0.3, 1]`, a vignette in `[0.2, 0.8]`, and every signed
/// adjustment uniform in `[-0.5, 0.5]`.
pub fn planted_assignment(seed: u64) -> Assignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x91a7_7ed0);
    let chain = PhotoChain::builtin();
    let mut a = Assignment::default();
    for spec in chain.space().specs() {
        let value = match (spec.name.as_str(), &spec.kind) {
            ("filter", ParamKind::Categorical { choices }) => {
                Value::Choice(choices[rng.random_range(1..choices.len())].clone())
            }
            ("filter_strength", _) => Value::Real(rng.random_range(0.3..=1.0)),
            ("vignette", _) => Value::Real(rng.random_range(0.2..=0.8)),
            _ => Value::Real(rng.random_range(-0.5..=0.5)),
        };
        a.set(spec.name.clone(), value);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_distinct() {
        assert_eq!(scene(3, 32, 24), scene(3, 32, 24));
        assert_ne!(scene(3, 32, 24), scene(4, 32, 24));
        let a = planted_assignment(9);
        assert_eq!(a, planted_assignment(9));
        assert!(PhotoChain::builtin().space().validate(&a).is_empty());
        assert_ne!(a.get("filter"), Some(&Value::Choice("none".into())));
        assert!(a.real("vignette") > 0.0 && a.real("filter_strength") > 0.0);
    }
}

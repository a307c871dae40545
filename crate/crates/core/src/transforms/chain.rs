use std::sync::OnceLock;

use crate::params::{describe_violations, Assignment, ParamSpace, ParamSpec, Value};

use super::image::{clamp01, luma, ImageBuf};
use super::presets::{FilterPreset, PresetSet};
use super::TransformError;

/// Stage names in application order, each paired with its parameter.
pub const STAGES: [&str; 8] = [
    "filter",
    "temperature",
    "tint",
    "brightness",
    "contrast",
    "saturation",
    "gamma",
    "vignette",
];

/// Channel skew at temperature or tint of +-1.
const SKEW: f64 = 0.2;

/// The fixed eight-stage photo chain over a preset set.
#[derive(Debug, Clone)]
pub struct PhotoChain {
    presets: PresetSet,
    space: ParamSpace,
}

impl PhotoChain {
    pub fn new(presets: PresetSet) -> Self {
        let zero = || Value::Real(0.0);
        let signed = |name: &str| ParamSpec::continuous(name, -1.0, 1.0).with_identity(zero());
        let space = ParamSpace::new(vec![
            ParamSpec::categorical("filter", presets.names()).with_identity(Value::Choice("none".into())),
            ParamSpec::continuous("filter_strength", 0.0, 1.0).with_identity(zero()),
            signed("temperature"),
            signed("tint"),
            signed("brightness"),
            signed("contrast"),
            signed("saturation"),
            signed("gamma"),
            ParamSpec::continuous("vignette", 0.0, 1.0).with_identity(zero()),
        ])
        .expect("photo space is valid");
        PhotoChain { presets, space }
    }

    /// The chain over the bundled presets.
    pub fn builtin() -> &'static PhotoChain {
        static CHAIN: OnceLock<PhotoChain> = OnceLock::new();
        CHAIN.get_or_init(|| PhotoChain::new(PresetSet::bundled()))
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn presets(&self) -> &PresetSet {
        &self.presets
    }

    pub fn apply(&self, x: &ImageBuf, a: &Assignment) -> Result<ImageBuf, TransformError> {
        let violations = self.space.validate(a);
        if !violations.is_empty() {
            return Err(TransformError::InvalidAssignment(describe_violations(&violations)));
        }
        let filter = a.get("filter").and_then(Value::as_choice).expect("validated");
        let params = StageParams {
            filter: self.presets.get(filter).expect("validated"),
            filter_strength: a.real("filter_strength"),
            temperature: a.real("temperature"),
            tint: a.real("tint"),
            brightness: a.real("brightness"),
            contrast: a.real("contrast"),
            saturation: a.real("saturation"),
            gamma: a.real("gamma"),
            vignette: a.real("vignette"),
        };
        let mut out = x.clone();
        params.run(&mut out);
        Ok(out)
    }
}

struct StageParams<'a> {
    filter: &'a FilterPreset,
    filter_strength: f64,
    temperature: f64,
    tint: f64,
    brightness: f64,
    contrast: f64,
    saturation: f64,
    gamma: f64,
    vignette: f64,
}

fn per_pixel(img: &mut ImageBuf, f: impl Fn([f64; 3]) -> [f64; 3]) {
    for p in img.pixels_mut() {
        *p = f(*p).map(clamp01);
    }
}

impl StageParams<'_> {
    // A stage at its identity value is skipped so the identity assignment
    // reproduces the input exactly.
    fn run(&self, img: &mut ImageBuf) {
        let s = self.filter_strength;
        if s != 0.0 && !self.filter.is_identity() {
            per_pixel(img, |p| {
                let f = self.filter.apply(p);
                [0, 1, 2].map(|i| (1.0 - s) * p[i] + s * f[i])
            });
        }
        let t = self.temperature;
        if t != 0.0 {
            per_pixel(img, |[r, g, b]| [r * (1.0 + SKEW * t), g, b * (1.0 - SKEW * t)]);
        }
        let tint = self.tint;
        if tint != 0.0 {
            per_pixel(img, |[r, g, b]| [r, g * (1.0 + SKEW * tint), b]);
        }
        let br = self.brightness;
        if br != 0.0 {
            per_pixel(img, |p| p.map(|v| v + 0.5 * br));
        }
        let c = self.contrast;
        if c != 0.0 {
            per_pixel(img, |p| p.map(|v| (v - 0.5) * (1.0 + c) + 0.5));
        }
        let sat = self.saturation;
        if sat != 0.0 {
            per_pixel(img, |p| {
                let l = luma(p);
                p.map(|v| l + (v - l) * (1.0 + sat))
            });
        }
        let g = self.gamma;
        if g != 0.0 {
            let exponent = 2f64.powf(g);
            per_pixel(img, |p| p.map(|v| v.powf(exponent)));
        }
        let v = self.vignette;
        if v != 0.0 {
            apply_vignette(img, v);
        }
    }
}

/// Multiplies by `1 - v * min(1, d^2)`, `d` being the distance from the image
/// centre scaled so the corner pixel centres sit at `d = 1`.
fn apply_vignette(img: &mut ImageBuf, v: f64) {
    let (w, h) = (img.width(), img.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let r2 = cx * cx + cy * cy;
    for y in 0..h {
        for x in 0..w {
            let d2 = if r2 == 0.0 {
                0.0
            } else {
                ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / r2
            };
            let factor = 1.0 - v * d2.min(1.0);
            let p = &mut img.pixels_mut()[y * w + x];
            *p = p.map(|c| clamp01(c * factor));
        }
    }
}

/// The parameter space of the builtin chain.
pub fn builtin_space() -> ParamSpace {
    PhotoChain::builtin().space().clone()
}

/// Applies the builtin chain.
pub fn apply_chain(x: &ImageBuf, a: &Assignment) -> Result<ImageBuf, TransformError> {
    PhotoChain::builtin().apply(x, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ParamKind, Value};

    fn identity() -> Assignment {
        builtin_space().identity_assignment().unwrap()
    }

    fn with(name: &str, v: f64) -> Assignment {
        let mut a = identity();
        a.set(name, Value::Real(v));
        a
    }

    fn gradient(w: usize, h: usize) -> ImageBuf {
        ImageBuf::from_fn(w, h, |x, y| {
            [x as f64 / (w - 1) as f64, y as f64 / (h - 1) as f64, ((x + y) % 7) as f64 / 6.0]
        })
        .unwrap()
    }

    fn uniform(v: f64) -> ImageBuf {
        ImageBuf::filled(9, 7, [v; 3]).unwrap()
    }

    #[test]
    fn space_shape() {
        let space = builtin_space();
        assert_eq!(space.len(), 9);
        let cats = space
            .specs()
            .iter()
            .filter(|s| matches!(s.kind, ParamKind::Categorical { .. }))
            .count();
        assert_eq!(cats, 1);
        match &space.get("filter").unwrap().kind {
            ParamKind::Categorical { choices } => assert_eq!(choices.len(), 8),
            _ => unreachable!(),
        }
        let names: Vec<_> = space.specs().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "filter",
                "filter_strength",
                "temperature",
                "tint",
                "brightness",
                "contrast",
                "saturation",
                "gamma",
                "vignette"
            ]
        );
    }

    #[test]
    fn identity_is_bit_exact() {
        let x = gradient(13, 11);
        assert_eq!(apply_chain(&x, &identity()).unwrap(), x);
        // a non-identity preset at zero strength is also a no-op
        let mut a = identity();
        a.set("filter", Value::Choice("vivid".into()));
        assert_eq!(apply_chain(&x, &a).unwrap(), x);
    }

    #[test]
    fn none_preset_is_identity_at_any_strength() {
        let x = gradient(8, 8);
        assert_eq!(apply_chain(&x, &with("filter_strength", 0.7)).unwrap(), x);
    }

    #[test]
    fn brightness_on_gray() {
        let out = apply_chain(&uniform(0.5), &with("brightness", 1.0)).unwrap();
        assert!(out.pixels().iter().flatten().all(|&v| v == 1.0));
    }

    #[test]
    fn full_negative_contrast_flattens() {
        let out = apply_chain(&gradient(10, 6), &with("contrast", -1.0)).unwrap();
        assert!(out.pixels().iter().flatten().all(|&v| v == 0.5));
    }

    #[test]
    fn vignette_keeps_centre() {
        let x = gradient(9, 7);
        let out = apply_chain(&x, &with("vignette", 0.7)).unwrap();
        assert_eq!(out.get(4, 3), x.get(4, 3));
        // corners get the full factor 1 - v
        let c = x.get(8, 6);
        let o = out.get(8, 6);
        for i in 0..3 {
            assert!((o[i] - c[i] * 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_squares() {
        let out = apply_chain(&uniform(0.25), &with("gamma", 1.0)).unwrap();
        assert!(out.pixels().iter().flatten().all(|&v| v == 0.0625));
    }

    #[test]
    fn temperature_tint_saturation_formulas() {
        let x = ImageBuf::filled(3, 3, [0.5, 0.4, 0.3]).unwrap();
        let p = apply_chain(&x, &with("temperature", 0.5)).unwrap().get(1, 1);
        assert!((p[0] - 0.55).abs() < 1e-15 && p[1] == 0.4 && (p[2] - 0.27).abs() < 1e-15);
        let p = apply_chain(&x, &with("tint", -1.0)).unwrap().get(1, 1);
        assert!(p[0] == 0.5 && (p[1] - 0.32).abs() < 1e-15 && p[2] == 0.3);
        let p = apply_chain(&x, &with("saturation", -1.0)).unwrap().get(1, 1);
        let l = 0.299 * 0.5 + 0.587 * 0.4 + 0.114 * 0.3;
        assert!(p.iter().all(|v| (v - l).abs() < 1e-15));
    }

    #[test]
    fn filter_blend() {
        let x = gradient(5, 5);
        let mut a = identity();
        a.set("filter", Value::Choice("mono".into()));
        a.set("filter_strength", Value::Real(1.0));
        let out = apply_chain(&x, &a).unwrap();
        for p in out.pixels() {
            assert!((p[0] - p[1]).abs() < 1e-12 && (p[1] - p[2]).abs() < 1e-12);
        }
        a.set("filter_strength", Value::Real(0.5));
        let half = apply_chain(&x, &a).unwrap();
        let preset = PhotoChain::builtin().presets().get("mono").unwrap();
        for (src, got) in x.pixels().iter().zip(half.pixels()) {
            let f = preset.apply(*src);
            for i in 0..3 {
                assert!((got[i] - (0.5 * src[i] + 0.5 * f[i])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn invalid_assignment_is_rejected() {
        let x = uniform(0.5);
        assert!(matches!(
            apply_chain(&x, &with("brightness", 2.0)),
            Err(TransformError::InvalidAssignment(_))
        ));
        let mut a = identity();
        a.remove("gamma");
        assert!(apply_chain(&x, &a).is_err());
    }

    #[test]
    fn single_pixel_vignette() {
        let x = ImageBuf::filled(1, 1, [0.8; 3]).unwrap();
        assert_eq!(apply_chain(&x, &with("vignette", 1.0)).unwrap(), x);
    }
}

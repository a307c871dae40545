//! Filter presets: a 3x3 channel-mixing matrix followed by per-channel
//! monotone tone curves.

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::image::clamp01;
use super::TransformError;

/// The preset file shipped with the crate.
pub const BUNDLED_PRESETS: &str = include_str!("../../data/filters-v1.json");

/// Monotone piecewise-cubic curve through control points on `[0, 1]`.
///
/// Tangents follow the PCHIP (Fritsch-Butland) rule, so the curve never
/// overshoots its control points.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneCurve {
    xs: Vec<f64>,
    ys: Vec<f64>,
    tangents: Vec<f64>,
    identity: bool,
}

impl ToneCurve {
    pub fn new(points: &[[f64; 2]]) -> Result<Self, String> {
        if points.len() < 2 {
            return Err("a curve needs at least two control points".into());
        }
        let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        if xs[0] != 0.0 || *xs.last().expect("non-empty") != 1.0 {
            return Err("curve endpoints must sit at x = 0 and x = 1".into());
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err("control point x values must be strictly increasing".into());
        }
        if ys.windows(2).any(|w| w[1] < w[0]) {
            return Err("control point y values must be non-decreasing".into());
        }
        if ys.iter().any(|y| !(0.0..=1.0).contains(y)) {
            return Err("control point y values must lie in [0, 1]".into());
        }
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut tangents = vec![0.0; n];
        tangents[0] = delta[0];
        tangents[n - 1] = delta[n - 2];
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                tangents[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        let identity = points == [[0.0, 0.0], [1.0, 1.0]];
        Ok(ToneCurve { xs, ys, tangents, identity })
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.identity {
            return x;
        }
        let x = clamp01(x);
        let k = match self.xs.iter().rposition(|&xk| xk <= x) {
            Some(k) if k + 1 < self.xs.len() => k,
            _ => self.xs.len() - 2,
        };
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        clamp01(
            h00 * self.ys[k] + h10 * h * self.tangents[k] + h01 * self.ys[k + 1] + h11 * h * self.tangents[k + 1],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterPreset {
    name: String,
    mix: [[f64; 3]; 3],
    curves: [ToneCurve; 3],
}

const IDENTITY_MIX: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

impl FilterPreset {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// True when the preset maps every pixel to itself.
    pub fn is_identity(&self) -> bool {
        self.mix == IDENTITY_MIX && self.curves.iter().all(ToneCurve::is_identity)
    }

    /// Mix matrix, clamp, then tone curves.
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.mix;
        let mixed = [0, 1, 2].map(|i| clamp01(m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2]));
        [0, 1, 2].map(|i| self.curves[i].eval(mixed[i]))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetFile {
    version: u32,
    presets: Vec<PresetEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetEntry {
    name: String,
    mix: [[f64; 3]; 3],
    curves: CurveEntry,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveEntry {
    r: Vec<[f64; 2]>,
    g: Vec<[f64; 2]>,
    b: Vec<[f64; 2]>,
}

/// A versioned, ordered collection of presets whose first entry is `none`.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetSet {
    version: u32,
    presets: Vec<FilterPreset>,
    sha256: String,
}

impl PresetSet {
    pub fn bundled() -> Self {
        PresetSet::from_json(BUNDLED_PRESETS).expect("bundled presets are valid")
    }

    pub fn from_json(text: &str) -> Result<Self, TransformError> {
        let bad = |m: String| TransformError::Presets(m);
        let file: PresetFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let mut presets = Vec::with_capacity(file.presets.len());
        for entry in file.presets {
            let curve = |pts: &[[f64; 2]]| ToneCurve::new(pts).map_err(|m| bad(format!("preset '{}': {m}", entry.name)));
            let preset = FilterPreset {
                curves: [curve(&entry.curves.r)?, curve(&entry.curves.g)?, curve(&entry.curves.b)?],
                name: entry.name,
                mix: entry.mix,
            };
            if presets.iter().any(|p: &FilterPreset| p.name == preset.name) {
                return Err(bad(format!("duplicate preset '{}'", preset.name)));
            }
            presets.push(preset);
        }
        match presets.first() {
            Some(p) if p.name == "none" && p.is_identity() => {}
            _ => return Err(bad("the first preset must be an identity preset named 'none'".into())),
        }
        Ok(PresetSet {
            version: file.version,
            presets,
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// Hex SHA-256 of the preset file text.
    pub fn sha256(&self) -> &str {
        &self.sha256
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.presets.iter().map(FilterPreset::name)
    }

    pub fn get(&self, name: &str) -> Option<&FilterPreset> {
        self.presets.iter().find(|p| p.name == name)
    }

    pub fn len(&self) -> usize {
        self.presets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.presets.is_empty()
    }
}

//! Style descriptors and distances.
//!
//! The builtin descriptor is a 30-vector of global image statistics:
//!
//! | slots  | content                                                         |
//! |--------|-----------------------------------------------------------------|
//! | 0..3   | per-channel mean (R, G, B)                                      |
//! | 3..6   | per-channel standard deviation                                  |
//! | 6..9   | per-channel skewness (0 for a constant channel)                 |
//! | 9..25  | 16-bin luma histogram over `[0, 1]`, normalized to sum 1        |
//! | 25..27 | mean and standard deviation of per-pixel `max - min` channel    |
//! | 27..30 | mean absolute Sobel-x, Sobel-y and Laplacian response of luma   |
//!
//! Moments are population moments. All sums are correctly rounded, which
//! makes the first three blocks exactly invariant under any rearrangement of
//! pixels and under 2x pixel-replication upsampling, and the whole vector
//! exactly invariant under horizontal and vertical flips.

mod exact_sum;

use serde::{Deserialize, Serialize};

use crate::transforms::{luma, ImageBuf};

pub use exact_sum::exact_sum;

/// Identifier of the builtin descriptor.
pub const BUILTIN_METRIC_ID: &str = "builtin-stats/1";
/// Length of the builtin descriptor.
pub const BUILTIN_DIM: usize = 30;
pub const HIST_BINS: usize = 16;
/// Slot range of the luma histogram.
pub const HIST_RANGE: std::ops::Range<usize> = 9..25;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("image is {0}x{1}; the builtin descriptor needs at least 3x3")]
    TooSmall(usize, usize),
    #[error("descriptors come from different metrics ('{0}' vs '{1}')")]
    MetricMismatch(String, String),
    #[error("descriptor lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("{0} weights given for descriptors of length {1}")]
    WeightLength(usize, usize),
    #[error("weights must be finite and non-negative")]
    BadWeight,
    #[error("descriptor contains a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleDescriptor {
    pub metric_id: String,
    pub values: Vec<f64>,
}

impl StyleDescriptor {
    pub fn new(metric_id: impl Into<String>, values: Vec<f64>) -> Result<Self, MetricError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite);
        }
        Ok(StyleDescriptor {
            metric_id: metric_id.into(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L1,
    L2,
}

impl std::str::FromStr for Norm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            other => Err(format!("unknown norm '{other}' (expected l1 or l2)")),
        }
    }
}

/// Weighted L1 or L2 distance. `weights = None` means all ones.
pub fn distance(
    a: &StyleDescriptor,
    b: &StyleDescriptor,
    norm: Norm,
    weights: Option<&[f64]>,
) -> Result<f64, MetricError> {
    if a.metric_id != b.metric_id {
        return Err(MetricError::MetricMismatch(a.metric_id.clone(), b.metric_id.clone()));
    }
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if let Some(w) = weights {
        if w.len() != a.len() {
            return Err(MetricError::WeightLength(w.len(), a.len()));
        }
        if w.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(MetricError::BadWeight);
        }
    }
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let diffs = a.values.iter().zip(&b.values).map(|(x, y)| x - y).enumerate();
    Ok(match norm {
        Norm::L1 => diffs.map(|(i, d)| weight(i) * d.abs()).sum(),
        Norm::L2 => diffs.map(|(i, d)| weight(i) * d * d).sum::<f64>().sqrt(),
    })
}

struct Moments {
    mean: f64,
    std: f64,
    skew: f64,
}

fn moments(values: &[f64]) -> Moments {
    let n = values.len() as f64;
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Moments {
            mean: first,
            std: 0.0,
            skew: 0.0,
        };
    }
    let mean = exact_sum(values.iter().copied()) / n;
    let m2 = exact_sum(values.iter().map(|v| (v - mean).powi(2))) / n;
    let m3 = exact_sum(values.iter().map(|v| (v - mean).powi(3))) / n;
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    Moments {
        mean,
        std: m2.sqrt(),
        skew,
    }
}

/// Histogram bin of a value in `[0, 1]`; the last bin is closed.
pub fn hist_bin(v: f64) -> usize {
    ((v * HIST_BINS as f64) as usize).min(HIST_BINS - 1)
}

/// Histogram bin of a pixel's luma `l`.
///
/// Near a bin edge the two ways of writing luma round differently, so there
/// the edge is decided by the exact sign of `16 (299 R + 587 G + 114 B) - 1000 k`.
fn luma_bin(p: [f64; 3], l: f64) -> usize {
    let t = l * HIST_BINS as f64;
    let k = t.round();
    if (1.0..HIST_BINS as f64).contains(&k) && (t - k).abs() < 1e-9 {
        let mut terms = Vec::with_capacity(7);
        for (c, v) in [(299.0, p[0]), (587.0, p[1]), (114.0, p[2])] {
            let prod: f64 = c * v;
            terms.push(16.0 * prod);
            terms.push(16.0 * c.mul_add(v, -prod));
        }
        terms.push(-1000.0 * k);
        let k = k as usize;
        return if exact_sum(terms) >= 0.0 { k } else { k - 1 };
    }
    hist_bin(l)
}

/// Mean absolute Sobel-x, Sobel-y and 4-neighbour Laplacian responses of a
/// luma plane, with replicate border padding.
///
/// Each response is summed as mirror-symmetric pairs so that flipping the
/// image negates or permutes the terms exactly.
fn texture_energies(l: &[f64], w: usize, h: usize) -> [f64; 3] {
    let at = |x: isize, y: isize| {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        l[yc * w + xc]
    };
    let n = w * h;
    let mut sx = Vec::with_capacity(n);
    let mut sy = Vec::with_capacity(n);
    let mut lap = Vec::with_capacity(n);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let dx = |row: isize| at(x + 1, row) - at(x - 1, row);
            let dy = |col: isize| at(col, y + 1) - at(col, y - 1);
            sx.push(((dx(y - 1) + dx(y + 1)) + 2.0 * dx(y)).abs());
            sy.push(((dy(x - 1) + dy(x + 1)) + 2.0 * dy(x)).abs());
            let ring = (at(x, y - 1) + at(x, y + 1)) + (at(x - 1, y) + at(x + 1, y));
            lap.push((ring - 4.0 * at(x, y)).abs());
        }
    }
    let mean = |v: Vec<f64>| exact_sum(v) / n as f64;
    [mean(sx), mean(sy), mean(lap)]
}

/// The builtin 30-value descriptor.
pub fn encode_builtin(img: &ImageBuf) -> Result<StyleDescriptor, MetricError> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(MetricError::TooSmall(w, h));
    }
    let px = img.pixels();
    let n = px.len() as f64;
    let mut out = Vec::with_capacity(BUILTIN_DIM);

    let channel_moments: Vec<Moments> = (0..3)
        .map(|c| moments(&px.iter().map(|p| p[c]).collect::<Vec<_>>()))
        .collect();
    out.extend(channel_moments.iter().map(|m| m.mean));
    out.extend(channel_moments.iter().map(|m| m.std));
    out.extend(channel_moments.iter().map(|m| m.skew));

    let lumas: Vec<f64> = px.iter().map(|&p| luma(p)).collect();
    let mut counts = [0usize; HIST_BINS];
    for (&p, &l) in px.iter().zip(&lumas) {
        counts[luma_bin(p, l)] += 1;
    }
    out.extend(counts.iter().map(|&c| c as f64 / n));

    let spread: Vec<f64> = px
        .iter()
        .map(|p| p[0].max(p[1]).max(p[2]) - p[0].min(p[1]).min(p[2]))
        .collect();
    let sat = moments(&spread);
    out.push(sat.mean);
    out.push(sat.std);

    out.extend(texture_energies(&lumas, w, h));
    debug_assert_eq!(out.len(), BUILTIN_DIM);
    StyleDescriptor::new(BUILTIN_METRIC_ID, out)
}

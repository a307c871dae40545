//! The builtin parametric photo chain.
//!
//! Eight stages applied in a fixed order, clamping to `[0, 1]` after each:
//!
//! 1. `filter` / `filter_strength`: blend `(1 - s) p + s F(p)` with a preset `F`
//! 2. `temperature`: `R (1 + 0.2 t)`, `B (1 - 0.2 t)`
//! 3. `tint`: `G (1 + 0.2 g)`
//! 4. `brightness`: `p + 0.5 b`
//! 5. `contrast`: `(p - 0.5)(1 + c) + 0.5`
//! 6. `saturation`: `L + (p - L)(1 + s)` with Rec. 601 luma `L`
//! 7. `gamma`: `p ^ (2 ^ g)`
//! 8. `vignette`: `p (1 - v min(1, d^2))`
//!
//! Values are display-encoded, not linear light. Every stage has an identity
//! value, and the identity assignment returns the input unchanged.

mod chain;
mod image;
pub mod presets;

pub use self::chain::{apply_chain, builtin_space, PhotoChain, STAGES};
pub use self::image::{load_image, luma, save_image, to_byte, ImageBuf};
pub use self::presets::{FilterPreset, PresetSet, ToneCurve};

#[derive(Debug, thiserror::Error)]
pub enum TransformError {
    #[error("image must be at least 1x1")]
    EmptyImage,
    #[error("expected {expected} pixels, found {found}")]
    PixelCount { expected: usize, found: usize },
    #[error("channel value {0} outside [0, 1]")]
    ChannelRange(f64),
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid preset file: {0}")]
    Presets(String),
}

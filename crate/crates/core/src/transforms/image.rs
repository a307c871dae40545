use std::path::Path;

use super::TransformError;

/// Row-major RGB image with channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl ImageBuf {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self, TransformError> {
        if width == 0 || height == 0 {
            return Err(TransformError::EmptyImage);
        }
        if pixels.len() != width * height {
            return Err(TransformError::PixelCount {
                expected: width * height,
                found: pixels.len(),
            });
        }
        if let Some(p) = pixels.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(TransformError::ChannelRange(*p));
        }
        Ok(ImageBuf { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self, TransformError> {
        ImageBuf::new(width, height, vec![rgb; width * height])
    }

    /// Builds an image from a per-pixel function of `(x, y)`; values are clamped.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Result<Self, TransformError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).map(clamp01));
            }
        }
        ImageBuf::new(width, height, pixels)
    }

    pub(crate) fn from_raw(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        ImageBuf { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    /// Rounds every channel to the nearest multiple of 1/255, exactly as a
    /// save/load cycle through an 8-bit PNG would.
    pub fn quantized(&self) -> ImageBuf {
        let pixels = self
            .pixels
            .iter()
            .map(|p| p.map(|v| f64::from(to_byte(v)) / 255.0))
            .collect();
        ImageBuf::from_raw(self.width, self.height, pixels)
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.map(to_byte)).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self, TransformError> {
        if bytes.len() != width * height * 3 {
            return Err(TransformError::PixelCount {
                expected: width * height,
                found: bytes.len() / 3,
            });
        }
        let pixels = bytes
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]].map(|b| f64::from(b) / 255.0))
            .collect();
        ImageBuf::new(width, height, pixels)
    }

    /// Encodes as an 8-bit RGB PNG.
    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let encoder = image::codecs::png::PngEncoder::new(&mut out);
        image::ImageEncoder::write_image(
            encoder,
            &self.to_rgb8(),
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .expect("in-memory PNG encoding");
        out
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self, TransformError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| TransformError::Decode(e.to_string()))?;
        decode_dynamic(img)
    }
}

fn decode_dynamic(img: image::DynamicImage) -> Result<ImageBuf, TransformError> {
    use image::DynamicImage::*;
    match &img {
        ImageRgb8(_) | ImageRgba8(_) => {}
        other => {
            return Err(TransformError::Decode(format!(
                "unsupported pixel format {:?} (expected 8-bit RGB or RGBA)",
                other.color()
            )))
        }
    }
    let rgb = img.to_rgb8();
    ImageBuf::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
}

pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub(crate) fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Rec. 601 luma written as `G + 0.299 (R - G) + 0.114 (B - G)`, which is
/// algebraically `0.299 R + 0.587 G + 0.114 B` and returns neutral pixels
/// unchanged, bit for bit.
pub fn luma(p: [f64; 3]) -> f64 {
    let [r, g, b] = p;
    clamp01(g + 0.299 * (r - g) + 0.114 * (b - g))
}

/// Reads an 8-bit RGB or RGBA PNG; alpha is dropped.
pub fn load_image(path: &Path) -> Result<ImageBuf, TransformError> {
    let bytes = std::fs::read(path).map_err(|e| TransformError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ImageBuf::from_png(&bytes).map_err(|e| TransformError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn save_image(img: &ImageBuf, path: &Path) -> Result<(), TransformError> {
    std::fs::write(path, img.to_png()).map_err(|e| TransformError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_endpoints_round_trip() {
        for b in [0u8, 1, 127, 128, 254, 255] {
            let v = f64::from(b) / 255.0;
            assert_eq!(to_byte(v), b);
        }
        assert_eq!(f64::from(128u8) / 255.0, 128.0 / 255.0);
    }

    #[test]
    fn every_byte_survives_quantization() {
        let bytes: Vec<u8> = (0..=255u8).flat_map(|b| [b, b, 255 - b]).collect();
        let img = ImageBuf::from_rgb8(256, 1, &bytes).unwrap();
        assert_eq!(img.quantized(), img);
        assert_eq!(img.to_rgb8(), bytes);
    }

    #[test]
    fn png_save_load_save_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageBuf::from_fn(7, 5, |x, y| [x as f64 / 6.0, y as f64 / 4.0, 0.3337]).unwrap();
        let p1 = dir.path().join("a.png");
        let p2 = dir.path().join("b.png");
        save_image(&img, &p1).unwrap();
        let back = load_image(&p1).unwrap();
        assert_eq!(back, img.quantized());
        save_image(&back, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn rgba_alpha_is_dropped() {
        let mut buf = Vec::new();
        let enc = image::codecs::png::PngEncoder::new(&mut buf);
        image::ImageEncoder::write_image(enc, &[10, 20, 30, 40, 50, 60, 70, 0], 2, 1, image::ExtendedColorType::Rgba8).unwrap();
        let img = ImageBuf::from_png(&buf).unwrap();
        assert_eq!(img.to_rgb8(), vec![10, 20, 30, 50, 60, 70]);
    }

    #[test]
    fn corrupt_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("broken.png");
        std::fs::write(&p, b"not a png").unwrap();
        let err = load_image(&p).unwrap_err().to_string();
        assert!(err.contains("broken.png"), "{err}");
        let missing = dir.path().join("missing.png");
        assert!(load_image(&missing).unwrap_err().to_string().contains("missing.png"));
    }

    #[test]
    fn constructor_checks() {
        assert!(matches!(ImageBuf::filled(0, 3, [0.0; 3]), Err(TransformError::EmptyImage)));
        assert!(ImageBuf::new(1, 1, vec![[1.5, 0.0, 0.0]]).is_err());
        assert!(ImageBuf::new(2, 1, vec![[0.0; 3]]).is_err());
    }

    #[test]
    fn luma_of_neutral_is_exact() {
        for v in [0.0, 0.1, 0.5, 128.0 / 255.0, 1.0] {
            assert_eq!(luma([v, v, v]), v);
        }
        let l = luma([1.0, 0.0, 0.0]);
        assert!((l - 0.299).abs() < 1e-15);
    }
}

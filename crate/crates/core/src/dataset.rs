//! Image preprocessing (crop, then bilinear resize) and a seeded generator of
//! labelled synthetic textures.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cnn::MIN_INPUT_SIDE;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;
use crate::tensor::{self, FeatureMap};

/// Pixel margins to remove from each side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Crop {
    pub left: usize,
    pub top: usize,
    pub right: usize,
    pub bottom: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSpec {
    #[serde(default)]
    pub crop: Crop,
    /// Target (height, width) applied after cropping.
    #[serde(default)]
    pub resize: Option<(usize, usize)>,
}

impl PreprocessSpec {
    pub fn is_noop(&self) -> bool {
        self.crop == Crop::default() && self.resize.is_none()
    }
}

pub fn crop(image: &Image, c: &Crop) -> Result<Image> {
    let (w, h) = (image.width(), image.height());
    if c.left + c.right >= w || c.top + c.bottom >= h {
        return Err(Error::Spec(format!(
            "crop {}/{}/{}/{} (l/t/r/b) leaves nothing of a {w}x{h} image",
            c.left, c.top, c.right, c.bottom
        )));
    }
    let ch = image.channels();
    let new_w = w - c.left - c.right;
    let new_h = h - c.top - c.bottom;
    let mut px = Vec::with_capacity(new_w * new_h * ch);
    for y in c.top..c.top + new_h {
        let start = (y * w + c.left) * ch;
        px.extend_from_slice(&image.pixels()[start..start + new_w * ch]);
    }
    Image::new(new_w, new_h, ch, px)
}

/// Bilinear resize of an 8-bit image (rounded, saturating).
pub fn resize(image: &Image, height: usize, width: usize) -> Result<Image> {
    if height == image.height() && width == image.width() {
        return Ok(image.clone());
    }
    let ch = image.channels();
    let map = FeatureMap::from_fn(ch, image.height(), image.width(), |c, y, x| image.pixel(x, y, c) as f32);
    let out = tensor::resize_bilinear(&map, height, width)?;
    let mut px = vec![0u8; height * width * ch];
    for c in 0..ch {
        for (i, &v) in out.channel(c).iter().enumerate() {
            px[i * ch + c] = Float::round(v).clamp(0.0, 255.0) as u8;
        }
    }
    Image::new(width, height, ch, px)
}

/// Crops, then resizes.
pub fn apply_preprocess(image: &Image, spec: &PreprocessSpec) -> Result<Image> {
    if let Some((h, w)) = spec.resize {
        if h < MIN_INPUT_SIDE || w < MIN_INPUT_SIDE {
            return Err(Error::Spec(format!("resize target {h}x{w} is below {MIN_INPUT_SIDE}x{MIN_INPUT_SIDE}")));
        }
    }
    let cropped = if spec.crop == Crop::default() { image.clone() } else { crop(image, &spec.crop)? };
    match spec.resize {
        Some((h, w)) => resize(&cropped, h, w),
        None => Ok(cropped),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TextureKind {
    /// Sinusoidal stripes; `angle` in degrees, `period` in pixels.
    Stripes { angle: f64, period: f64 },
    /// Bright discs on a dark background; `density` is discs per pixel.
    Dots { radius: f64, density: f64 },
    /// Checkerboard with square cells of `cell` pixels.
    Checker { cell: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureClass {
    pub name: String,
    pub texture: TextureKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: Vec<TextureClass>,
    pub n_per_class: usize,
    pub size: usize,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Stripes, dots and checkerboard.
    pub fn three_class(n_per_class: usize, size: usize, noise: f64, seed: u64) -> Self {
        SyntheticSpec {
            classes: vec![
                TextureClass { name: "stripes".into(), texture: TextureKind::Stripes { angle: 30.0, period: 8.0 } },
                TextureClass { name: "dots".into(), texture: TextureKind::Dots { radius: 3.0, density: 0.01 } },
                TextureClass { name: "checker".into(), texture: TextureKind::Checker { cell: 8 } },
            ],
            n_per_class,
            size,
            noise,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.classes.len() < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes.len()));
        }
        if self.size < MIN_INPUT_SIDE {
            return bad(format!("image size {} is below {MIN_INPUT_SIDE}", self.size));
        }
        if self.n_per_class == 0 {
            return bad("n_per_class must be positive".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise level {} is invalid", self.noise));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.name.is_empty() || self.classes[..i].iter().any(|o| o.name == c.name) {
                return bad(format!("class names must be nonempty and unique ({:?})", c.name));
            }
            let ok = match c.texture {
                TextureKind::Stripes { angle, period } => angle.is_finite() && period > 0.0,
                TextureKind::Dots { radius, density } => radius > 0.0 && density > 0.0 && density <= 1.0,
                TextureKind::Checker { cell } => cell > 0,
            };
            if !ok {
                return bad(format!("invalid texture parameters for class {}", c.name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub image: Image,
    pub label: String,
}

fn render(kind: &TextureKind, size: usize, r: &mut rng::Rng) -> Vec<f64> {
    let mut px = vec![0.0; size * size];
    match *kind {
        TextureKind::Stripes { angle, period } => {
            let (s, c) = Float::sin_cos(angle.to_radians());
            let phase = r.gen::<f64>() * 2.0 * PI;
            for y in 0..size {
                for x in 0..size {
                    let t = (x as f64 * c + y as f64 * s) / period;
                    px[y * size + x] = 127.5 + 127.5 * Float::sin(2.0 * PI * t + phase);
                }
            }
        }
        TextureKind::Dots { radius, density } => {
            px.fill(40.0);
            let n = Float::round(density * (size * size) as f64).max(1.0) as usize;
            let r2 = radius * radius;
            let reach = Float::ceil(radius) as isize;
            for _ in 0..n {
                let cx = r.gen::<f64>() * size as f64;
                let cy = r.gen::<f64>() * size as f64;
                let (ix, iy) = (cx as isize, cy as isize);
                for y in (iy - reach).max(0)..(iy + reach + 1).min(size as isize) {
                    for x in (ix - reach).max(0)..(ix + reach + 1).min(size as isize) {
                        let dx = x as f64 + 0.5 - cx;
                        let dy = y as f64 + 0.5 - cy;
                        if dx * dx + dy * dy <= r2 {
                            px[y as usize * size + x as usize] = 215.0;
                        }
                    }
                }
            }
        }
        TextureKind::Checker { cell } => {
            let ox = r.gen_range(0..cell);
            let oy = r.gen_range(0..cell);
            for y in 0..size {
                for x in 0..size {
                    let on = ((x + ox) / cell + (y + oy) / cell) % 2 == 1;
                    px[y * size + x] = if on { 225.0 } else { 30.0 };
                }
            }
        }
    }
    px
}

/// Generates `n_per_class` grayscale images per class, class by class.
/// Image `i` (in output order) draws from `rng::substream(seed, i)`, which
/// sets its random phase or offset and its noise.
pub fn generate_synthetic_textures(spec: &SyntheticSpec) -> Result<Vec<LabeledImage>> {
    spec.validate()?;
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Argument(format!("noise: {e}")))?;
    let mut out = Vec::with_capacity(spec.classes.len() * spec.n_per_class);
    for class in &spec.classes {
        for _ in 0..spec.n_per_class {
            let mut r = rng::substream(spec.seed, out.len() as u64);
            let px = render(&class.texture, spec.size, &mut r);
            let bytes = px
                .into_iter()
                .map(|v| {
                    let v = if spec.noise > 0.0 { v + noise.sample(&mut r) } else { v };
                    Float::round(v).clamp(0.0, 255.0) as u8
                })
                .collect();
            out.push(LabeledImage { image: Image::gray(spec.size, spec.size, bytes)?, label: class.name.clone() });
        }
    }
    Ok(out)
}

//! PNG and 8-bit TIFF decoding into [`Image`], PNG encoding.

use std::path::Path;

use image::{ColorType, DynamicImage, ImageFormat};
use microtex_core::Image;

use crate::error::{CliError, Result};

pub fn load_image(path: &Path) -> Result<Image> {
    let err = |message: String| CliError::Image { path: path.to_path_buf(), message };
    let format = ImageFormat::from_path(path).map_err(|e| err(e.to_string()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Tiff) {
        return Err(err(format!("unsupported format {format:?}; use PNG or TIFF")));
    }
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, format).map_err(|e| err(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let decoded = match img {
        DynamicImage::ImageLuma8(b) => Image::gray(w, h, b.into_raw()),
        DynamicImage::ImageRgb8(b) => Image::new(w, h, 3, b.into_raw()),
        other => return Err(err(format!("only 8-bit grayscale or RGB is supported, got {:?}", other.color()))),
    };
    decoded.map_err(|e| err(e.to_string()))
}

pub fn save_png(path: &Path, img: &Image) -> Result<()> {
    let color = if img.channels() == 1 { ColorType::L8 } else { ColorType::Rgb8 };
    image::save_buffer_with_format(path, img.pixels(), img.width() as u32, img.height() as u32, color, ImageFormat::Png)
        .map_err(|e| CliError::Image { path: path.to_path_buf(), message: e.to_string() })
}

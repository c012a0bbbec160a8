//! Image files: PNG and binary PPM/PGM in, PNG out.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader, RgbImage};
use sapgan_core::image::RawImage;

use crate::error::{Error, Result};

/// Decodes `path`. Grayscale files stay single-channel, everything else is
/// converted to 8-bit RGB.
pub fn load_image(path: &Path) -> Result<RawImage> {
    let image_err = |source| Error::Image { path: path.to_path_buf(), source };
    let decoded = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(image_err)?;
    let raw = match decoded {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageLumaA16(_) => {
            let g = decoded.into_luma8();
            RawImage::new(g.width() as usize, g.height() as usize, 1, g.into_raw())
        }
        other => {
            let rgb = other.into_rgb8();
            RawImage::new(rgb.width() as usize, rgb.height() as usize, 3, rgb.into_raw())
        }
    };
    raw.map_err(|e| Error::format(path, e))
}

/// Writes `img` as PNG, creating parent directories as needed.
pub fn save_png(path: &Path, img: &RawImage) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let (w, h) = (img.width() as u32, img.height() as u32);
    let pixels = img.pixels().to_vec();
    let result = if img.channels() == 1 {
        GrayImage::from_raw(w, h, pixels).expect("buffer matches dimensions").save(path)
    } else {
        RgbImage::from_raw(w, h, pixels).expect("buffer matches dimensions").save(path)
    };
    result.map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// File extensions [`load_image`] is expected to read.
pub fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pgm" | "pnm"))
}

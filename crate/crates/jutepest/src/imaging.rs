//! Decoding to and encoding from the core buffer types.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{ColorType, DynamicImage, ImageFormat, ImageReader};
use jutepest_core::{RawImage, RgbImage};

use crate::error::{Error, Result};

const JPEG_QUALITY: u8 = 95;

fn image_err(path: &Path, e: impl ToString) -> Error {
    Error::Image { path: path.to_path_buf(), message: e.to_string() }
}

/// Decodes any supported file, keeping its channel layout (1-4 channels,
/// 8 bits each).
pub fn decode(path: &Path) -> Result<RawImage> {
    let img = ImageReader::open(path)
        .map_err(Error::io(path))?
        .with_guessed_format()
        .map_err(Error::io(path))?
        .decode()
        .map_err(|e| image_err(path, e))?;
    from_dynamic(path, img)
}

/// Decodes an in-memory file; `origin` names it in errors.
pub fn decode_bytes(bytes: &[u8], origin: &Path) -> Result<RawImage> {
    let img = image::load_from_memory(bytes).map_err(|e| image_err(origin, e))?;
    from_dynamic(origin, img)
}

fn from_dynamic(path: &Path, img: DynamicImage) -> Result<RawImage> {
    let (w, h) = (img.width(), img.height());
    let (channels, data) = match img.color() {
        ColorType::L8 => (1, img.into_bytes()),
        ColorType::La8 => (2, img.into_bytes()),
        ColorType::Rgb8 => (3, img.into_bytes()),
        ColorType::Rgba8 => (4, img.into_bytes()),
        c if c.has_alpha() => (4, img.into_rgba8().into_raw()),
        c if c.channel_count() == 1 => (1, img.into_luma8().into_raw()),
        _ => (3, img.into_rgb8().into_raw()),
    };
    if w == 0 || h == 0 {
        return Err(image_err(path, "image has zero size"));
    }
    RawImage::new(w, h, channels, data).map_err(|e| image_err(path, e))
}

/// Decodes and converts to RGB.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let raw = decode(path)?;
    jutepest_core::preprocess::to_rgb(&raw).map_err(|e| image_err(path, e))
}

/// JPEG bytes of `img`; deterministic for a given input.
pub fn encode_jpeg(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let enc = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut buf, JPEG_QUALITY);
    let buffer = image::RgbImage::from_raw(img.width(), img.height(), img.data().to_vec()).expect("consistent buffer");
    buffer.write_with_encoder(enc).map_err(|e| image_err(Path::new("<jpeg>"), e))?;
    Ok(buf)
}

pub fn save_jpeg(img: &RgbImage, path: &Path) -> Result<()> {
    write_file(path, &encode_jpeg(img)?)
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    let buffer = image::RgbImage::from_raw(img.width(), img.height(), img.data().to_vec()).expect("consistent buffer");
    let mut bytes = Cursor::new(Vec::new());
    buffer.write_to(&mut bytes, ImageFormat::Png).map_err(|e| image_err(path, e))?;
    write_file(path, bytes.get_ref())
}

/// Writes `bytes`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(Error::io(parent))?;
    }
    fs::write(path, bytes).map_err(Error::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jpeg_round_trip_keeps_size_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_fn(40, 30, |x, y| [(x * 6) as u8, (y * 8) as u8, 90]);
        let p = dir.path().join("a/b.jpg");
        save_jpeg(&img, &p).unwrap();
        let back = load_rgb(&p).unwrap();
        assert_eq!((back.width(), back.height()), (40, 30));
        assert_eq!(encode_jpeg(&img).unwrap(), encode_jpeg(&img).unwrap());
    }

    #[test]
    fn gray_png_decodes_as_one_channel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        image::GrayImage::from_pixel(5, 4, image::Luma([77])).save(&p).unwrap();
        let raw = decode(&p).unwrap();
        assert_eq!((raw.width(), raw.height(), raw.channels()), (5, 4, 1));
        assert_eq!(load_rgb(&p).unwrap().pixel(0, 0), [77, 77, 77]);
    }

    #[test]
    fn garbage_is_an_image_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jpg");
        fs::write(&p, b"definitely not a jpeg").unwrap();
        assert!(matches!(decode(&p), Err(Error::Image { .. })));
    }
}

use std::path::Path;

use image::{ColorType, ImageFormat};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, RgbImage};

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| image_err(path, e))
}

/// Reads a single-channel 8-bit mask holding only 0 and 255.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = open(path)?;
    if img.color() != ColorType::L8 {
        return Err(image_err(
            path,
            format!("mask must be 8-bit single channel, found {:?}", img.color()),
        ));
    }
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    let mut bits = Vec::with_capacity((w * h) as usize);
    for (x, y, p) in gray.enumerate_pixels() {
        match p.0[0] {
            0 => bits.push(false),
            255 => bits.push(true),
            value => {
                return Err(Error::MaskValue {
                    path: path.to_path_buf(),
                    x,
                    y,
                    value,
                })
            }
        }
    }
    BinaryMask::new(w as usize, h as usize, bits)
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let data: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    image::save_buffer_with_format(
        path,
        &data,
        mask.width() as u32,
        mask.height() as u32,
        ColorType::L8,
        ImageFormat::Png,
    )
    .map_err(|e| image_err(path, e))
}

/// Reads any supported image as 8-bit RGB.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = open(path)?.into_rgb8();
    let (w, h) = img.dimensions();
    RgbImage::new(w as usize, h as usize, img.into_raw())
}

pub fn save_rgb(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    image::save_buffer_with_format(
        path,
        img.data(),
        img.width() as u32,
        img.height() as u32,
        ColorType::Rgb8,
        ImageFormat::Png,
    )
    .map_err(|e| image_err(path, e))
}

/// Copy of `frame` with the mask outline painted in `color`.
pub fn render_overlay(frame: &RgbImage, mask: &BinaryMask, color: [u8; 3]) -> Result<RgbImage> {
    if frame.dims() != mask.dims() {
        return Err(Error::dims(frame.dims(), mask.dims()));
    }
    let (w, h) = mask.dims();
    let edge = |x: usize, y: usize| {
        mask.get(x, y)
            && (x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1))
    };
    RgbImage::from_fn(w, h, |x, y| if edge(x, y) { color } else { frame.pixel(x, y) })
}

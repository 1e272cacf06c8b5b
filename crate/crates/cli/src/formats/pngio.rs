//! 8-bit PNG IO: binary masks as grayscale 0/255, images as RGB with the
//! linear [0,1] float range mapped onto [0,255] (no transfer curve — the
//! toolkit is colorimetrically agnostic and round-trips values as-is).

use std::path::Path;

use diorama_core::image::{BinaryMask, ImageBuf};
use image::{GrayImage, ImageReader, RgbImage};

use crate::error::{CliError, Result};

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let mut img = GrayImage::new(mask.width, mask.height);
    for y in 0..mask.height {
        for x in 0..mask.width {
            img.put_pixel(x, y, image::Luma([if mask.get(x, y) { 255 } else { 0 }]));
        }
    }
    img.save(path)
        .map_err(|e| CliError::format(path, e.to_string()))
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let img = ImageReader::open(path)
        .map_err(|e| CliError::io(path, e))?
        .decode()
        .map_err(|e| CliError::format(path, e.to_string()))?
        .into_luma8();
    let mut mask = BinaryMask::new(img.width(), img.height());
    for y in 0..img.height() {
        for x in 0..img.width() {
            mask.set(x, y, img.get_pixel(x, y)[0] >= 128);
        }
    }
    Ok(mask)
}

pub fn write_image(path: &Path, img: &ImageBuf) -> Result<()> {
    let mut out = RgbImage::new(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            let c = img.get(x, y);
            out.put_pixel(x, y, image::Rgb(c.map(quantize)));
        }
    }
    out.save(path)
        .map_err(|e| CliError::format(path, e.to_string()))
}

pub fn read_image(path: &Path) -> Result<ImageBuf> {
    let img = ImageReader::open(path)
        .map_err(|e| CliError::io(path, e))?
        .decode()
        .map_err(|e| CliError::format(path, e.to_string()))?
        .into_rgb8();
    let mut out = ImageBuf::new(img.width(), img.height());
    for y in 0..img.height() {
        for x in 0..img.width() {
            let p = img.get_pixel(x, y);
            out.set(x, y, [
                f32::from(p[0]) / 255.0,
                f32::from(p[1]) / 255.0,
                f32::from(p[2]) / 255.0,
            ]);
        }
    }
    Ok(out)
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

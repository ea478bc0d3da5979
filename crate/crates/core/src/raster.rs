//! 8-bit grayscale plate images.

use std::io::Cursor;

use image::{GrayImage, ImageFormat, Luma};

use crate::error::{Error, Result};

/// Smallest side accepted by the analysis agents.
pub const MIN_SIDE: u32 = 64;

/// An 8-bit single-channel plate image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlateImage(GrayImage);

impl PlateImage {
    pub fn new(width: u32, height: u32, fill: u8) -> Self {
        PlateImage(GrayImage::from_pixel(width, height, Luma([fill])))
    }

    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(Error::validation(
                "image",
                format!("expected {expected} bytes for {width}x{height}, got {}", pixels.len()),
            ));
        }
        Ok(PlateImage(
            GrayImage::from_raw(width, height, pixels).expect("length checked above"),
        ))
    }

    /// Decodes a PNG, rejecting anything that is not 8-bit grayscale.
    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
        match img {
            image::DynamicImage::ImageLuma8(gray) => Ok(PlateImage(gray)),
            other => Err(Error::validation(
                "image",
                format!("expected 8-bit grayscale, got {:?}", other.color()),
            )),
        }
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.0.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn width(&self) -> u32 {
        self.0.width()
    }

    pub fn height(&self) -> u32 {
        self.0.height()
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.0.get_pixel(x, y).0[0]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.0.put_pixel(x, y, Luma([v]));
    }

    pub fn pixels(&self) -> &[u8] {
        self.0.as_raw()
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.0
    }

    pub fn as_gray(&self) -> &GrayImage {
        &self.0
    }

    /// Checks the preconditions shared by every analysis operation.
    pub fn ensure_analyzable(&self) -> Result<()> {
        if self.width() < MIN_SIDE || self.height() < MIN_SIDE {
            return Err(Error::validation(
                "image",
                format!(
                    "degenerate size {}x{}, need at least {MIN_SIDE}x{MIN_SIDE}",
                    self.width(),
                    self.height()
                ),
            ));
        }
        Ok(())
    }
}

impl From<GrayImage> for PlateImage {
    fn from(g: GrayImage) -> Self {
        PlateImage(g)
    }
}

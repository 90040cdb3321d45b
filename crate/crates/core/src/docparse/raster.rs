use std::io::Cursor;

use image::{ImageBuffer, ImageFormat, Rgb, RgbImage};

/// An 8-bit RGB raster, row-major, no padding.
#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl std::fmt::Debug for Raster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("bytes", &self.pixels.len())
            .finish()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("raster dimensions must be positive, got {0}x{1}")]
    Empty(u32, u32),
    #[error("pixel buffer has {got} bytes, expected {expected}")]
    Size { expected: usize, got: usize },
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
}

impl Raster {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::Empty(width, height));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(RasterError::Size {
                expected,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let img: RgbImage =
            ImageBuffer::from_raw(self.width, self.height, self.pixels.clone()).expect("sized");
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)
            .expect("PNG encoding into memory");
        out.into_inner()
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8();
        let (w, h) = img.dimensions();
        Raster::new(w, h, img.into_raw())
    }

    fn to_image(&self) -> RgbImage {
        ImageBuffer::<Rgb<u8>, _>::from_raw(self.width, self.height, self.pixels.clone())
            .expect("sized")
    }
}

/// Dimensions of a thumbnail whose longest side is `min(max_dim, longest)`; the other side is
/// floored and never below 1.
pub fn thumbnail_dims(width: u32, height: u32, max_dim: u32) -> (u32, u32) {
    let longest = width.max(height);
    if longest <= max_dim {
        return (width, height);
    }
    let scale = |side: u32| ((side as u64 * max_dim as u64) / longest as u64).max(1) as u32;
    if width >= height {
        (max_dim, scale(height))
    } else {
        (scale(width), max_dim)
    }
}

/// Area-averaged downscale preserving aspect ratio. Never upscales.
pub fn make_thumbnail(raster: &Raster, max_dim: u32) -> Raster {
    let max_dim = max_dim.max(16);
    let (w, h) = thumbnail_dims(raster.width, raster.height, max_dim);
    if (w, h) == (raster.width, raster.height) {
        return raster.clone();
    }
    let small = image::imageops::thumbnail(&raster.to_image(), w, h);
    Raster {
        width: w,
        height: h,
        pixels: small.into_raw(),
    }
}

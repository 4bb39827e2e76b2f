//! RGB float images and PNG/PPM I/O.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image codec error for {path}: {source}")]
    Codec {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("buffer of {len} values does not match {width}x{height}x3")]
    BadBuffer { len: usize, width: usize, height: usize },
}

/// Row-major interleaved RGB image with values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ViewImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if data.len() != width * height * 3 {
            return Err(ImageError::BadBuffer {
                len: data.len(),
                width,
                height,
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    /// `f(column, row)` gives the RGB value of each pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for j in 0..height {
            for i in 0..width {
                data.extend_from_slice(&f(i, j));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, i: usize, j: usize) -> [f32; 3] {
        let o = (j * self.width + i) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, i: usize, j: usize, rgb: [f32; 3]) {
        let o = (j * self.width + i) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    /// Rec. 601 luma as a row-major plane.
    pub fn luma(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn to_rgb8(&self) -> image::RgbImage {
        let bytes = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length checked at construction")
    }

    /// Writes 8-bit RGB; the format follows the extension (`.ppm` → binary P6).
    pub fn save(&self, path: &Path) -> Result<(), ImageError> {
        let codec = |source| ImageError::Codec {
            path: path.display().to_string(),
            source,
        };
        let rgb = self.to_rgb8();
        let is_ppm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
        if !is_ppm {
            return rgb.save(path).map_err(codec);
        }
        use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
        use image::ImageEncoder;
        let file = std::fs::File::create(path).map_err(|e| codec(image::ImageError::IoError(e)))?;
        PnmEncoder::new(std::io::BufWriter::new(file))
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(rgb.as_raw(), rgb.width(), rgb.height(), image::ExtendedColorType::Rgb8)
            .map_err(codec)
    }

    pub fn load(path: &Path) -> Result<Self, ImageError> {
        let img = image::open(path)
            .map_err(|source| ImageError::Codec {
                path: path.display().to_string(),
                source,
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
        Self::new(w as usize, h as usize, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_is_exact_at_8_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.ppm");
        let img = ViewImage::from_fn(5, 3, |i, j| [i as f32 / 4.0, j as f32 / 2.0, 0.5]);
        img.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P6"));
        let back = ViewImage::load(&path).unwrap();
        assert_eq!((back.width(), back.height()), (5, 3));
        assert!(img.data().iter().zip(back.data()).all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-6));
    }

    #[test]
    fn rejects_bad_buffer() {
        assert!(ViewImage::new(2, 2, vec![0.0; 11]).is_err());
    }
}

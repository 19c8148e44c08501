//! RGB8 raster with a per-pixel coverage mask, bilinear sampling and PNG I/O.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb, RgbImage, Rgba, RgbaImage};

use crate::error::{Error, Result};
use crate::geometry::Point2;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: u32,
    height: u32,
    rgb: Vec<[u8; 3]>,
    coverage: Vec<bool>,
}

impl Image {
    /// Black image with the given coverage everywhere.
    pub fn new(width: u32, height: u32, covered: bool) -> Self {
        let n = width as usize * height as usize;
        Self { width, height, rgb: vec![[0; 3]; n], coverage: vec![covered; n] }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut img = Self::new(width, height, true);
        for y in 0..height {
            for x in 0..width {
                let i = img.index(x, y);
                img.rgb[i] = f(x, y);
            }
        }
        img
    }

    pub fn from_parts(width: u32, height: u32, rgb: Vec<[u8; 3]>, coverage: Vec<bool>) -> Result<Self> {
        let n = width as usize * height as usize;
        if rgb.len() != n || coverage.len() != n {
            return Err(Error::Decode("pixel buffer size does not match dimensions".into()));
        }
        Ok(Self { width, height, rgb, coverage })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.rgb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rgb.is_empty()
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.rgb[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3], covered: bool) {
        let i = self.index(x, y);
        self.rgb[i] = rgb;
        self.coverage[i] = covered;
    }

    pub fn covered(&self, x: u32, y: u32) -> bool {
        self.coverage[self.index(x, y)]
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.rgb
    }

    pub fn pixels_mut(&mut self) -> &mut [[u8; 3]] {
        &mut self.rgb
    }

    pub fn coverage(&self) -> &[bool] {
        &self.coverage
    }

    pub fn coverage_mut(&mut self) -> &mut [bool] {
        &mut self.coverage
    }

    /// Pixels and coverage borrowed mutably at the same time.
    pub fn split_mut(&mut self) -> (&mut [[u8; 3]], &mut [bool]) {
        (&mut self.rgb, &mut self.coverage)
    }

    pub fn covered_count(&self) -> usize {
        self.coverage.iter().filter(|c| **c).count()
    }

    /// Whether `p` lies in the sampling domain `[0,w)x[0,h)`.
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }

    /// Bilinear sample with edge clamping. Returns `None` outside `[0,w)x[0,h)`.
    pub fn sample_bilinear(&self, p: Point2) -> Option<[f64; 3]> {
        if !self.contains(p) {
            return None;
        }
        Some(self.sample_clamped(p))
    }

    /// Bilinear sample with coordinates clamped to the pixel-center hull.
    pub fn sample_clamped(&self, p: Point2) -> [f64; 3] {
        let maxx = (self.width - 1) as f64;
        let maxy = (self.height - 1) as f64;
        let x = p.x.clamp(0.0, maxx);
        let y = p.y.clamp(0.0, maxy);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as u32;
        let y0 = y0 as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let a = self.get(x0, y0);
        let b = self.get(x1, y0);
        let c = self.get(x0, y1);
        let d = self.get(x1, y1);
        std::array::from_fn(|k| {
            let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
            let bottom = c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx;
            top * (1.0 - fy) + bottom * fy
        })
    }

    /// Loads a PNG; an alpha channel, when present, becomes the coverage mask (alpha > 0).
    pub fn load(path: &Path) -> Result<Self> {
        let dynimg = image::open(path)?;
        let has_alpha = dynimg.color().has_alpha();
        let rgba = dynimg.to_rgba8();
        let (w, h) = rgba.dimensions();
        let mut rgb = Vec::with_capacity(w as usize * h as usize);
        let mut coverage = Vec::with_capacity(w as usize * h as usize);
        for px in rgba.pixels() {
            rgb.push([px[0], px[1], px[2]]);
            coverage.push(!has_alpha || px[3] > 0);
        }
        Self::from_parts(w, h, rgb, coverage)
    }

    /// Writes opaque RGB; uncovered pixels keep their stored color.
    pub fn save_rgb(&self, path: &Path) -> Result<()> {
        let buf: RgbImage =
            ImageBuffer::from_fn(self.width, self.height, |x, y| Rgb(self.get(x, y)));
        buf.save(path)?;
        Ok(())
    }

    /// Writes RGBA with alpha 255 on covered pixels and 0 elsewhere.
    pub fn save_rgba(&self, path: &Path) -> Result<()> {
        self.to_rgba().save(path)?;
        Ok(())
    }

    pub fn to_rgba(&self) -> RgbaImage {
        ImageBuffer::from_fn(self.width, self.height, |x, y| {
            let [r, g, b] = self.get(x, y);
            Rgba([r, g, b, if self.covered(x, y) { 255 } else { 0 }])
        })
    }

    /// Interleaved RGBA bytes, as consumed by canvas `ImageData`.
    pub fn to_rgba_bytes(&self) -> Vec<u8> {
        self.to_rgba().into_raw()
    }
}

/// Writes a 16-bit single-channel PNG.
pub fn save_gray16(path: &Path, width: u32, height: u32, values: &[u16]) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(width, height, values.to_vec())
        .ok_or_else(|| Error::Decode("buffer size does not match dimensions".into()))?;
    buf.save(path)?;
    Ok(())
}

/// Reads a 16-bit single-channel PNG. Other layouts are rejected.
pub fn load_gray16(path: &Path) -> Result<(u32, u32, Vec<u16>)> {
    let dynimg = image::open(path)?;
    match dynimg {
        image::DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            Ok((w, h, buf.into_raw()))
        }
        other => Err(Error::Decode(format!(
            "expected 16-bit grayscale, found {:?}",
            other.color()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_midpoint_and_bounds() {
        let img = Image::from_fn(2, 2, |x, y| [(x * 100) as u8, (y * 200) as u8, 7]);
        let s = img.sample_bilinear(Point2::new(0.5, 0.5)).unwrap();
        assert_eq!(s, [50.0, 100.0, 7.0]);
        assert!(img.sample_bilinear(Point2::new(2.0, 0.0)).is_none());
        assert!(img.sample_bilinear(Point2::new(-0.01, 0.0)).is_none());
        // past the last center the sample clamps
        assert_eq!(img.sample_bilinear(Point2::new(1.5, 0.0)).unwrap()[0], 100.0);
    }

    #[test]
    fn rgba_roundtrip_keeps_coverage() {
        let dir = std::env::temp_dir().join(format!("parastitch-img-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut img = Image::from_fn(5, 3, |x, y| [x as u8 * 40, y as u8 * 80, 3]);
        img.set(1, 1, [9, 9, 9], false);
        let path = dir.join("a.png");
        img.save_rgba(&path).unwrap();
        let back = Image::load(&path).unwrap();
        assert_eq!(back.dims(), (5, 3));
        assert!(!back.covered(1, 1));
        assert!(back.covered(0, 0));
        assert_eq!(back.get(4, 2), img.get(4, 2));
        std::fs::remove_dir_all(&dir).ok();
    }
}

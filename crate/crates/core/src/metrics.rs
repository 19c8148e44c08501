//! PSNR and SSIM restricted to the pixels both images cover.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Reported PSNR for identical inputs.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const L: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub evaluated_pixels: usize,
}

impl std::fmt::Display for MetricReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "psnr {:.4} dB  ssim {:.6}  pixels {}", self.psnr, self.ssim, self.evaluated_pixels)
    }
}

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch { expected: a.dims(), got: b.dims() });
    }
    Ok(())
}

fn mutual(a: &Image, b: &Image) -> Vec<bool> {
    a.coverage().iter().zip(b.coverage()).map(|(x, y)| *x && *y).collect()
}

/// PSNR over RGB on mutually covered pixels, capped at 99 dB.
pub fn psnr_overlap(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let (mut se, mut n) = (0.0, 0usize);
    for ((pa, pb), m) in a.pixels().iter().zip(b.pixels()).zip(mutual(a, b)) {
        if m {
            se += (0..3).map(|k| (pa[k] as f64 - pb[k] as f64).powi(2)).sum::<f64>();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    let mse = se / (3 * n) as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (L * L / mse).log10()).min(PSNR_CAP))
}

/// ITU-R BT.601 luma.
pub fn luma(rgb: [u8; 3]) -> f64 {
    0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; 2 * SSIM_RADIUS + 1] {
    let mut taps = [0.0; 2 * SSIM_RADIUS + 1];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - SSIM_RADIUS as f64;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.map(|t| t / s)
}

/// SSIM of one window given its weighted moments.
pub fn ssim_from_moments(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64) -> f64 {
    let c1 = (K1 * L).powi(2);
    let c2 = (K2 * L).powi(2);
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

fn blur(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let r = taps.len() / 2;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in r..w.saturating_sub(r) {
            tmp[y * w + x] = (0..taps.len()).map(|k| taps[k] * src[y * w + x + k - r]).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in r..h.saturating_sub(r) {
        for x in r..w.saturating_sub(r) {
            out[y * w + x] = (0..taps.len()).map(|k| taps[k] * tmp[(y + k - r) * w + x]).sum();
        }
    }
    out
}

/// Mean single-scale SSIM on luma over every 11x11 window lying entirely in
/// the mutual coverage.
pub fn ssim_overlap(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    let m = mutual(a, b);
    let size = 2 * SSIM_RADIUS + 1;
    if w < size || h < size {
        return Err(Error::EmptyOverlap);
    }
    // summed-area table of uncovered pixels to test windows in O(1)
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            sat[(y + 1) * (w + 1) + x + 1] = (!m[y * w + x]) as u32 + sat[y * (w + 1) + x + 1]
                + sat[(y + 1) * (w + 1) + x]
                - sat[y * (w + 1) + x];
        }
    }
    let holes = |x0: usize, y0: usize| {
        let (x1, y1) = (x0 + size, y0 + size);
        sat[y1 * (w + 1) + x1] + sat[y0 * (w + 1) + x0] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0]
    };
    let ya: Vec<f64> = a.pixels().iter().map(|p| luma(*p)).collect();
    let yb: Vec<f64> = b.pixels().iter().map(|p| luma(*p)).collect();
    let taps = gaussian_taps();
    let prod = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let mu_a = blur(&ya, w, h, &taps);
    let mu_b = blur(&yb, w, h, &taps);
    let aa = blur(&prod(&ya, &ya), w, h, &taps);
    let bb = blur(&prod(&yb, &yb), w, h, &taps);
    let ab = blur(&prod(&ya, &yb), w, h, &taps);
    let (mut sum, mut n) = (0.0, 0usize);
    for y in SSIM_RADIUS..h - SSIM_RADIUS {
        for x in SSIM_RADIUS..w - SSIM_RADIUS {
            if holes(x - SSIM_RADIUS, y - SSIM_RADIUS) != 0 {
                continue;
            }
            let i = y * w + x;
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = (aa[i] - ma * ma).max(0.0);
            let vb = (bb[i] - mb * mb).max(0.0);
            sum += ssim_from_moments(ma, mb, va, vb, ab[i] - ma * mb);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    Ok(sum / n as f64)
}

pub fn evaluate(a: &Image, b: &Image) -> Result<MetricReport> {
    let psnr = psnr_overlap(a, b)?;
    let ssim = ssim_overlap(a, b)?;
    let evaluated_pixels = mutual(a, b).iter().filter(|v| **v).count();
    Ok(MetricReport { psnr, ssim, evaluated_pixels })
}

//! PSNR and SSIM on the luma channel.

use super::color::y_values;
use super::plane::ImagePlane;
use crate::error::{Error, Result};

/// Reported for identical images.
pub const PSNR_CAP: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// A luma plane in f64 after quantization and border shave.
#[derive(Debug, Clone, PartialEq)]
pub struct LumaPlane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl LumaPlane {
    /// Quantizes to 8 bits, converts to Y and removes `shave` pixels per side.
    pub fn prepare(plane: &ImagePlane, shave: usize) -> Result<LumaPlane> {
        let y = y_values(&plane.quantized());
        let (w, h) = (plane.width, plane.height);
        if 2 * shave >= w || 2 * shave >= h {
            return Err(Error::Evaluation(format!(
                "shave {shave} leaves nothing of a {w}x{h} image"
            )));
        }
        let (sw, sh) = (w - 2 * shave, h - 2 * shave);
        let data = (shave..h - shave)
            .flat_map(|r| y[r * w + shave..r * w + shave + sw].iter().copied())
            .collect();
        Ok(LumaPlane {
            width: sw,
            height: sh,
            data,
        })
    }
}

fn prepare_pair(sr: &ImagePlane, hr: &ImagePlane, shave: usize) -> Result<(LumaPlane, LumaPlane)> {
    if (sr.width, sr.height) != (hr.width, hr.height) {
        return Err(Error::Evaluation(format!(
            "size mismatch: {}x{} vs {}x{}",
            sr.width, sr.height, hr.width, hr.height
        )));
    }
    Ok((LumaPlane::prepare(sr, shave)?, LumaPlane::prepare(hr, shave)?))
}

/// `10·log10(255² / MSE)` on Y, capped at [`PSNR_CAP`].
pub fn psnr_y(sr: &ImagePlane, hr: &ImagePlane, shave: usize) -> Result<f64> {
    let (a, b) = prepare_pair(sr, hr, shave)?;
    Ok(psnr_luma(&a.data, &b.data))
}

pub fn psnr_luma(a: &[f64], b: &[f64]) -> f64 {
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (255.0 * 255.0 / mse).log10()).min(PSNR_CAP)
}

/// Mean single-scale SSIM over all valid 11×11 Gaussian windows on Y.
pub fn ssim_y(sr: &ImagePlane, hr: &ImagePlane, shave: usize) -> Result<f64> {
    let (a, b) = prepare_pair(sr, hr, shave)?;
    ssim_luma(&a, &b)
}

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= sum);
    g
}

/// 'valid' separable filtering of a w×h plane.
fn filter_valid(src: &[f64], w: usize, h: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| g[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

pub fn ssim_luma(a: &LumaPlane, b: &LumaPlane) -> Result<f64> {
    let (w, h) = (a.width, a.height);
    if (w, h) != (b.width, b.height) {
        return Err(Error::Evaluation("luma planes differ in size".into()));
    }
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Evaluation(format!(
            "{w}x{h} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let g = gaussian_window();
    let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> {
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect()
    };
    let mu_a = filter_valid(&a.data, w, h, &g);
    let mu_b = filter_valid(&b.data, w, h, &g);
    let aa = filter_valid(&prod(|x, _| x * x), w, h, &g);
    let bb = filter_valid(&prod(|_, y| y * y), w, h, &g);
    let ab = filter_valid(&prod(|x, y| x * y), w, h, &g);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
                / ((ma * ma + mb * mb + C1) * (va + vb + C2))
        })
        .sum();
    Ok(total / n as f64)
}

use std::time::Instant;

use crate::data::{bicubic_resize, psnr_y, ssim_y, ImageMetrics, ImagePair, ImagePlane, MetricsReport};
use crate::error::Result;
use crate::model::Model;
use crate::tensor::Tensor;

/// Anything that maps a (1, 3, h, w) image in [0, 1] to (1, 3, p·h, p·w).
pub trait Upscaler {
    fn scale(&self) -> usize;
    fn upscale(&self, lr: &Tensor) -> Result<Tensor>;
}

impl Upscaler for Model {
    fn scale(&self) -> usize {
        self.config.scale
    }

    fn upscale(&self, lr: &Tensor) -> Result<Tensor> {
        self.forward(lr)
    }
}

/// Plain (non-antialiased) bicubic interpolation, the reference baseline.
#[derive(Debug, Clone, Copy)]
pub struct Bicubic {
    pub scale: usize,
}

impl Upscaler for Bicubic {
    fn scale(&self) -> usize {
        self.scale
    }

    fn upscale(&self, lr: &Tensor) -> Result<Tensor> {
        let plane = ImagePlane::from_tensor(lr, 0)?;
        let size = (plane.width * self.scale, plane.height * self.scale);
        Ok(bicubic_resize(&plane, size, false)?.to_tensor())
    }
}

/// PSNR/SSIM on Y for every pair, timing only the upscaling call.
pub fn evaluate(upscaler: &dyn Upscaler, pairs: &[ImagePair], shave: usize) -> Result<MetricsReport> {
    let mut images = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let input = pair.lr.to_tensor();
        let start = Instant::now();
        let output = upscaler.upscale(&input)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let sr = ImagePlane::from_tensor(&output, 0)?;
        images.push(ImageMetrics {
            name: pair.name.clone(),
            psnr: psnr_y(&sr, &pair.hr, shave)?,
            ssim: ssim_y(&sr, &pair.hr, shave)?,
            ms,
        });
    }
    Ok(MetricsReport::new(upscaler.scale(), shave, images))
}

//! Image I/O, colour conversion, resampling, datasets and quality metrics.

mod color;
mod dataset;
mod metrics;
mod plane;
mod report;
mod resize;

pub use color::{luma, rgb_to_y, y_values};
pub use dataset::{load_pairs, prepare_dataset, ImagePair, Manifest};
pub use metrics::{
    gaussian_window, psnr_luma, psnr_y, ssim_luma, ssim_y, LumaPlane, PSNR_CAP, SSIM_SIGMA,
    SSIM_WINDOW,
};
pub use plane::{load_png, quantize, save_png, ColorTag, ImagePlane, Range, Samples};
pub use report::{ImageMetrics, MetricsReport};
pub use resize::{bicubic_resize, contributions, cubic, Taps};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
    /// Forward-pass wall clock, excluding decode and encode.
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scale: usize,
    pub shave: usize,
    pub images: Vec<ImageMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_ms: f64,
}

impl MetricsReport {
    pub fn new(scale: usize, shave: usize, images: Vec<ImageMetrics>) -> Self {
        let mean = |f: fn(&ImageMetrics) -> f64| {
            if images.is_empty() {
                0.0
            } else {
                images.iter().map(f).sum::<f64>() / images.len() as f64
            }
        };
        MetricsReport {
            scale,
            shave,
            mean_psnr: mean(|m| m.psnr),
            mean_ssim: mean(|m| m.ssim),
            mean_ms: mean(|m| m.ms),
            images,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,psnr,ssim,ms\n");
        for m in &self.images {
            out += &format!("{},{:.6},{:.6},{:.3}\n", m.name, m.psnr, m.ssim, m.ms);
        }
        out += &format!(
            "mean,{:.6},{:.6},{:.3}\n",
            self.mean_psnr, self.mean_ssim, self.mean_ms
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let width = self.images.iter().map(|m| m.name.len()).max().unwrap_or(4).max(4);
        let mut out = format!(
            "x{} (shave {})\n{:<width$}  {:>8}  {:>7}  {:>9}\n",
            self.scale, self.shave, "name", "PSNR", "SSIM", "ms"
        );
        for m in &self.images {
            out += &format!(
                "{:<width$}  {:>8.3}  {:>7.4}  {:>9.2}\n",
                m.name, m.psnr, m.ssim, m.ms
            );
        }
        out += &format!(
            "{:<width$}  {:>8.3}  {:>7.4}  {:>9.2}\n",
            "mean", self.mean_psnr, self.mean_ssim, self.mean_ms
        );
        out
    }
}

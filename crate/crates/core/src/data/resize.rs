//! Separable bicubic resampling with imresize-style antialiasing.

use super::plane::{ImagePlane, Range, Samples};
use crate::error::{Error, Result};

/// Cubic convolution kernel with a = −0.5.
pub fn cubic(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 1.0 {
        (1.5 * ax - 2.5) * ax * ax + 1.0
    } else if ax < 2.0 {
        ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0
    } else {
        0.0
    }
}

/// Source taps contributing to one output sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Taps {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Per-output taps along one axis. When shrinking with `antialias`, the
/// kernel is stretched by the inverse scale; indices are clamped at the edges
/// and weights normalised to sum to one.
pub fn contributions(in_len: usize, out_len: usize, antialias: bool) -> Vec<Taps> {
    let scale = out_len as f64 / in_len as f64;
    let (stretch, width) = if scale < 1.0 && antialias {
        (scale, 4.0 / scale)
    } else {
        (1.0, 4.0)
    };
    let taps = width.ceil() as usize + 2;
    (0..out_len)
        .map(|i| {
            let centre = (i as f64 + 0.5) / scale - 0.5;
            let left = (centre - width / 2.0).floor() as isize;
            let mut indices = Vec::with_capacity(taps);
            let mut weights = Vec::with_capacity(taps);
            for k in 0..taps as isize {
                let j = left + k;
                let w = stretch * cubic(stretch * (centre - j as f64));
                if w != 0.0 {
                    indices.push(j.clamp(0, in_len as isize - 1) as usize);
                    weights.push(w);
                }
            }
            let sum: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= sum);
            Taps { indices, weights }
        })
        .collect()
}

/// Resamples every channel to `width` × `height`. The result is a float
/// plane in the input's value range (bytes map to the 0–255 range).
pub fn bicubic_resize(
    plane: &ImagePlane,
    (width, height): (usize, usize),
    antialias: bool,
) -> Result<ImagePlane> {
    if width == 0 || height == 0 {
        return Err(Error::config(format!("cannot resize to {width}x{height}")));
    }
    let range = match &plane.samples {
        Samples::U8(_) => Range::Byte,
        Samples::F32 { range, .. } => *range,
    };
    let c = plane.channels();
    let src: Vec<f64> = plane.to_f32(range).into_iter().map(f64::from).collect();

    // along rows first, then columns
    let cols = contributions(plane.width, width, antialias);
    let mut mid = vec![0.0f64; plane.height * width * c];
    for y in 0..plane.height {
        let row = &src[y * plane.width * c..(y + 1) * plane.width * c];
        for (x, taps) in cols.iter().enumerate() {
            for ch in 0..c {
                mid[(y * width + x) * c + ch] = taps
                    .indices
                    .iter()
                    .zip(&taps.weights)
                    .map(|(&j, &w)| w * row[j * c + ch])
                    .sum();
            }
        }
    }
    let rows = contributions(plane.height, height, antialias);
    let mut out = vec![0.0f32; height * width * c];
    for (y, taps) in rows.iter().enumerate() {
        for i in 0..width * c {
            let v: f64 = taps
                .indices
                .iter()
                .zip(&taps.weights)
                .map(|(&j, &w)| w * mid[j * width * c + i])
                .sum();
            out[y * width * c + i] = v as f32;
        }
    }
    ImagePlane::from_f32(width, height, plane.color, range, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::plane::ColorTag;

    #[test]
    fn kernel_shape() {
        assert_eq!(cubic(0.0), 1.0);
        assert_eq!(cubic(1.0), 0.0);
        assert_eq!(cubic(2.0), 0.0);
        assert_eq!(cubic(-1.5), cubic(1.5));
        assert!((cubic(0.5) - 0.5625).abs() < 1e-15);
        assert!((cubic(1.5) + 0.0625).abs() < 1e-15);
    }

    #[test]
    fn weights_partition_unity_at_any_phase() {
        for (i, o) in [(10, 10), (10, 5), (7, 3), (9, 20), (100, 33), (4, 13)] {
            for aa in [true, false] {
                for t in contributions(i, o, aa) {
                    assert!((t.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    assert!(t.indices.iter().all(|&j| j < i));
                }
            }
        }
        // raw kernel weights at arbitrary phases also sum to one
        for k in 0..50 {
            let phase = k as f64 / 50.0;
            let s: f64 = (-2..=2).map(|j| cubic(phase - j as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_size_is_exact() {
        let data: Vec<f32> = (0..6 * 5 * 3).map(|i| (i * 37 % 101) as f32 / 100.0).collect();
        let img = ImagePlane::from_f32(6, 5, ColorTag::Rgb, Range::Unit, data.clone()).unwrap();
        let out = bicubic_resize(&img, (6, 5), true).unwrap();
        for (a, b) in out.to_f32(Range::Unit).iter().zip(&data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_stays_constant() {
        let img = ImagePlane::from_u8(9, 7, ColorTag::Rgb, vec![77; 9 * 7 * 3]).unwrap();
        for size in [(3, 2), (4, 7), (18, 14), (27, 5)] {
            for aa in [true, false] {
                let out = bicubic_resize(&img, size, aa).unwrap();
                assert!(out.to_f32(Range::Byte).iter().all(|v| (v - 77.0).abs() < 1e-4));
            }
        }
    }

    #[test]
    fn ramp_downscale_matches_kernel_sum() {
        // 1-D ramp, ×1/2 with antialiasing: kernel stretched to width 8
        let n = 16;
        let ramp: Vec<f32> = (0..n).map(|i| i as f32).collect();
        let img = ImagePlane::from_f32(n, 1, ColorTag::Y, Range::Byte, ramp).unwrap();
        let out = bicubic_resize(&img, (n / 2, 1), true).unwrap().to_f32(Range::Byte);
        for (i, v) in out.iter().enumerate() {
            let centre = 2.0 * i as f64 + 0.5;
            let (mut num, mut den) = (0.0, 0.0);
            for j in -10..(n as i64 + 10) {
                let w = 0.5 * cubic(0.5 * (centre - j as f64));
                num += w * j.clamp(0, n as i64 - 1) as f64;
                den += w;
            }
            assert!((*v as f64 - num / den).abs() < 1e-4, "{i}: {v} vs {}", num / den);
        }
        // interior samples of a ramp stay on the ramp
        assert!((out[3] as f64 - 6.5).abs() < 1e-4);
    }

    #[test]
    fn zero_size_rejected() {
        let img = ImagePlane::from_u8(2, 2, ColorTag::Y, vec![0; 4]).unwrap();
        assert!(bicubic_resize(&img, (0, 2), true).is_err());
    }
}

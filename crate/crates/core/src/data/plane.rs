use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorTag {
    Rgb,
    /// Luma only (BT.601 studio swing when produced by `rgb_to_y`).
    Y,
}

impl ColorTag {
    pub fn channels(self) -> usize {
        match self {
            ColorTag::Rgb => 3,
            ColorTag::Y => 1,
        }
    }
}

/// Declared value range of a float plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Range {
    Unit,
    Byte,
}

impl Range {
    pub fn max(self) -> f32 {
        match self {
            Range::Unit => 1.0,
            Range::Byte => 255.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    U8(Vec<u8>),
    F32 { data: Vec<f32>, range: Range },
}

/// An image at rest: interleaved (row, column, channel) samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    pub width: usize,
    pub height: usize,
    pub color: ColorTag,
    pub samples: Samples,
}

/// Clip to [0, 255] and round half away from zero.
pub fn quantize(v: f32) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

impl ImagePlane {
    pub fn from_u8(width: usize, height: usize, color: ColorTag, data: Vec<u8>) -> Result<Self> {
        check_len(width, height, color, data.len())?;
        Ok(ImagePlane {
            width,
            height,
            color,
            samples: Samples::U8(data),
        })
    }

    pub fn from_f32(
        width: usize,
        height: usize,
        color: ColorTag,
        range: Range,
        data: Vec<f32>,
    ) -> Result<Self> {
        check_len(width, height, color, data.len())?;
        Ok(ImagePlane {
            width,
            height,
            color,
            samples: Samples::F32 { data, range },
        })
    }

    pub fn channels(&self) -> usize {
        self.color.channels()
    }

    /// Samples as floats in `range`.
    pub fn to_f32(&self, range: Range) -> Vec<f32> {
        match &self.samples {
            Samples::U8(d) => {
                let k = range.max() / 255.0;
                d.iter().map(|&v| v as f32 * k).collect()
            }
            Samples::F32 { data, range: own } if *own == range => data.clone(),
            Samples::F32 { data, range: own } => {
                let k = range.max() / own.max();
                data.iter().map(|&v| v * k).collect()
            }
        }
    }

    /// 8-bit copy; float samples are scaled to [0, 255], clipped and rounded.
    pub fn quantized(&self) -> ImagePlane {
        let data = match &self.samples {
            Samples::U8(d) => d.clone(),
            Samples::F32 { .. } => self.to_f32(Range::Byte).into_iter().map(quantize).collect(),
        };
        ImagePlane {
            width: self.width,
            height: self.height,
            color: self.color,
            samples: Samples::U8(data),
        }
    }

    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<ImagePlane> {
        if x + width > self.width || y + height > self.height || width == 0 || height == 0 {
            return Err(Error::config(format!(
                "crop {width}x{height}+{x}+{y} outside {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels();
        fn rows<T: Copy>(src: &[T], stride: usize, x: usize, y: usize, w: usize, h: usize) -> Vec<T> {
            (y..y + h)
                .flat_map(|r| src[r * stride + x..r * stride + x + w].iter().copied())
                .collect()
        }
        let stride = self.width * c;
        let samples = match &self.samples {
            Samples::U8(d) => Samples::U8(rows(d, stride, x * c, y, width * c, height)),
            Samples::F32 { data, range } => Samples::F32 {
                data: rows(data, stride, x * c, y, width * c, height),
                range: *range,
            },
        };
        Ok(ImagePlane {
            width,
            height,
            color: self.color,
            samples,
        })
    }

    /// Largest centred crop whose sides are multiples of `p`.
    pub fn crop_divisible(&self, p: usize) -> Result<ImagePlane> {
        let (w, h) = (self.width / p * p, self.height / p * p);
        if w == 0 || h == 0 {
            return Err(Error::config(format!(
                "{}x{} image is smaller than scale {p}",
                self.width, self.height
            )));
        }
        self.crop((self.width - w) / 2, (self.height - h) / 2, w, h)
    }

    /// (1, C, H, W) tensor with values in [0, 1].
    pub fn to_tensor(&self) -> Tensor {
        let (c, plane) = (self.channels(), self.width * self.height);
        let src = self.to_f32(Range::Unit);
        let mut data = vec![0.0; src.len()];
        for (i, px) in src.chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                data[ch * plane + i] = v;
            }
        }
        Tensor::from_vec(Shape::new(1, c, self.height, self.width), data)
            .expect("plane dimensions are consistent")
    }

    /// Float [0, 1] plane from item `n` of a 1- or 3-channel tensor.
    pub fn from_tensor(t: &Tensor, n: usize) -> Result<ImagePlane> {
        let s = t.shape();
        let color = match s.c {
            1 => ColorTag::Y,
            3 => ColorTag::Rgb,
            c => return Err(Error::config(format!("cannot view {c} channels as an image"))),
        };
        let item = t.item(n);
        let plane = s.h * s.w;
        let mut data = vec![0.0; item.len()];
        for i in 0..plane {
            for ch in 0..s.c {
                data[i * s.c + ch] = item[ch * plane + i];
            }
        }
        ImagePlane::from_f32(s.w, s.h, color, Range::Unit, data)
    }
}

fn check_len(width: usize, height: usize, color: ColorTag, len: usize) -> Result<()> {
    if width == 0 || height == 0 || len != width * height * color.channels() {
        return Err(Error::config(format!(
            "{len} samples do not form a {width}x{height} {color:?} image"
        )));
    }
    Ok(())
}

/// Reads an 8-bit PNG. Grayscale is expanded to RGB and alpha is dropped;
/// other bit depths are rejected.
pub fn load_png(path: impl AsRef<Path>) -> Result<ImagePlane> {
    let path = path.as_ref();
    let image_err = |detail: String| Error::Image {
        path: path.to_path_buf(),
        detail,
    };
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format() != Some(image::ImageFormat::Png) {
        return Err(image_err("not a PNG file".into()));
    }
    let rgb = match reader.decode().map_err(|e| image_err(e.to_string()))? {
        img @ (DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_)) => img.into_rgb8(),
        other => {
            return Err(image_err(format!(
                "unsupported sample format {:?} (8-bit only)",
                other.color()
            )))
        }
    };
    let (w, h) = rgb.dimensions();
    ImagePlane::from_u8(w as usize, h as usize, ColorTag::Rgb, rgb.into_raw())
}

/// Writes an 8-bit PNG (RGB or grayscale); float planes are quantized first.
pub fn save_png(plane: &ImagePlane, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let q = plane.quantized();
    let Samples::U8(data) = q.samples else {
        unreachable!("quantized planes hold bytes")
    };
    let (w, h) = (plane.width as u32, plane.height as u32);
    let result = match plane.color {
        ColorTag::Rgb => RgbImage::from_raw(w, h, data).map(|i| i.save(path)),
        ColorTag::Y => GrayImage::from_raw(w, h, data).map(|i| i.save(path)),
    };
    match result {
        Some(Ok(())) => Ok(()),
        Some(Err(image::ImageError::IoError(e))) => Err(Error::io(path, e)),
        Some(Err(e)) => Err(Error::Image {
            path: path.to_path_buf(),
            detail: e.to_string(),
        }),
        None => unreachable!("plane length checked at construction"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> ImagePlane {
        let data = (0..w * h * 3).map(|i| (i * 7 % 256) as u8).collect();
        ImagePlane::from_u8(w, h, ColorTag::Rgb, data).unwrap()
    }

    #[test]
    fn png_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = ramp(13, 7);
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!((back.width, back.height), (13, 7));
        assert_eq!(back, img);
    }

    #[test]
    fn sixteen_bit_png_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        image::ImageBuffer::<image::Rgb<u16>, _>::from_raw(2, 2, vec![1000u16; 12])
            .unwrap()
            .save(&path)
            .unwrap();
        let err = load_png(&path).unwrap_err();
        assert!(matches!(err, Error::Image { .. }), "{err}");
        assert!(err.to_string().contains("8-bit"));
    }

    #[test]
    fn corrupt_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.png");
        std::fs::write(&path, b"\x89PNG\r\n\x1a\nnot really").unwrap();
        assert!(matches!(load_png(&path), Err(Error::Image { .. })));
        assert!(matches!(load_png(dir.path().join("none.png")), Err(Error::Io { .. })));
    }

    #[test]
    fn grayscale_expands_to_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        GrayImage::from_raw(2, 1, vec![10, 200]).unwrap().save(&path).unwrap();
        let img = load_png(&path).unwrap();
        assert_eq!(img.samples, Samples::U8(vec![10, 10, 10, 200, 200, 200]));
    }

    #[test]
    fn quantize_rounds_half_away_and_clips() {
        assert_eq!(quantize(0.5), 1);
        assert_eq!(quantize(1.49), 1);
        assert_eq!(quantize(254.5), 255);
        assert_eq!(quantize(300.0), 255);
        assert_eq!(quantize(-3.0), 0);
    }

    #[test]
    fn tensor_round_trip() {
        let img = ramp(5, 4);
        let t = img.to_tensor();
        assert_eq!(t.shape(), Shape::new(1, 3, 4, 5));
        assert_eq!(t.at(0, 1, 0, 0), img.to_f32(Range::Unit)[1]);
        let back = ImagePlane::from_tensor(&t, 0).unwrap().quantized();
        assert_eq!(back, img);
    }

    #[test]
    fn centre_crop() {
        let img = ramp(100, 99);
        let c = img.crop_divisible(2).unwrap();
        assert_eq!((c.width, c.height), (100, 98));
        assert_eq!(c.crop(0, 0, 1, 1).unwrap().to_f32(Range::Byte), img.crop(0, 0, 1, 1).unwrap().to_f32(Range::Byte));
        assert!(img.crop(95, 0, 10, 1).is_err());
    }
}

use super::plane::{ColorTag, ImagePlane, Range};

/// BT.601 studio-swing luma of [0, 1] RGB, on the [16, 235] scale.
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    16.0 + 65.481 * r + 128.553 * g + 24.966 * b
}

/// Luma samples in f64; Y planes pass through on the 0–255 scale.
pub fn y_values(plane: &ImagePlane) -> Vec<f64> {
    match plane.color {
        ColorTag::Y => plane.to_f32(Range::Byte).into_iter().map(f64::from).collect(),
        ColorTag::Rgb => {
            let rgb = plane.to_f32(Range::Byte);
            rgb.chunks_exact(3)
                .map(|p| luma(p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0))
                .collect()
        }
    }
}

/// Converts an RGB plane to a float Y plane on the 0–255 scale.
pub fn rgb_to_y(plane: &ImagePlane) -> ImagePlane {
    let data = y_values(plane).into_iter().map(|v| v as f32).collect();
    ImagePlane::from_f32(plane.width, plane.height, ColorTag::Y, Range::Byte, data)
        .expect("same dimensions as the input")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(r: f32, g: f32, b: f32) -> ImagePlane {
        ImagePlane::from_f32(1, 1, ColorTag::Rgb, Range::Unit, vec![r, g, b]).unwrap()
    }

    fn y(p: &ImagePlane) -> f32 {
        rgb_to_y(p).to_f32(Range::Byte)[0]
    }

    #[test]
    fn swing_endpoints() {
        assert_eq!(y(&px(0.0, 0.0, 0.0)), 16.0);
        assert!((y(&px(1.0, 1.0, 1.0)) - 235.0).abs() < 1e-4);
        assert!((y(&px(0.5, 0.5, 0.5)) - 125.5).abs() < 1e-4);
    }

    #[test]
    fn affine_in_rgb() {
        let base = (0.9, 0.3, 0.6);
        let y1 = luma(base.0, base.1, base.2);
        for alpha in [0.0, 0.25, 0.5, 0.8, 1.0] {
            let ya = luma(alpha * base.0, alpha * base.1, alpha * base.2);
            assert!(((ya - 16.0) - alpha * (y1 - 16.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn byte_and_unit_inputs_agree() {
        let bytes = ImagePlane::from_u8(1, 1, ColorTag::Rgb, vec![255, 128, 0]).unwrap();
        let unit = px(1.0, 128.0 / 255.0, 0.0);
        assert!((y_values(&bytes)[0] - y_values(&unit)[0]).abs() < 1e-4);
    }
}

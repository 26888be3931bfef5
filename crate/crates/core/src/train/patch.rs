use rand::Rng;

use crate::data::ImagePair;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// An aligned training pair held as (1, 3, h, w) tensors in [0, 1].
#[derive(Debug, Clone)]
pub struct TrainImage {
    pub name: String,
    pub lr: Tensor,
    pub hr: Tensor,
}

impl TrainImage {
    pub fn from_pair(pair: &ImagePair) -> Self {
        TrainImage {
            name: pair.name.clone(),
            lr: pair.lr.to_tensor(),
            hr: pair.hr.to_tensor(),
        }
    }
}

fn crop(t: &Tensor, y: usize, x: usize, h: usize, w: usize) -> Tensor {
    let s = t.shape();
    let mut out = Vec::with_capacity(s.c * h * w);
    for c in 0..s.c {
        for r in y..y + h {
            let start = t.offset(0, c, r, x);
            out.extend_from_slice(&t.data()[start..start + w]);
        }
    }
    Tensor::from_vec(Shape::new(1, s.c, h, w), out).expect("crop inside bounds")
}

/// A random aligned crop: `lr_patch`² from the LR image at (x, y) and
/// `(scale·lr_patch)`² from the HR image at (scale·x, scale·y).
pub fn sample_patch<R: Rng + ?Sized>(
    image: &TrainImage,
    scale: usize,
    lr_patch: usize,
    rng: &mut R,
) -> Result<(Tensor, Tensor)> {
    let (ls, hs) = (image.lr.shape(), image.hr.shape());
    if hs.h != ls.h * scale || hs.w != ls.w * scale {
        return Err(Error::config(format!(
            "{}: HR {}x{} is not x{scale} of LR {}x{}",
            image.name, hs.w, hs.h, ls.w, ls.h
        )));
    }
    if ls.h < lr_patch || ls.w < lr_patch {
        return Err(Error::config(format!(
            "{}: LR image {}x{} is smaller than the {lr_patch}px patch",
            image.name, ls.w, ls.h
        )));
    }
    let x = rng.random_range(0..=ls.w - lr_patch);
    let y = rng.random_range(0..=ls.h - lr_patch);
    let hp = lr_patch * scale;
    Ok((
        crop(&image.lr, y, x, lr_patch, lr_patch),
        crop(&image.hr, y * scale, x * scale, hp, hp),
    ))
}

/// Mirrors every plane left to right.
pub fn flip_horizontal(t: &Tensor) -> Tensor {
    let s = t.shape();
    let mut out = t.clone();
    for row in out.data_mut().chunks_exact_mut(s.w) {
        row.reverse();
    }
    out
}

/// Rotates every plane 90° counter-clockwise; h and w swap.
pub fn rotate90(t: &Tensor) -> Tensor {
    let s = t.shape();
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, s.w, s.h)).expect("same element count");
    for n in 0..s.n {
        for c in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    out.set(n, c, s.w - 1 - x, y, t.at(n, c, y, x));
                }
            }
        }
    }
    out
}

/// Element `k` (0–7) of the dihedral group: a flip when `k ≥ 4`, then
/// `k mod 4` quarter turns.
pub fn dihedral(t: &Tensor, k: usize) -> Tensor {
    let mut out = if k & 4 != 0 { flip_horizontal(t) } else { t.clone() };
    for _ in 0..k % 4 {
        out = rotate90(&out);
    }
    out
}

/// Applies one uniformly drawn dihedral transform to both patches.
pub fn augment<R: Rng + ?Sized>(lr: &Tensor, hr: &Tensor, rng: &mut R) -> (Tensor, Tensor) {
    let k = rng.random_range(0..8);
    (dihedral(lr, k), dihedral(hr, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(c: usize, h: usize, w: usize) -> Tensor {
        let s = Shape::new(1, c, h, w);
        Tensor::from_vec(s, (0..s.len()).map(|i| i as f32).collect()).unwrap()
    }

    fn pair(scale: usize) -> TrainImage {
        let hr = ramp(3, 20 * scale, 24 * scale);
        // LR sampled at the top-left of each HR cell, so alignment is checkable
        let mut lr = Tensor::zeros(Shape::new(1, 3, 20, 24)).unwrap();
        for c in 0..3 {
            for y in 0..20 {
                for x in 0..24 {
                    lr.set(0, c, y, x, hr.at(0, c, y * scale, x * scale));
                }
            }
        }
        TrainImage { name: "ramp".into(), lr, hr }
    }

    #[test]
    fn patches_are_aligned() {
        let img = pair(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (lr, hr) = sample_patch(&img, 2, 8, &mut rng).unwrap();
            assert_eq!(lr.shape(), Shape::new(1, 3, 8, 8));
            assert_eq!(hr.shape(), Shape::new(1, 3, 16, 16));
            for y in 0..8 {
                for x in 0..8 {
                    assert_eq!(lr.at(0, 1, y, x), hr.at(0, 1, 2 * y, 2 * x));
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let img = pair(3);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..5).map(|_| sample_patch(&img, 3, 6, &mut rng).unwrap().0).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn small_image_is_rejected() {
        let img = pair(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_patch(&img, 2, 21, &mut rng).is_err());
        assert!(sample_patch(&img, 3, 4, &mut rng).is_err());
    }

    #[test]
    fn group_identities() {
        let t = ramp(2, 3, 5);
        assert_eq!(flip_horizontal(&flip_horizontal(&t)), t);
        let mut r = t.clone();
        for _ in 0..4 {
            r = rotate90(&r);
        }
        assert_eq!(r, t);
        assert_eq!(rotate90(&t).shape(), Shape::new(1, 2, 5, 3));
        // top-right corner moves to top-left under a counter-clockwise turn
        assert_eq!(rotate90(&t).at(0, 0, 0, 0), t.at(0, 0, 0, 4));
    }

    #[test]
    fn all_eight_transforms_are_distinct_permutations() {
        let t = ramp(1, 4, 4);
        let mut sorted_in = t.data().to_vec();
        sorted_in.sort_by(f32::total_cmp);
        let mut seen = Vec::new();
        for k in 0..8 {
            let d = dihedral(&t, k);
            let mut v = d.data().to_vec();
            v.sort_by(f32::total_cmp);
            assert_eq!(v, sorted_in);
            assert!(!seen.contains(&d), "transform {k} repeats");
            seen.push(d);
        }
    }

    #[test]
    fn augment_keeps_pairs_aligned() {
        let img = pair(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..16 {
            let (lr, hr) = sample_patch(&img, 2, 6, &mut rng).unwrap();
            let (lr, hr) = augment(&lr, &hr, &mut rng);
            // each LR pixel still equals one sample of its 2×2 HR cell
            for y in 0..6 {
                for x in 0..6 {
                    let cell: Vec<f32> = (0..4).map(|i| hr.at(0, 0, 2 * y + i / 2, 2 * x + i % 2)).collect();
                    assert!(cell.contains(&lr.at(0, 0, y, x)));
                }
            }
        }
    }
}

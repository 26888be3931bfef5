#![allow(dead_code)]

use std::path::{Path, PathBuf};

use a2f_core::data::{load_pairs, prepare_dataset, ColorTag, ImagePair, ImagePlane, Range};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Natural-image fixtures shipped with the crate.
pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// Prepares `tests/data/<set>` at `scale` under `out` and loads the pairs.
pub fn prepared(set: &str, scale: usize, out: &Path) -> Vec<ImagePair> {
    prepare_dataset(&fixtures().join(set), scale, out, true).unwrap();
    load_pairs(out, scale).unwrap()
}

pub fn random_rgb(w: usize, h: usize, seed: u64) -> ImagePlane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..w * h * 3).map(|_| rng.random::<u8>()).collect();
    ImagePlane::from_u8(w, h, ColorTag::Rgb, data).unwrap()
}

pub fn y_plane(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> ImagePlane {
    let data = (0..w * h).map(|i| f(i % w, i / w)).collect();
    ImagePlane::from_f32(w, h, ColorTag::Y, Range::Byte, data).unwrap()
}

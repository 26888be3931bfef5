//! Prepared dataset layout: `<root>/HR/*.png` and `<root>/X{p}/*.png` with
//! matching stems, plus a line-delimited manifest of `hr_path,lr_path`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::plane::{load_png, save_png, ImagePlane};
use super::resize::bicubic_resize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub scale: usize,
    /// Pairs relative to `root`.
    pub pairs: Vec<(PathBuf, PathBuf)>,
    /// Inputs that could not be processed, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

impl Manifest {
    pub fn path_for(root: &Path, scale: usize) -> PathBuf {
        root.join(format!("manifest_X{scale}.txt"))
    }

    pub fn path(&self) -> PathBuf {
        Self::path_for(&self.root, self.scale)
    }

    pub fn write(&self) -> Result<PathBuf> {
        let mut text = String::new();
        for (hr, lr) in &self.pairs {
            text += &format!("{},{}\n", hr.display(), lr.display());
        }
        for (path, why) in &self.skipped {
            text += &format!("# skipped {}: {why}\n", path.display());
        }
        let path = self.path();
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(root: &Path, scale: usize) -> Result<Manifest> {
        let path = Self::path_for(root, scale);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (hr, lr) = line.split_once(',').ok_or_else(|| {
                Error::Parse(format!("{}:{}: expected hr_path,lr_path", path.display(), n + 1))
            })?;
            pairs.push((PathBuf::from(hr), PathBuf::from(lr)));
        }
        Ok(Manifest {
            root: root.to_path_buf(),
            scale,
            pairs,
            skipped: Vec::new(),
        })
    }
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|x| x.to_string_lossy().eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

/// Centre-crops every HR PNG in `hr_dir` to a multiple of `scale`, writes it
/// to `out_dir/HR/` and its bicubic 1/`scale` downsample to `out_dir/X{scale}/`,
/// then writes the manifest. Unreadable images are skipped and listed.
pub fn prepare_dataset(hr_dir: &Path, scale: usize, out_dir: &Path, antialias: bool) -> Result<Manifest> {
    let inputs = png_files(hr_dir)?;
    if inputs.is_empty() {
        return Err(Error::config(format!("no PNG images in {}", hr_dir.display())));
    }
    let lr_name = format!("X{scale}");
    for sub in ["HR", lr_name.as_str()] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut manifest = Manifest {
        root: out_dir.to_path_buf(),
        scale,
        pairs: Vec::new(),
        skipped: Vec::new(),
    };
    for input in inputs {
        let prepared = load_png(&input).and_then(|img| {
            let hr = img.crop_divisible(scale)?;
            let lr = bicubic_resize(&hr, (hr.width / scale, hr.height / scale), antialias)?;
            Ok((hr, lr))
        });
        let (hr, lr) = match prepared {
            Ok(pair) => pair,
            Err(e) => {
                log::warn!("skipping {}: {e}", input.display());
                manifest.skipped.push((input, e.to_string()));
                continue;
            }
        };
        let file = format!("{}.png", stem(&input));
        let hr_rel = Path::new("HR").join(&file);
        let lr_rel = Path::new(&lr_name).join(&file);
        save_png(&hr, out_dir.join(&hr_rel))?;
        save_png(&lr, out_dir.join(&lr_rel))?;
        manifest.pairs.push((hr_rel, lr_rel));
    }
    manifest.write()?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct ImagePair {
    pub name: String,
    pub hr: ImagePlane,
    pub lr: ImagePlane,
}

/// Loads the (LR, HR) pairs of a prepared root, from its manifest when
/// present and otherwise by matching stems; unmatched stems are an error.
pub fn load_pairs(root: &Path, scale: usize) -> Result<Vec<ImagePair>> {
    let paths = if Manifest::path_for(root, scale).exists() {
        Manifest::read(root, scale)?
            .pairs
            .into_iter()
            .map(|(h, l)| (root.join(h), root.join(l)))
            .collect()
    } else {
        match_stems(root, scale)?
    };
    if paths.is_empty() {
        return Err(Error::config(format!("no image pairs under {}", root.display())));
    }
    paths
        .into_iter()
        .map(|(hr_path, lr_path)| {
            let hr = load_png(&hr_path)?;
            let lr = load_png(&lr_path)?;
            if (hr.width, hr.height) != (lr.width * scale, lr.height * scale) {
                return Err(Error::Evaluation(format!(
                    "{}: HR {}x{} is not x{scale} of LR {}x{}",
                    stem(&hr_path),
                    hr.width,
                    hr.height,
                    lr.width,
                    lr.height
                )));
            }
            Ok(ImagePair {
                name: stem(&hr_path),
                hr,
                lr,
            })
        })
        .collect()
}

fn match_stems(root: &Path, scale: usize) -> Result<Vec<(PathBuf, PathBuf)>> {
    let by_stem = |dir: PathBuf| -> Result<BTreeMap<String, PathBuf>> {
        Ok(png_files(&dir)?.into_iter().map(|p| (stem(&p), p)).collect())
    };
    let hr = by_stem(root.join("HR"))?;
    let mut lr = by_stem(root.join(format!("X{scale}")))?;
    let mut pairs = Vec::new();
    let mut hr_only = Vec::new();
    for (name, h) in hr {
        match lr.remove(&name) {
            Some(l) => pairs.push((h, l)),
            None => hr_only.push(name),
        }
    }
    if !hr_only.is_empty() || !lr.is_empty() {
        let lr_only: Vec<String> = lr.into_keys().collect();
        return Err(Error::Evaluation(format!(
            "unmatched images: HR only [{}], LR only [{}]",
            hr_only.join(", "),
            lr_only.join(", ")
        )));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::plane::ColorTag;

    fn write_img(dir: &Path, name: &str, w: usize, h: usize) {
        let data = (0..w * h * 3).map(|i| (i * 11 % 256) as u8).collect();
        save_png(&ImagePlane::from_u8(w, h, ColorTag::Rgb, data).unwrap(), dir.join(name)).unwrap();
    }

    #[test]
    fn prepares_cropped_pairs_and_manifest() {
        let src = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        write_img(src.path(), "a.png", 100, 99);
        write_img(src.path(), "b.png", 20, 20);
        fs::write(src.path().join("c.png"), b"junk").unwrap();
        let m = prepare_dataset(src.path(), 2, out.path(), true).unwrap();
        assert_eq!(m.pairs.len(), 2);
        assert_eq!(m.skipped.len(), 1);
        let pairs = load_pairs(out.path(), 2).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!((pairs[0].hr.width, pairs[0].hr.height), (100, 98));
        assert_eq!((pairs[0].lr.width, pairs[0].lr.height), (50, 49));
        let text = fs::read_to_string(m.path()).unwrap();
        assert!(text.contains("HR/a.png,X2/a.png"));
        assert!(text.contains("# skipped"));
    }

    #[test]
    fn empty_and_missing_dirs() {
        let src = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        assert!(matches!(prepare_dataset(src.path(), 2, out.path(), true), Err(Error::Config(_))));
        let missing = src.path().join("nope");
        assert!(matches!(prepare_dataset(&missing, 2, out.path(), true), Err(Error::Io { .. })));
    }

    #[test]
    fn orphans_are_listed() {
        let root = tempfile::tempdir().unwrap();
        fs::create_dir_all(root.path().join("HR")).unwrap();
        fs::create_dir_all(root.path().join("X2")).unwrap();
        write_img(&root.path().join("HR"), "a.png", 8, 8);
        write_img(&root.path().join("HR"), "b.png", 8, 8);
        write_img(&root.path().join("X2"), "a.png", 4, 4);
        write_img(&root.path().join("X2"), "z.png", 4, 4);
        let err = load_pairs(root.path(), 2).unwrap_err().to_string();
        assert!(err.contains("HR only [b]") && err.contains("LR only [z]"), "{err}");
    }
}

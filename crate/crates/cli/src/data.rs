use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use vsn_core::io::{read_image_png, read_map, read_mask_png, read_rgs};
use vsn_core::{BinaryMask, ProbMap, SampleRecord};

/// Sample id of a file: the stem with any `img_`, `gt_` or `pred_` prefix
/// removed.
pub fn sample_id(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    let id = ["img_", "gt_", "pred_"]
        .iter()
        .find_map(|p| stem.strip_prefix(p))
        .unwrap_or(stem);
    Some(id.to_string())
}

fn has_ext(path: &Path, exts: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

/// Files in `dir` whose name starts with `prefix` and has one of `exts`,
/// sorted by name.
pub fn list_files(dir: &Path, prefix: &str, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if path.is_file() && name.starts_with(prefix) && has_ext(&path, exts) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Loads `img_*.png` from `dir`, pairing each with `gt_<id>.png` and
/// `img_<id>.rgs` when present.
pub fn load_dataset(dir: &Path) -> Result<Vec<SampleRecord>> {
    let images = list_files(dir, "img_", &["png"])?;
    if images.is_empty() {
        bail!("no img_*.png files in {}", dir.display());
    }
    let mut out = Vec::with_capacity(images.len());
    for path in images {
        let id = sample_id(&path).expect("listed files have stems");
        let image = read_image_png(&path).with_context(|| format!("reading {}", path.display()))?;
        let gt_path = dir.join(format!("gt_{id}.png"));
        let gt = if gt_path.is_file() {
            Some(read_mask_png(&gt_path).with_context(|| format!("reading {}", gt_path.display()))?)
        } else {
            None
        };
        let rgs_path = path.with_extension("rgs");
        let regions = if rgs_path.is_file() {
            Some(read_rgs(&rgs_path).with_context(|| format!("reading {}", rgs_path.display()))?)
        } else {
            None
        };
        out.push(SampleRecord::new(id, image, regions, gt)?);
    }
    Ok(out)
}

/// Loads every map (`.pmf` or `.png`) in `dir`, keyed by sample id.
pub fn load_maps(dir: &Path) -> Result<Vec<(String, ProbMap)>> {
    let files = list_files(dir, "", &["pmf", "png"])?;
    if files.is_empty() {
        bail!("no .pmf or .png maps in {}", dir.display());
    }
    files
        .iter()
        .map(|p| {
            let map = read_map(p).with_context(|| format!("reading {}", p.display()))?;
            Ok((sample_id(p).expect("listed files have stems"), map))
        })
        .collect()
}

/// Loads `gt_*.png` masks (or any `.png` if none carry the prefix).
pub fn load_masks(dir: &Path) -> Result<Vec<(String, BinaryMask)>> {
    let mut files = list_files(dir, "gt_", &["png"])?;
    if files.is_empty() {
        files = list_files(dir, "", &["png"])?;
    }
    if files.is_empty() {
        bail!("no ground-truth masks in {}", dir.display());
    }
    files
        .iter()
        .map(|p| {
            let mask = read_mask_png(p).with_context(|| format!("reading {}", p.display()))?;
            Ok((sample_id(p).expect("listed files have stems"), mask))
        })
        .collect()
}

/// Removes the outputs it tracks when dropped without `keep()`.
pub struct OutputGuard {
    paths: Vec<(PathBuf, bool)>,
}

impl OutputGuard {
    pub fn new() -> Self {
        Self { paths: Vec::new() }
    }

    /// Creates `dir` (and parents) and tracks it if it did not exist yet.
    pub fn dir(&mut self, dir: &Path) -> Result<()> {
        if !dir.exists() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            self.paths.push((dir.to_path_buf(), true));
        }
        Ok(())
    }

    /// Tracks a file about to be written.
    pub fn file(&mut self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            self.dir(parent)?;
        }
        self.paths.push((path.to_path_buf(), false));
        Ok(())
    }

    pub fn keep(mut self) {
        self.paths.clear();
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        for (path, is_dir) in self.paths.iter().rev() {
            let _ = if *is_dir {
                fs::remove_dir_all(path)
            } else {
                fs::remove_file(path)
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_drop_known_prefixes() {
        assert_eq!(sample_id(Path::new("a/img_0007.png")).unwrap(), "0007");
        assert_eq!(sample_id(Path::new("gt_0007.png")).unwrap(), "0007");
        assert_eq!(sample_id(Path::new("pred_x.pmf")).unwrap(), "x");
        assert_eq!(sample_id(Path::new("scene.pmf")).unwrap(), "scene");
    }

    #[test]
    fn guard_removes_unkept_outputs() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("out");
        {
            let mut g = OutputGuard::new();
            g.dir(&dir).unwrap();
            fs::write(dir.join("x"), b"1").unwrap();
        }
        assert!(!dir.exists());
        let mut g = OutputGuard::new();
        g.dir(&dir).unwrap();
        g.keep();
        assert!(dir.exists());
    }

    #[test]
    fn guard_leaves_existing_directories() {
        let tmp = tempfile::tempdir().unwrap();
        let file = tmp.path().join("f.txt");
        {
            let mut g = OutputGuard::new();
            g.file(&file).unwrap();
            fs::write(&file, b"partial").unwrap();
        }
        assert!(!file.exists());
        assert!(tmp.path().exists());
    }
}

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DataError, Image, Label, Mask, Sample};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// How images and masks are laid out under a dataset root: one folder per
/// product, each holding images and masks that share a file stem plus
/// `mask_suffix`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub mask_suffix: String,
    pub extensions: Vec<String>,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            mask_suffix: "_label".into(),
            extensions: ["png", "bmp", "jpg", "jpeg"].iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Layout {
    fn is_image_file(&self, path: &Path) -> bool {
        path.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| self.extensions.iter().any(|x| x.eq_ignore_ascii_case(e)))
    }
}

/// One line of the corpus manifest. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image: String,
    pub mask: String,
    pub label: Label,
    pub product_id: String,
    pub image_id: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_luma(path: &Path) -> Result<(usize, usize, Vec<u8>), DataError> {
    let img = image::open(path).map_err(|e| DataError::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let g = img.to_luma8();
    Ok((g.height() as usize, g.width() as usize, g.into_raw()))
}

/// Read any supported image file as grayscale in `[0, 1]`.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image, DataError> {
    let (height, width, px) = read_luma(path.as_ref())?;
    Ok(Image {
        height,
        width,
        data: px.iter().map(|v| *v as f32 / 255.0).collect(),
    })
}

/// Write 8-bit grayscale pixels; the format follows the file extension.
pub fn save_gray(path: impl AsRef<Path>, height: usize, width: usize, px: Vec<u8>) -> Result<(), DataError> {
    let path = path.as_ref();
    image::GrayImage::from_raw(width as u32, height as u32, px)
        .ok_or_else(|| DataError::Invalid(format!("pixel buffer does not match {height}×{width}")))?
        .save(path)
        .map_err(|e| DataError::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

/// Read an image and its mask (thresholded at `> 0`).
pub fn read_pair(image: &Path, mask: &Path, product_id: &str, image_id: &str) -> Result<Sample, DataError> {
    let (h, w, px) = read_luma(image)?;
    let (mh, mw, mp) = read_luma(mask)?;
    if (mh, mw) != (h, w) {
        return Err(DataError::DimensionMismatch {
            path: mask.to_path_buf(),
            image: (h, w),
            mask: (mh, mw),
        });
    }
    let img = Image {
        height: h,
        width: w,
        data: px.iter().map(|v| *v as f32 / 255.0).collect(),
    };
    let m = Mask {
        height: h,
        width: w,
        data: mp.iter().map(|v| *v > 0).collect(),
    };
    Sample::new(img, m, product_id, image_id)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_err(dir)))
        .collect::<Result<_, _>>()?;
    v.sort();
    Ok(v)
}

/// Load every product folder under `root`. Samples come back sorted by
/// product and file name.
pub fn load_dataset(root: impl AsRef<Path>, layout: &Layout) -> Result<Vec<Sample>, DataError> {
    let root = root.as_ref();
    let mut samples = Vec::new();
    for dir in sorted_entries(root)? {
        if !dir.is_dir() {
            continue;
        }
        let product = dir.file_name().unwrap().to_string_lossy().to_string();
        let files = sorted_entries(&dir)?;
        for path in &files {
            if !layout.is_image_file(path) {
                continue;
            }
            let stem = path.file_stem().unwrap().to_string_lossy().to_string();
            if stem.ends_with(&layout.mask_suffix) {
                continue;
            }
            let expected = format!("{stem}{}", layout.mask_suffix);
            let mask = files
                .iter()
                .find(|p| layout.is_image_file(p) && p.file_stem().is_some_and(|s| s.to_string_lossy() == expected))
                .ok_or_else(|| DataError::MissingMask {
                    image: path.clone(),
                    expected: expected.clone(),
                })?;
            samples.push(read_pair(path, mask, &product, &format!("{product}/{stem}"))?);
        }
    }
    if samples.is_empty() {
        log::warn!("no samples found under {}", root.display());
    }
    Ok(samples)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    for r in records {
        let line = serde_json::to_string(r).expect("manifest records serialize");
        writeln!(f, "{line}").map_err(io_err(path))?;
    }
    f.flush().map_err(io_err(path))
}

/// Load the samples listed in a manifest; the stored label must agree with the mask.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Sample>, DataError> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| DataError::Manifest {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let r: ManifestRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let s = read_pair(&base.join(&r.image), &base.join(&r.mask), &r.product_id, &r.image_id)?;
        if s.label != r.label {
            return Err(bad(format!("label {:?} disagrees with mask of {}", r.label, r.image)));
        }
        samples.push(s);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_png(path: &Path, w: u32, h: u32, px: Vec<u8>) {
        image::GrayImage::from_raw(w, h, px).unwrap().save(path).unwrap();
    }

    #[test]
    fn loads_product_folders() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("kos01");
        fs::create_dir(&p).unwrap();
        write_png(&p.join("Part0.png"), 4, 2, vec![0, 255, 0, 0, 0, 0, 0, 0]);
        write_png(&p.join("Part0_label.png"), 4, 2, vec![0, 0, 0, 1, 0, 0, 0, 0]);
        write_png(&p.join("Part1.png"), 4, 2, vec![10; 8]);
        write_png(&p.join("Part1_label.png"), 4, 2, vec![0; 8]);
        let s = load_dataset(dir.path(), &Layout::default()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].image_id, "kos01/Part0");
        assert!(s[0].is_defective() && !s[1].is_defective());
        assert_eq!(s[0].image.get(0, 1), 1.0);
    }

    #[test]
    fn missing_mask_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a");
        fs::create_dir(&p).unwrap();
        write_png(&p.join("x.png"), 2, 2, vec![0; 4]);
        let err = load_dataset(dir.path(), &Layout::default()).unwrap_err();
        assert!(err.to_string().contains("x.png"), "{err}");
    }

    #[test]
    fn mismatched_mask_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a");
        fs::create_dir(&p).unwrap();
        write_png(&p.join("x.png"), 2, 2, vec![0; 4]);
        write_png(&p.join("x_label.png"), 1, 2, vec![0; 2]);
        assert!(matches!(
            load_dataset(dir.path(), &Layout::default()),
            Err(DataError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn empty_root_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path(), &Layout::default()).unwrap().is_empty());
    }
}

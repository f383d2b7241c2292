//! Seeded synthetic defect corpus: textured backgrounds, some with a thin
//! polyline crack whose mask is known exactly.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loader::{save_gray, write_manifest, ManifestRecord, MANIFEST_FILE};
use super::{DataError, Image, Label, Mask};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_pos: usize,
    pub n_neg: usize,
    /// Side length of the square images; must be a multiple of 64.
    pub size: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SynthSummary {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub samples: usize,
    pub defective: usize,
    pub products: usize,
}

/// Smooth noise: a random lattice of `cells×cells` values, bilinearly interpolated.
fn value_noise(rng: &mut impl Rng, size: usize, cells: usize) -> Vec<f32> {
    let n = cells + 1;
    let lattice: Vec<f32> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let scale = cells as f32 / size as f32;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let fy = y as f32 * scale;
        let (y0, ty) = (fy as usize, fy.fract());
        for x in 0..size {
            let fx = x as f32 * scale;
            let (x0, tx) = (fx as usize, fx.fract());
            let at = |yy: usize, xx: usize| lattice[yy * n + xx];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
            let bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

fn background(rng: &mut impl Rng, size: usize) -> Vec<f32> {
    let base: f32 = rng.gen_range(0.4..0.6);
    let coarse = value_noise(rng, size, 4);
    let fine = value_noise(rng, size, 16);
    let grain = Normal::new(0.0f32, 0.02).unwrap();
    coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| (base + 0.1 * c + 0.04 * f + grain.sample(rng)).clamp(0.2, 0.8))
        .collect()
}

fn segment_distance(p: (f32, f32), a: (f32, f32), b: (f32, f32)) -> f32 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Random-walk polyline rasterized with a brush of `width` pixels: a pixel
/// belongs to the crack when its center is within `width / 2` of the line.
fn crack(rng: &mut impl Rng, size: usize) -> Mask {
    let s = size as f32;
    let lo = 4.0;
    let hi = s - 5.0;
    let mut p = (rng.gen_range(0.2 * s..0.8 * s), rng.gen_range(0.2 * s..0.8 * s));
    let mut angle: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
    let turn = Normal::new(0.0f32, 0.6).unwrap();
    let mut pts = vec![p];
    for _ in 0..rng.gen_range(3..=6) {
        angle += turn.sample(rng);
        let len = rng.gen_range(0.06 * s..0.15 * s);
        p = (
            (p.0 + len * angle.cos()).clamp(lo, hi),
            (p.1 + len * angle.sin()).clamp(lo, hi),
        );
        pts.push(p);
    }
    let half = rng.gen_range(1..=4) as f32 / 2.0;
    let mut m = Mask::empty(size, size);
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let x0 = (a.0.min(b.0) - half).floor().max(0.0) as usize;
        let x1 = ((a.0.max(b.0) + half).ceil() as usize).min(size - 1);
        let y0 = (a.1.min(b.1) - half).floor().max(0.0) as usize;
        let y1 = ((a.1.max(b.1) + half).ceil() as usize).min(size - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if segment_distance((x as f32, y as f32), a, b) <= half {
                    m.set(y, x, true);
                }
            }
        }
    }
    m
}

/// Background, final image and mask of one synthetic sample.
pub(crate) fn render(rng: &mut impl Rng, size: usize, defective: bool) -> (Vec<f32>, Image, Mask) {
    let bg = background(rng, size);
    let mut data = bg.clone();
    let mask = if defective {
        let m = crack(rng, size);
        let contrast: f32 = rng.gen_range(0.15..0.3);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        for (v, on) in data.iter_mut().zip(&m.data) {
            if *on {
                *v += sign * contrast;
            }
        }
        m
    } else {
        Mask::empty(size, size)
    };
    let image = Image {
        height: size,
        width: size,
        data,
    };
    (bg, image, mask)
}

/// One in-memory sample; `index` selects an independent random stream of `seed`.
pub fn synth_sample(seed: u64, index: u64, size: usize, defective: bool) -> (Image, Mask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let (_, image, mask) = render(&mut rng, size, defective);
    (image, mask)
}

/// Write `n_pos + n_neg` samples as 8-bit PNGs in the default loader layout,
/// plus a manifest. There are `max(n_pos, 3)` products; each of the first
/// `n_pos` holds one defective image and negatives are dealt round-robin.
pub fn synth_generate(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<SynthSummary, DataError> {
    if cfg.size == 0 || cfg.size % 64 != 0 {
        return Err(DataError::Invalid(format!(
            "synthetic image size must be a multiple of 64, got {}",
            cfg.size
        )));
    }
    let root = out_dir.as_ref().to_path_buf();
    let products = cfg.n_pos.max(3);
    let mut per_product: Vec<Vec<bool>> = vec![Vec::new(); products];
    for p in per_product.iter_mut().take(cfg.n_pos) {
        p.push(true);
    }
    for i in 0..cfg.n_neg {
        per_product[i % products].push(false);
    }
    fs::create_dir_all(&root).map_err(|source| DataError::Io {
        path: root.clone(),
        source,
    })?;
    let mut records = Vec::new();
    let mut index = 0u64;
    for (p, items) in per_product.iter().enumerate() {
        let product = format!("prod{p:03}");
        let dir = root.join(&product);
        fs::create_dir_all(&dir).map_err(|source| DataError::Io {
            path: dir.clone(),
            source,
        })?;
        for (i, &defective) in items.iter().enumerate() {
            let (image, mask) = synth_sample(cfg.seed, index, cfg.size, defective);
            index += 1;
            let stem = format!("img{i:02}");
            save_gray(dir.join(format!("{stem}.png")), cfg.size, cfg.size, image.to_luma8())?;
            save_gray(
                dir.join(format!("{stem}_label.png")),
                cfg.size,
                cfg.size,
                mask.to_luma8(),
            )?;
            records.push(ManifestRecord {
                image: format!("{product}/{stem}.png"),
                mask: format!("{product}/{stem}_label.png"),
                label: if defective {
                    Label::Defective
                } else {
                    Label::NonDefective
                },
                product_id: product.clone(),
                image_id: format!("{product}/{stem}"),
            });
        }
    }
    let manifest = root.join(MANIFEST_FILE);
    write_manifest(&manifest, &records)?;
    Ok(SynthSummary {
        root,
        manifest,
        samples: records.len(),
        defective: cfg.n_pos,
        products,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_is_exactly_the_changed_pixels() {
        for index in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            rng.set_stream(index);
            let (bg, img, mask) = render(&mut rng, 64, true);
            assert!(mask.any());
            for i in 0..bg.len() {
                assert_eq!(img.data[i] != bg[i], mask.data[i]);
                assert!((0.0..=1.0).contains(&img.data[i]));
            }
            // contrast survives 8-bit quantization
            let q = img.to_luma8();
            let qb: Vec<u8> = bg.iter().map(|v| (v * 255.0).round() as u8).collect();
            assert!(q.iter().zip(&qb).zip(&mask.data).all(|((a, b), m)| (a != b) == *m));
        }
    }

    #[test]
    fn negatives_have_empty_masks() {
        let (_, m) = synth_sample(3, 0, 64, false);
        assert!(!m.any());
    }

    #[test]
    fn crack_width_bounded() {
        let (_, m) = synth_sample(5, 2, 128, true);
        // a 1–4 px brush over at most 6 segments of ≤ 0.15·size covers a thin area
        assert!(m.count() < 128 * 128 / 10, "{}", m.count());
    }

    #[test]
    fn size_must_be_multiple_of_64() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_pos: 1,
            n_neg: 1,
            size: 100,
            seed: 0,
        };
        assert!(synth_generate(&cfg, dir.path()).is_err());
    }
}

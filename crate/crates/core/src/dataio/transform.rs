use rand::Rng;

use super::{DataError, Image, Mask, Sample};

/// Reduce resolution by `factor`: image by block mean, mask by block max.
/// Apply annotation dilation before calling this.
pub fn downscale(sample: &Sample, factor: usize) -> Result<Sample, DataError> {
    let (h, w) = (sample.image.height, sample.image.width);
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(DataError::Invalid(format!(
            "{}: {h}×{w} is not divisible by {factor}",
            sample.image_id
        )));
    }
    let (oh, ow) = (h / factor, w / factor);
    let mut data = vec![0f32; oh * ow];
    for y in 0..h {
        for x in 0..w {
            data[(y / factor) * ow + x / factor] += sample.image.get(y, x);
        }
    }
    let area = (factor * factor) as f32;
    data.iter_mut().for_each(|v| *v /= area);
    Ok(Sample {
        image: Image {
            height: oh,
            width: ow,
            data,
        },
        mask: sample.mask.reduce_max(factor)?,
        label: sample.label,
        product_id: sample.product_id.clone(),
        image_id: sample.image_id.clone(),
    })
}

/// Rotate image and mask by 90° clockwise.
pub fn rotate90(sample: &Sample) -> Sample {
    let (h, w) = (sample.image.height, sample.image.width);
    // new[y'][x'] = old[h-1-x'][y'], with shape w×h
    let mut img = Vec::with_capacity(h * w);
    let mut mask = Vec::with_capacity(h * w);
    for y in 0..w {
        for x in 0..h {
            img.push(sample.image.get(h - 1 - x, y));
            mask.push(sample.mask.get(h - 1 - x, y));
        }
    }
    Sample {
        image: Image {
            height: w,
            width: h,
            data: img,
        },
        mask: Mask {
            height: w,
            width: h,
            data: mask,
        },
        label: sample.label,
        product_id: sample.product_id.clone(),
        image_id: sample.image_id.clone(),
    }
}

/// With probability `p` return the sample rotated by 90°, otherwise a copy.
/// One uniform draw is consumed per call.
pub fn rotate90_augment(sample: &Sample, p: f64, rng: &mut impl Rng) -> (Sample, bool) {
    let rotate = rng.gen::<f64>() < p;
    if rotate {
        (rotate90(sample), true)
    } else {
        (sample.clone(), false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(h: usize, w: usize) -> Sample {
        let img = Image::new(h, w, (0..h * w).map(|i| i as f32 / (h * w) as f32).collect()).unwrap();
        let mut m = Mask::empty(h, w);
        m.set(0, w - 1, true);
        Sample::new(img, m, "p", "i").unwrap()
    }

    #[test]
    fn downscale_halves_and_keeps_single_positive() {
        let s = ramp(8, 4);
        let d = downscale(&s, 2).unwrap();
        assert_eq!((d.image.height, d.image.width), (4, 2));
        assert_eq!(d.mask.count(), 1);
        assert!(d.is_defective());
        let expect = (s.image.get(0, 0) + s.image.get(0, 1) + s.image.get(1, 0) + s.image.get(1, 1)) / 4.0;
        assert_eq!(d.image.get(0, 0), expect);
        assert!(downscale(&ramp(6, 3), 2).is_err());
    }

    #[test]
    fn constant_image_stays_constant() {
        let s = Sample::new(Image::filled(4, 4, 0.25), Mask::empty(4, 4), "p", "i").unwrap();
        assert!(downscale(&s, 2).unwrap().image.data.iter().all(|v| *v == 0.25));
    }

    #[test]
    fn rotation_moves_top_right_to_bottom_right() {
        let s = ramp(2, 3);
        let r = rotate90(&s);
        assert_eq!((r.image.height, r.image.width), (3, 2));
        assert!(r.mask.get(2, 1));
        assert_eq!(r.image.get(0, 0), s.image.get(1, 0));
    }

    #[test]
    fn four_rotations_are_identity() {
        let s = ramp(4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut r = s.clone();
        for _ in 0..4 {
            r = rotate90_augment(&r, 1.0, &mut rng).0;
        }
        assert_eq!(r, s);
        assert_eq!(rotate90_augment(&s, 0.0, &mut rng).0, s);
    }
}

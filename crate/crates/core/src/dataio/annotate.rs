use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DataError, Mask};

/// Which ground-truth mask a model is trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKind {
    Original,
    Dilate5,
    Dilate9,
    Dilate13,
    Dilate17,
    /// Filled axis-aligned bounding box.
    Big,
    /// Filled minimum-area rotated rectangle.
    Coarse,
}

impl AnnotationKind {
    pub const ALL: [AnnotationKind; 7] = [
        AnnotationKind::Original,
        AnnotationKind::Dilate5,
        AnnotationKind::Dilate9,
        AnnotationKind::Dilate13,
        AnnotationKind::Dilate17,
        AnnotationKind::Big,
        AnnotationKind::Coarse,
    ];

    /// The five pixel-precise variants compared in the configuration grid.
    pub const DILATIONS: [AnnotationKind; 5] = [
        AnnotationKind::Original,
        AnnotationKind::Dilate5,
        AnnotationKind::Dilate9,
        AnnotationKind::Dilate13,
        AnnotationKind::Dilate17,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnnotationKind::Original => "original",
            AnnotationKind::Dilate5 => "dilate5",
            AnnotationKind::Dilate9 => "dilate9",
            AnnotationKind::Dilate13 => "dilate13",
            AnnotationKind::Dilate17 => "dilate17",
            AnnotationKind::Big => "big",
            AnnotationKind::Coarse => "coarse",
        }
    }

    pub fn kernel(self) -> Option<usize> {
        match self {
            AnnotationKind::Dilate5 => Some(5),
            AnnotationKind::Dilate9 => Some(9),
            AnnotationKind::Dilate13 => Some(13),
            AnnotationKind::Dilate17 => Some(17),
            _ => None,
        }
    }

    /// Derive this variant from an original mask. Empty masks stay empty.
    pub fn apply(self, mask: &Mask) -> Result<Mask, DataError> {
        if !mask.any() {
            return Ok(mask.clone());
        }
        match self {
            AnnotationKind::Original => Ok(mask.clone()),
            AnnotationKind::Big => make_box_annotation(mask, false),
            AnnotationKind::Coarse => make_box_annotation(mask, true),
            k => dilate_mask(mask, k.kernel().expect("dilation variant")),
        }
    }
}

impl fmt::Display for AnnotationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnnotationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        AnnotationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown annotation `{s}` (expected one of original, dilate5, dilate9, dilate13, dilate17, big, coarse)"))
    }
}

/// Binary dilation with a `k×k` square, done as two 1-D max filters.
pub fn dilate_mask(mask: &Mask, k: usize) -> Result<Mask, DataError> {
    if k % 2 == 0 {
        return Err(DataError::Invalid(format!("dilation kernel must be odd, got {k}")));
    }
    let r = k / 2;
    let (h, w) = (mask.height, mask.width);
    let mut rows = Mask::empty(h, w);
    for y in 0..h {
        let line = &mask.data[y * w..(y + 1) * w];
        // running count of positives inside the window
        let mut prefix = vec![0usize; w + 1];
        for x in 0..w {
            prefix[x + 1] = prefix[x] + line[x] as usize;
        }
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r + 1).min(w);
            rows.data[y * w + x] = prefix[hi] > prefix[lo];
        }
    }
    let mut out = Mask::empty(h, w);
    for x in 0..w {
        let mut prefix = vec![0usize; h + 1];
        for y in 0..h {
            prefix[y + 1] = prefix[y] + rows.data[y * w + x] as usize;
        }
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r + 1).min(h);
            out.data[y * w + x] = prefix[hi] > prefix[lo];
        }
    }
    Ok(out)
}

/// Oriented rectangle in pixel-center coordinates (`x` right, `y` down).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotatedRect {
    pub center: (f64, f64),
    /// Unit vector of the first side.
    pub axis: (f64, f64),
    /// Half extents along `axis` and its perpendicular.
    pub half: (f64, f64),
}

impl RotatedRect {
    pub fn area(&self) -> f64 {
        4.0 * self.half.0 * self.half.1
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        const EPS: f64 = 1e-9;
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (ux, uy) = self.axis;
        let a = dx * ux + dy * uy;
        let b = -dx * uy + dy * ux;
        a.abs() <= self.half.0 + EPS && b.abs() <= self.half.1 + EPS
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; returns the hull counter-clockwise without
/// collinear points.
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn rect_along(hull: &[(f64, f64)], axis: (f64, f64)) -> RotatedRect {
    let (ux, uy) = axis;
    let (mut a0, mut a1, mut b0, mut b1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in hull {
        let a = x * ux + y * uy;
        let b = -x * uy + y * ux;
        a0 = a0.min(a);
        a1 = a1.max(a);
        b0 = b0.min(b);
        b1 = b1.max(b);
    }
    let (ca, cb) = ((a0 + a1) / 2.0, (b0 + b1) / 2.0);
    RotatedRect {
        center: (ca * ux - cb * uy, ca * uy + cb * ux),
        axis,
        half: ((a1 - a0) / 2.0, (b1 - b0) / 2.0),
    }
}

/// Minimum-area rectangle enclosing every positive pixel square. The
/// axis-aligned box wins ties.
pub fn min_area_rect(mask: &Mask) -> Result<RotatedRect, DataError> {
    let mut corners = Vec::new();
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(y, x) {
                let (fx, fy) = (x as f64, y as f64);
                corners.extend([
                    (fx - 0.5, fy - 0.5),
                    (fx + 0.5, fy - 0.5),
                    (fx - 0.5, fy + 0.5),
                    (fx + 0.5, fy + 0.5),
                ]);
            }
        }
    }
    if corners.is_empty() {
        return Err(DataError::Invalid("box annotation of an empty mask".into()));
    }
    let hull = convex_hull(corners);
    let mut best = rect_along(&hull, (1.0, 0.0));
    for i in 0..hull.len() {
        let (p, q) = (hull[i], hull[(i + 1) % hull.len()]);
        let (dx, dy) = (q.0 - p.0, q.1 - p.1);
        let len = dx.hypot(dy);
        if len == 0.0 {
            continue;
        }
        let r = rect_along(&hull, (dx / len, dy / len));
        if r.area() < best.area() - 1e-9 {
            best = r;
        }
    }
    Ok(best)
}

/// Replace a mask by its filled bounding box (`rotated = false`) or its
/// filled minimum-area rotated rectangle (`rotated = true`). Pixels are
/// included when their center lies inside the rectangle.
pub fn make_box_annotation(mask: &Mask, rotated: bool) -> Result<Mask, DataError> {
    if !rotated {
        let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
        for y in 0..mask.height {
            for x in 0..mask.width {
                if mask.get(y, x) {
                    y0 = y0.min(y);
                    y1 = y1.max(y);
                    x0 = x0.min(x);
                    x1 = x1.max(x);
                }
            }
        }
        if y0 == usize::MAX {
            return Err(DataError::Invalid("box annotation of an empty mask".into()));
        }
        return Ok(Mask::from_fn(mask.height, mask.width, |y, x| {
            (y0..=y1).contains(&y) && (x0..=x1).contains(&x)
        }));
    }
    let rect = min_area_rect(mask)?;
    let filled = Mask::from_fn(mask.height, mask.width, |y, x| rect.contains(x as f64, y as f64));
    Ok(filled.union(mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(h: usize, w: usize, y: usize, x: usize) -> Mask {
        let mut m = Mask::empty(h, w);
        m.set(y, x, true);
        m
    }

    #[test]
    fn single_pixel_becomes_block() {
        let d = dilate_mask(&dot(11, 11, 5, 5), 5).unwrap();
        assert_eq!(d.count(), 25);
        assert!(d.get(3, 3) && d.get(7, 7) && !d.get(2, 5));
        let corner = dilate_mask(&dot(11, 11, 0, 0), 5).unwrap();
        assert_eq!(corner.count(), 9);
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(dilate_mask(&Mask::empty(4, 4), 4).is_err());
        assert_eq!(dilate_mask(&Mask::empty(4, 4), 9).unwrap().count(), 0);
    }

    #[test]
    fn diagonal_pair_axis_box() {
        let mut m = dot(6, 6, 1, 1);
        m.set(3, 4, true);
        let b = make_box_annotation(&m, false).unwrap();
        assert_eq!(b.count(), 3 * 4);
        assert!(b.get(1, 4) && b.get(3, 1));
    }

    #[test]
    fn axis_aligned_segment_same_both_ways() {
        let m = Mask::from_fn(8, 12, |y, x| y == 3 && (2..9).contains(&x));
        let a = make_box_annotation(&m, false).unwrap();
        let r = make_box_annotation(&m, true).unwrap();
        assert_eq!(a, m);
        assert_eq!(r, a);
    }

    #[test]
    fn diagonal_line_gets_thin_rotated_box() {
        let m = Mask::from_fn(40, 40, |y, x| x == y && (5..35).contains(&x));
        let rect = min_area_rect(&m).unwrap();
        let axis = make_box_annotation(&m, false).unwrap();
        let rot = make_box_annotation(&m, true).unwrap();
        assert!(rect.area() < 0.2 * 30.0 * 30.0, "{rect:?}");
        assert!(m.is_subset_of(&rot));
        assert!(rot.count() < axis.count() / 4);
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(make_box_annotation(&Mask::empty(3, 3), true).is_err());
        assert!(make_box_annotation(&Mask::empty(3, 3), false).is_err());
    }

    #[test]
    fn names_round_trip() {
        for k in AnnotationKind::ALL {
            assert_eq!(k.name().parse::<AnnotationKind>().unwrap(), k);
        }
        assert_eq!("dilate-5".parse::<AnnotationKind>().unwrap(), AnnotationKind::Dilate5);
        assert!("dilate7".parse::<AnnotationKind>().is_err());
    }
}

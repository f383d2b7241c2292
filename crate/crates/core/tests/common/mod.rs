//! Brute-force reference implementations shared by the integration tests
//! and the acceptance harness. Each follows its definition literally.
#![allow(dead_code)]

use segdec::dataio::Mask;
use segdec::eval::{ScoredItem, ScoredSet};
use segdec::tensor::Tensor;

/// Quadruple-loop "same" convolution.
pub fn direct_conv(input: &Tensor<f64>, weights: &Tensor<f64>, bias: &[f64]) -> Tensor<f64> {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (o_n, k) = (weights.shape()[0], weights.shape()[2]);
    let p = (k / 2) as isize;
    let mut out = Tensor::zeros(&[o_n, h, w]);
    for o in 0..o_n {
        for y in 0..h {
            for x in 0..w {
                let mut acc = bias[o];
                for c in 0..c_in {
                    for dy in 0..k {
                        for dx in 0..k {
                            let sy = y as isize + dy as isize - p;
                            let sx = x as isize + dx as isize - p;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            acc += input.data()[(c * h + sy as usize) * w + sx as usize]
                                * weights.data()[((o * c_in + c) * k + dy) * k + dx];
                        }
                    }
                }
                out.data_mut()[(o * h + y) * w + x] = acc;
            }
        }
    }
    out
}

/// 2×2 window maxima and the flat input index of the first maximal entry
/// in row-major window order.
pub fn window_max(input: &Tensor<f64>) -> (Vec<f64>, Vec<usize>) {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (mut vals, mut idx) = (Vec::new(), Vec::new());
    for ch in 0..c {
        for y in 0..h / 2 {
            for x in 0..w / 2 {
                let mut best = (f64::NEG_INFINITY, 0);
                for dy in 0..2 {
                    for dx in 0..2 {
                        let i = (ch * h + 2 * y + dy) * w + 2 * x + dx;
                        if input.data()[i] > best.0 {
                            best = (input.data()[i], i);
                        }
                    }
                }
                vals.push(best.0);
                idx.push(best.1);
            }
        }
    }
    (vals, idx)
}

/// Sliding-window max filter.
pub fn brute_dilate(m: &Mask, k: usize) -> Mask {
    let r = (k / 2) as isize;
    Mask::from_fn(m.height, m.width, |y, x| {
        for dy in -r..=r {
            for dx in -r..=r {
                let (yy, xx) = (y as isize + dy, x as isize + dx);
                if yy >= 0
                    && xx >= 0
                    && (yy as usize) < m.height
                    && (xx as usize) < m.width
                    && m.get(yy as usize, xx as usize)
                {
                    return true;
                }
            }
        }
        false
    })
}

pub fn scored(scores: &[f64], labels: &[bool]) -> ScoredSet {
    ScoredSet::new(
        scores
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (s, l))| ScoredItem {
                image_id: format!("img{i}"),
                score: *s,
                defective: *l,
            })
            .collect(),
    )
    .unwrap()
}

/// Distinct scores, highest first.
fn thresholds(scores: &[f64]) -> Vec<f64> {
    let mut t = scores.to_vec();
    t.sort_by(|a, b| b.partial_cmp(a).unwrap());
    t.dedup();
    t
}

/// (tp, fp) when every score ≥ `t` is called defective.
fn counts(scores: &[f64], labels: &[bool], t: f64) -> (usize, usize) {
    let mut c = (0, 0);
    for (s, l) in scores.iter().zip(labels) {
        if *s >= t {
            if *l {
                c.0 += 1;
            } else {
                c.1 += 1;
            }
        }
    }
    c
}

/// Step-integrated AP, recounting at every distinct threshold.
pub fn brute_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let p = labels.iter().filter(|l| **l).count() as f64;
    let mut prev_r = 0.0;
    let mut ap = 0.0;
    for t in thresholds(scores) {
        let (tp, fp) = counts(scores, labels, t);
        let r = tp as f64 / p;
        ap += (r - prev_r) * tp as f64 / (tp + fp) as f64;
        prev_r = r;
    }
    ap
}

/// The same sum in exact rational arithmetic, as `(numerator, denominator)`:
/// `AP = Σ Δtp_k · tp_k / (tp_k + fp_k) / P`.
pub fn exact_ap(scores: &[f64], labels: &[bool]) -> (u128, u128) {
    fn gcd(a: u128, b: u128) -> u128 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let p = labels.iter().filter(|l| **l).count() as u128;
    let (mut num, mut den) = (0u128, 1u128);
    let mut prev_tp = 0;
    for t in thresholds(scores) {
        let (tp, fp) = counts(scores, labels, t);
        // add (tp − prev_tp)·tp / ((tp + fp)·P)
        let (n, d) = (((tp - prev_tp) * tp) as u128, (tp + fp) as u128 * p);
        num = num * d + n * den;
        den *= d;
        let g = gcd(num, den).max(1);
        num /= g;
        den /= g;
        prev_tp = tp;
    }
    (num, den)
}

/// `(threshold, fp, fn)` maximizing F1, ties to the higher threshold. F1
/// values are compared as exact fractions `2tp / (2tp + fp + fn)`.
pub fn brute_best_f(scores: &[f64], labels: &[bool]) -> (f64, usize, usize) {
    let p = labels.iter().filter(|l| **l).count();
    let mut best: Option<(usize, usize, f64, usize, usize)> = None;
    for t in thresholds(scores) {
        let (tp, fp) = counts(scores, labels, t);
        let fneg = p - tp;
        let (num, den) = (2 * tp, 2 * tp + fp + fneg);
        let better = match best {
            None => true,
            Some((bn, bd, ..)) => num * bd > bn * den,
        };
        if better {
            best = Some((num, den, t, fp, fneg));
        }
    }
    let (_, _, t, fp, fneg) = best.unwrap();
    (t, fp, fneg)
}

/// Negatives flagged at the highest threshold that still catches every positive.
pub fn brute_fp_full_recall(scores: &[f64], labels: &[bool]) -> usize {
    let p = labels.iter().filter(|l| **l).count();
    for t in thresholds(scores) {
        let (tp, fp) = counts(scores, labels, t);
        if tp == p {
            return fp;
        }
    }
    unreachable!("the lowest threshold catches every positive")
}

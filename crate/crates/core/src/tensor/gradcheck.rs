//! Central finite-difference verification of the hand-written backward passes.
//!
//! Every check builds a scalar probe objective `L = Σ u ⊙ layer(θ)` with a
//! fixed random `u`, evaluates the analytic gradient by running the layer's
//! backward pass with upstream `u`, and compares it entry by entry against
//! `(L(θ+ε) − L(θ−ε)) / 2ε`. Only forward passes are used on the numerical
//! side.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Denominator floor so entries whose true gradient is zero compare sanely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn test_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.sample(StandardNormal))
}

/// Values drawn so that no two entries lie within 0.05 of each other, which
/// keeps max-style layers away from ties under an `ε` perturbation.
pub fn distinct_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut ranks: Vec<usize> = (0..n).collect();
    ranks.shuffle(rng);
    Tensor::from_fn(shape, |i| {
        (ranks[i] as f64 + rng.gen_range(0.0..0.5)) * 0.1 - 0.05 * n as f64
    })
}

/// `|a − n| / max(|a|, |n|, REL_FLOOR)` for a single entry.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Relative error of one gradient tensor in the ∞-norm:
/// `‖a − n‖∞ / max(‖a‖∞, ‖n‖∞, REL_FLOOR)`.
///
/// Per-entry ratios are dominated by rounding in `L(θ±ε)` for entries that
/// are tiny relative to their neighbours; the norm-wise form is what a
/// gradient check can actually resolve at `ε = 1e-5`.
pub fn tensor_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(REL_FLOOR, f64::max);
    diff / scale
}

/// Central-difference gradient of `objective` at `point` for the entries
/// selected by `keep` (others are left at zero).
pub fn numeric_gradient(
    mut objective: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    eps: f64,
    keep: impl Fn(usize) -> bool,
) -> Vec<f64> {
    let mut theta = point.to_vec();
    let mut grad = vec![0.0; point.len()];
    for i in (0..theta.len()).filter(|&i| keep(i)) {
        let orig = theta[i];
        theta[i] = orig + eps;
        let up = objective(&theta);
        theta[i] = orig - eps;
        let down = objective(&theta);
        theta[i] = orig;
        grad[i] = (up - down) / (2.0 * eps);
    }
    grad
}

/// Largest [`tensor_rel_error`] over the parameter blocks `blocks` of the
/// flattened `point` (e.g. input, weights, bias), restricted to the entries
/// for which `keep` holds.
pub fn grad_check_where(
    objective: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    blocks: &[usize],
    eps: f64,
    keep: impl Fn(usize) -> bool,
) -> f64 {
    assert_eq!(point.len(), analytic.len());
    assert_eq!(blocks.iter().sum::<usize>(), point.len(), "blocks must cover the point");
    let numeric = numeric_gradient(objective, point, eps, &keep);
    let mut start = 0;
    let mut worst = 0.0f64;
    for &len in blocks {
        let idx: Vec<usize> = (start..start + len).filter(|&i| keep(i)).collect();
        let a: Vec<f64> = idx.iter().map(|&i| analytic[i]).collect();
        let n: Vec<f64> = idx.iter().map(|&i| numeric[i]).collect();
        worst = worst.max(tensor_rel_error(&a, &n));
        start += len;
    }
    worst
}

/// Maximum relative error of `analytic` against central differences of
/// `objective`, evaluated per block of the flattened parameter vector.
pub fn grad_check(
    objective: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    blocks: &[usize],
    eps: f64,
) -> f64 {
    grad_check_where(objective, point, analytic, blocks, eps, |_| true)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pack(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// Random conv layer `C×H×W → O×H×W` with a `k×k` kernel; checks input,
/// weight and bias gradients.
pub fn check_conv(rng: &mut impl Rng, c: usize, h: usize, w: usize, o: usize, k: usize) -> f64 {
    let x = random_tensor(rng, &[c, h, w]);
    let wt = random_tensor(rng, &[o, c, k, k]);
    let b = random_tensor(rng, &[o]).into_vec();
    let u = random_tensor(rng, &[o, h, w]);
    let g = conv2d_backward(&x, &wt, &u, true).unwrap();
    let analytic = pack(&[g.d_input.as_ref().unwrap().data(), g.d_weights.data(), &g.d_bias]);
    let (nx, nw) = (x.len(), wt.len());
    let objective = |t: &[f64]| {
        let x = Tensor::from_vec(&[c, h, w], t[..nx].to_vec()).unwrap();
        let wt = Tensor::from_vec(&[o, c, k, k], t[nx..nx + nw].to_vec()).unwrap();
        dot(conv2d(&x, &wt, &t[nx + nw..]).unwrap().data(), u.data())
    };
    grad_check(
        objective,
        &pack(&[x.data(), wt.data(), &b]),
        &analytic,
        &[nx, nw, o],
        DEFAULT_EPS,
    )
}

/// Feature normalization in the given mode; checks input, gamma and beta gradients.
pub fn check_feature_norm(rng: &mut impl Rng, c: usize, h: usize, w: usize, mode: NormMode) -> f64 {
    let x = random_tensor(rng, &[c, h, w]);
    let u = random_tensor(rng, &[c, h, w]);
    let mut st = NormState::new(c);
    st.gamma = random_tensor(rng, &[c]).into_vec();
    st.beta = random_tensor(rng, &[c]).into_vec();
    st.running_mean = random_tensor(rng, &[c]).into_vec();
    st.running_var = (0..c).map(|_| rng.gen_range(0.5..2.0)).collect();
    let (_, cache) = feature_norm(&x, mode, &st).unwrap();
    let g = feature_norm_backward(&cache, &st, &u).unwrap();
    let analytic = pack(&[g.d_input.data(), &g.d_gamma, &g.d_beta]);
    let n = x.len();
    let objective = |t: &[f64]| {
        let mut s = st.clone();
        s.gamma = t[n..n + c].to_vec();
        s.beta = t[n + c..].to_vec();
        let x = Tensor::from_vec(&[c, h, w], t[..n].to_vec()).unwrap();
        dot(feature_norm(&x, mode, &s).unwrap().0.data(), u.data())
    };
    grad_check(
        objective,
        &pack(&[x.data(), &st.gamma, &st.beta]),
        &analytic,
        &[n, c, c],
        DEFAULT_EPS,
    )
}

/// ReLU input gradient, excluding entries within 1e-3 of the kink.
pub fn check_relu(rng: &mut impl Rng, shape: &[usize]) -> f64 {
    let x = random_tensor(rng, shape);
    let u = random_tensor(rng, shape);
    let analytic = relu_backward(&x, &u).unwrap();
    let objective = |t: &[f64]| dot(relu(&Tensor::from_vec(shape, t.to_vec()).unwrap()).data(), u.data());
    grad_check_where(objective, x.data(), analytic.data(), &[x.len()], DEFAULT_EPS, |i| {
        x.data()[i].abs() >= 1e-3
    })
}

pub fn check_maxpool(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> f64 {
    let x = distinct_tensor(rng, &[c, h, w]);
    let u = random_tensor(rng, &[c, h / 2, w / 2]);
    let (_, idx) = maxpool2(&x).unwrap();
    let analytic = maxpool2_backward(&idx, &u).unwrap();
    let objective = |t: &[f64]| {
        dot(
            maxpool2(&Tensor::from_vec(&[c, h, w], t.to_vec()).unwrap())
                .unwrap()
                .0
                .data(),
            u.data(),
        )
    };
    grad_check(objective, x.data(), analytic.data(), &[x.len()], DEFAULT_EPS)
}

pub fn check_global_pool(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> f64 {
    let x = distinct_tensor(rng, &[c, h, w]);
    let um = random_tensor(rng, &[c]).into_vec();
    let ua = random_tensor(rng, &[c]).into_vec();
    let gp = global_pool(&x).unwrap();
    let analytic = global_pool_backward(&gp, &um, &ua).unwrap();
    let objective = |t: &[f64]| {
        let gp = global_pool(&Tensor::from_vec(&[c, h, w], t.to_vec()).unwrap()).unwrap();
        dot(&gp.max, &um) + dot(&gp.avg, &ua)
    };
    grad_check(objective, x.data(), analytic.data(), &[x.len()], DEFAULT_EPS)
}

/// Linear head of width `n`; checks input, weight and bias gradients.
pub fn check_linear(rng: &mut impl Rng, n: usize) -> f64 {
    let x = random_tensor(rng, &[n]).into_vec();
    let w = random_tensor(rng, &[n]).into_vec();
    let b: f64 = rng.sample(StandardNormal);
    let u: f64 = rng.sample(StandardNormal);
    let g = linear_backward(&x, &w, u).unwrap();
    let analytic = pack(&[g.d_input.as_ref().unwrap().data(), g.d_weights.data(), &g.d_bias]);
    let objective = |t: &[f64]| u * linear(&t[..n], &t[n..2 * n], t[2 * n]).unwrap();
    grad_check(objective, &pack(&[&x, &w, &[b]]), &analytic, &[n, n, 1], DEFAULT_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_layer_within_1e8() {
        let mut rng = test_rng(31);
        for _ in 0..10 {
            assert!(check_linear(&mut rng, 66) < 1e-8);
        }
    }

    #[test]
    fn conv_5x5_on_8x8_within_1e6() {
        let mut rng = test_rng(32);
        assert!(check_conv(&mut rng, 1, 8, 8, 2, 5) < 1e-6);
    }

    #[test]
    fn feature_norm_train_within_1e5() {
        let mut rng = test_rng(33);
        for _ in 0..5 {
            assert!(check_feature_norm(&mut rng, 3, 4, 5, NormMode::Train) < 1e-5);
            assert!(check_feature_norm(&mut rng, 2, 3, 3, NormMode::Infer) < 1e-5);
        }
    }

    #[test]
    fn pools_and_relu() {
        let mut rng = test_rng(34);
        assert!(check_maxpool(&mut rng, 2, 6, 4) < 1e-8);
        assert!(check_global_pool(&mut rng, 3, 4, 3) < 1e-8);
        assert!(check_relu(&mut rng, &[2, 5, 5]) < 1e-8);
    }

    #[test]
    fn rel_error_floor() {
        assert_eq!(rel_error(0.0, 0.0), 0.0);
        assert!(rel_error(1e-12, -1e-12) < 1e-5);
        assert!((rel_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        assert!((tensor_rel_error(&[1.0, 0.001], &[1.0, 0.0011]) - 1e-4).abs() < 1e-15);
        assert_eq!(tensor_rel_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
    }
}

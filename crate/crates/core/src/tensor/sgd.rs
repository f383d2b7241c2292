use super::{Real, Result, TensorError};

/// A parameter buffer paired with its gradient for one update step.
pub struct Param<'a, T> {
    pub name: String,
    pub value: &'a mut [T],
    pub grad: &'a [T],
    pub frozen: bool,
}

/// Plain SGD without momentum: `p ← p − lr·g` on every non-frozen parameter.
///
/// All gradients are validated before anything is written, so a non-finite
/// gradient leaves every parameter untouched.
pub fn sgd_step<T: Real>(params: &mut [Param<'_, T>], lr: T) -> Result<()> {
    if !lr.is_finite() || lr < T::zero() {
        return Err(TensorError::Invalid {
            op: "sgd_step",
            reason: format!("learning rate must be finite and non-negative, got {lr:?}"),
        });
    }
    for p in params.iter() {
        if p.value.len() != p.grad.len() {
            return Err(TensorError::ShapeMismatch {
                op: "sgd_step",
                expected: vec![p.value.len()],
                got: vec![p.grad.len()],
            });
        }
        if !p.frozen && p.grad.iter().any(|g| !g.is_finite()) {
            return Err(TensorError::NonFiniteGradient { param: p.name.clone() });
        }
    }
    for p in params.iter_mut().filter(|p| !p.frozen) {
        for (v, &g) in p.value.iter_mut().zip(p.grad) {
            *v -= lr * g;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(value: &mut [f64], grad: &[f64], lr: f64, frozen: bool) -> Result<()> {
        sgd_step(
            &mut [Param {
                name: "p".into(),
                value,
                grad,
                frozen,
            }],
            lr,
        )
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut v = [1.0, -2.0];
        step(&mut v, &[0.0, 0.0], 0.1, false).unwrap();
        assert_eq!(v, [1.0, -2.0]);
    }

    #[test]
    fn hand_arithmetic() {
        let mut v = [1.0];
        step(&mut v, &[0.5], 0.1, false).unwrap();
        assert!((v[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut v = [1.0, 3.0];
        step(&mut v, &[7.0, -2.0], 0.0, false).unwrap();
        assert_eq!(v, [1.0, 3.0]);
    }

    #[test]
    fn frozen_untouched() {
        let mut v = [1.0];
        step(&mut v, &[5.0], 0.1, true).unwrap();
        assert_eq!(v, [1.0]);
    }

    #[test]
    fn quadratic_descent_decreases_loss() {
        let target = 3.0;
        let mut p = [-1.0];
        let loss = |p: f64| 0.5 * (p - target) * (p - target);
        let before = loss(p[0]);
        let g = [p[0] - target];
        step(&mut p, &g, 0.1, false).unwrap();
        assert!(loss(p[0]) < before);
    }

    #[test]
    fn non_finite_gradient_aborts_whole_step() {
        let mut a = [1.0];
        let mut b = [2.0];
        let err = sgd_step(
            &mut [
                Param {
                    name: "a".into(),
                    value: &mut a,
                    grad: &[1.0],
                    frozen: false,
                },
                Param {
                    name: "b".into(),
                    value: &mut b,
                    grad: &[f64::NAN],
                    frozen: false,
                },
            ],
            0.1,
        )
        .unwrap_err();
        assert_eq!(err, TensorError::NonFiniteGradient { param: "b".into() });
        assert_eq!((a, b), ([1.0], [2.0]));
    }
}

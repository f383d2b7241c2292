use super::{Real, Result, Tensor};

/// Elementwise `max(0, x)`.
pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `upstream` where the forward input was strictly positive.
///
/// `activation` may be either the ReLU input or its output; both are positive
/// at exactly the same positions.
pub fn relu_backward<T: Real>(activation: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    upstream.check_shape("relu_backward", activation.shape())?;
    let data = activation
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&a, &g)| if a > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(activation.shape(), data)
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let t = Tensor::<f64>::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_all_negative_kills_gradient() {
        let t = Tensor::<f64>::full(&[2, 2, 2], -0.5);
        assert!(relu(&t).data().iter().all(|v| *v == 0.0));
        let g = relu_backward(&t, &Tensor::full(&[2, 2, 2], 1.0)).unwrap();
        assert!(g.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_at_zero_is_zero() {
        let t = Tensor::<f64>::from_vec(&[2], vec![0.0, 1e-300]).unwrap();
        let g = relu_backward(&t, &Tensor::full(&[2], 3.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 3.0]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!((sigmoid(800.0f64) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert!(sigmoid(-800.0f64).is_finite());
        assert!((sigmoid(2.0f64) + sigmoid(-2.0f64) - 1.0).abs() < 1e-15);
    }
}

use super::{LayerGrad, Real, Result, Tensor, TensorError};

/// `Σ input·weights + bias`.
pub fn linear<T: Real>(input: &[T], weights: &[T], bias: T) -> Result<T> {
    if input.len() != weights.len() {
        return Err(TensorError::ShapeMismatch {
            op: "linear",
            expected: vec![weights.len()],
            got: vec![input.len()],
        });
    }
    Ok(input.iter().zip(weights).map(|(&x, &w)| x * w).sum::<T>() + bias)
}

pub fn linear_backward<T: Real>(input: &[T], weights: &[T], upstream: T) -> Result<LayerGrad<T>> {
    if input.len() != weights.len() {
        return Err(TensorError::ShapeMismatch {
            op: "linear_backward",
            expected: vec![weights.len()],
            got: vec![input.len()],
        });
    }
    let n = input.len();
    Ok(LayerGrad {
        d_weights: Tensor::from_fn(&[n], |i| input[i] * upstream),
        d_bias: vec![upstream],
        d_input: Some(Tensor::from_fn(&[n], |i| weights[i] * upstream)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_return_bias() {
        assert_eq!(linear(&[1.0, -2.0, 3.0], &[0.0; 3], 0.7).unwrap(), 0.7);
    }

    #[test]
    fn one_hot_selects_input() {
        assert_eq!(linear(&[1.0, -2.0, 3.0], &[0.0, 1.0, 0.0], 0.0).unwrap(), -2.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(linear(&[1.0, 2.0], &[1.0], 0.0).is_err());
        assert!(linear_backward(&[1.0, 2.0], &[1.0], 1.0).is_err());
    }

    #[test]
    fn backward_values() {
        let g = linear_backward(&[1.0, 2.0], &[3.0, -1.0], 0.5).unwrap();
        assert_eq!(g.d_weights.data(), &[0.5, 1.0]);
        assert_eq!(g.d_bias, vec![0.5]);
        assert_eq!(g.d_input.unwrap().data(), &[1.5, -0.5]);
    }
}

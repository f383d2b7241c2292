//! Convolution and pooling against direct loop implementations on random
//! tensors up to 4×16×16.

use proptest::prelude::*;
use segdec::tensor::{conv2d, maxpool2, Tensor};

mod common;
use common::{direct_conv, window_max};

/// Small integers keep every product and partial sum exactly representable,
/// so any summation order gives the same bits.
fn int_tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor<f64>> {
    let n: usize = shape.iter().product();
    proptest::collection::vec(-4i32..=4, n)
        .prop_map(move |v| Tensor::from_vec(&shape, v.into_iter().map(f64::from).collect()).unwrap())
}

fn real_tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor<f64>> {
    let n: usize = shape.iter().product();
    proptest::collection::vec(-2.0f64..2.0, n).prop_map(move |v| Tensor::from_vec(&shape, v).unwrap())
}

fn conv_case(integer: bool) -> impl Strategy<Value = (Tensor<f64>, Tensor<f64>, Vec<f64>)> {
    (
        1usize..=4,
        1usize..=16,
        1usize..=16,
        1usize..=4,
        prop::sample::select(vec![1usize, 3, 5, 7]),
    )
        .prop_flat_map(move |(c, h, w, o, k)| {
            let gen = move |s: Vec<usize>| -> BoxedStrategy<Tensor<f64>> {
                if integer {
                    int_tensor(s).boxed()
                } else {
                    real_tensor(s).boxed()
                }
            };
            (gen(vec![c, h, w]), gen(vec![o, c, k, k]), gen(vec![o]))
        })
        .prop_map(|(x, w, b)| (x, w, b.into_vec()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn conv_equals_direct_loops_exactly((x, w, b) in conv_case(true)) {
        let (got, want) = (conv2d(&x, &w, &b).unwrap(), direct_conv(&x, &w, &b));
        prop_assert_eq!(got.data(), want.data());
    }

    #[test]
    fn conv_equals_direct_loops_on_reals((x, w, b) in conv_case(false)) {
        let got = conv2d(&x, &w, &b).unwrap();
        for (a, e) in got.data().iter().zip(direct_conv(&x, &w, &b).data()) {
            prop_assert!((a - e).abs() < 1e-12, "{} vs {}", a, e);
        }
    }

    #[test]
    fn maxpool_equals_window_scan(
        x in (1usize..=4, 1usize..=8, 1usize..=8).prop_flat_map(|(c, h, w)| int_tensor(vec![c, 2 * h, 2 * w]))
    ) {
        let (out, idx) = maxpool2(&x).unwrap();
        let (vals, arg) = window_max(&x);
        prop_assert_eq!(out.data(), &vals[..]);
        prop_assert_eq!(idx.argmax.iter().map(|i| *i as usize).collect::<Vec<_>>(), arg);
    }
}

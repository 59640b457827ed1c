use offroad_nn::{relu, softmax, softmax_cross_entropy, tanh, Tensor};
use proptest::prelude::*;

fn logits() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..5, 2usize..7).prop_flat_map(|(b, c)| (Just(b), Just(c), prop::collection::vec(-300.0f64..300.0, b * c)))
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions((b, c, data) in logits()) {
        let p = softmax(&Tensor::new(&[b, c], data).unwrap());
        for r in 0..b {
            let row = p.row(r);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_ignores_shifts(data in prop::collection::vec(-50.0f64..50.0, 4), shift in -100.0f64..100.0) {
        let a = softmax(&Tensor::vector(&data));
        let shifted: Vec<f64> = data.iter().map(|v| v + shift).collect();
        let b = softmax(&Tensor::vector(&shifted));
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_is_non_negative(data in prop::collection::vec(-40.0f64..40.0, 5), label in 0usize..5) {
        let ce = softmax_cross_entropy(&Tensor::vector(&data), label).unwrap();
        prop_assert!(ce.loss >= 0.0 && ce.loss.is_finite());
        prop_assert!(ce.grad_logits.data().iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn activations_stay_in_range(data in prop::collection::vec(-1e3f64..1e3, 1..32)) {
        let x = Tensor::vector(&data);
        prop_assert!(relu(&x).data().iter().all(|&v| v >= 0.0));
        prop_assert!(tanh(&x).data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }
}

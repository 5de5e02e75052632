mod common;

use proptest::prelude::*;
use slipsense::preprocess::{savitzky_golay, FilterSpec};

use common::{max_abs_diff, moving_average};

// scipy.signal.savgol_filter(x, 11, 3) at indices 5..25
const REF_CUBIC_11: [f64; 20] = [
    1.1546367003487883, 0.9578409814838469, 0.6584750409678255, 0.38020831107781505, 0.01341893123975037,
    -0.26398527579390013, -0.5617429090195325, -0.7564022130068991, -0.7384653075320255, -0.6576438256615451,
    -0.39661197493776434, -0.1379831488568149, 0.16639011087127747, 0.5584639680391856, 0.8378891083244072,
    1.09511125071008, 1.148032627851485, 1.0726422362352972, 0.962295468311813, 0.68464328440295,
];

#[test]
fn cubic_interior_matches_reference() {
    let x: Vec<f64> = (0..30).map(|i| (0.37 * i as f64).sin() + 0.1 * ((i * 7) % 5) as f64).collect();
    let y = savitzky_golay(&x, FilterSpec::new(11, 3).unwrap()).unwrap();
    assert!(max_abs_diff(&y[5..25], &REF_CUBIC_11) < 1e-12);
}

#[test]
fn quadratic_is_reproduced_everywhere_by_quadratic_fit() {
    let x: Vec<f64> = (0..40).map(|i| 0.3 * (i * i) as f64 - 2.0 * i as f64 + 5.0).collect();
    let y = savitzky_golay(&x, FilterSpec::new(9, 2).unwrap()).unwrap();
    assert!(max_abs_diff(&x, &y) < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn order_one_interior_is_moving_average(
        x in prop::collection::vec(-5.0f64..5.0, 60..400),
        frame in prop::sample::select(vec![5usize, 11, 21, 51]),
    ) {
        let y = savitzky_golay(&x, FilterSpec::new(frame, 1).unwrap()).unwrap();
        for (i, m) in moving_average(&x, frame).into_iter().enumerate() {
            if let Some(m) = m {
                prop_assert!((y[i] - m).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn smoothing_is_linear(
        x in prop::collection::vec(-5.0f64..5.0, 60),
        z in prop::collection::vec(-5.0f64..5.0, 60),
        a in -3.0f64..3.0,
    ) {
        let spec = FilterSpec::PVDF_DEFAULT;
        let combo: Vec<f64> = x.iter().zip(&z).map(|(u, v)| a * u + v).collect();
        let lhs = savitzky_golay(&combo, spec).unwrap();
        let (sx, sz) = (savitzky_golay(&x, spec).unwrap(), savitzky_golay(&z, spec).unwrap());
        let rhs: Vec<f64> = sx.iter().zip(&sz).map(|(u, v)| a * u + v).collect();
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-10);
    }
}

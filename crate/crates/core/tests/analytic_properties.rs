use aoi_core::analytic::{expected_epoch, p2_closed, solve_lambda_star, x1_of_lambda, BRACKET_HI};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // no two-unit threshold pair beats the solved optimum
    #[test]
    fn no_threshold_pair_beats_optimum(lambda in 0.2f64..1.4, extra in 0.0f64..3.0) {
        let best = solve_lambda_star(1e-12).unwrap().lambda_star;
        let ratio = expected_epoch(lambda, lambda + extra).unwrap().ratio;
        prop_assert!(ratio >= best - 1e-9, "({lambda}, {}) gives {ratio} < {best}", lambda + extra);
    }

    // along the optimal pairing the sign of p2 decides whether lambda is above the optimum
    #[test]
    fn objective_sign_tracks_ratio(lambda in 0.5f64..BRACKET_HI) {
        let x1 = x1_of_lambda(lambda).unwrap();
        let ratio = expected_epoch(lambda, x1).unwrap().ratio;
        let p2 = p2_closed(lambda).unwrap();
        if p2.abs() > 1e-9 {
            prop_assert_eq!(p2 > 0.0, ratio > lambda);
        }
    }
}

#[test]
fn perturbed_thresholds_are_worse() {
    let sol = solve_lambda_star(1e-12).unwrap();
    let centre = expected_epoch(sol.lambda_star, sol.x1_star).unwrap().ratio;
    assert!((centre - sol.lambda_star).abs() < 1e-9);
    for d in [0.05, 0.1] {
        for dl in [-d, 0.0, d] {
            for dx in [-d, 0.0, d] {
                if dl == 0.0 && dx == 0.0 {
                    continue;
                }
                let r = expected_epoch(sol.lambda_star + dl, sol.x1_star + dx).unwrap().ratio;
                assert!(r > centre, "shift ({dl}, {dx}) gives {r} <= {centre}");
            }
        }
    }
}

use consensus_core::riccati::{feedback_gains, sare_residual, solve_sare, SareOptions, SystemModel};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// Positive root of `-b^2 p^2 + (2a + c^2) p + 1 = 0`.
fn scalar_root(a: f64, b: f64, c: f64) -> f64 {
    let q = 2.0 * a + c * c;
    (q + (q * q + 4.0 * b * b).sqrt()) / (2.0 * b * b)
}

fn reference_model() -> SystemModel {
    SystemModel::new(
        DMatrix::from_row_slice(2, 2, &[-0.5, 0.1, 0.0, -20.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 6.5]),
        6,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn scalar_solutions_match_the_quadratic_formula(
        a in -3.0..3.0f64,
        b in prop_oneof![-3.0..-0.3f64, 0.3..3.0f64],
        c in -2.0..2.0f64,
    ) {
        let model = SystemModel::new(scalar(a), scalar(b), scalar(c), 2).unwrap();
        let sol = solve_sare(&model, &SareOptions::default()).unwrap();
        let expected = scalar_root(a, b, c);
        prop_assert!(
            (sol.p[(0, 0)] - expected).abs() <= 1e-10 * expected.max(1.0),
            "a={a} b={b} c={c}: got {} expected {expected}", sol.p[(0, 0)]
        );
    }

    #[test]
    fn converged_runs_pass_the_independent_residual(
        a in proptest::collection::vec(-2.0..2.0f64, 4),
        b in proptest::collection::vec(0.3..2.0f64, 2),
        c in proptest::collection::vec(-0.5..0.5f64, 4),
    ) {
        let model = SystemModel::new(
            DMatrix::from_row_slice(2, 2, &a),
            DMatrix::from_row_slice(2, 1, &b),
            DMatrix::from_row_slice(2, 2, &c),
            2,
        )
        .unwrap();
        let opts = SareOptions::default();
        if let Ok(sol) = solve_sare(&model, &opts) {
            prop_assert!(sare_residual(&model, &sol.p) <= opts.tol);
            let (k, gamma) = feedback_gains(&sol.p, model.b());
            prop_assert!((&gamma - k.transpose() * &k).amax() <= 1e-12);
            prop_assert_eq!(&k, &sol.k);
        }
    }
}

#[test]
fn reference_model_residuals_settle_monotonically() {
    let model = reference_model();
    let sol = solve_sare(&model, &SareOptions::default()).unwrap();
    assert!(sol.residual <= 1e-10);
    assert!(sare_residual(&model, &sol.p) <= 1e-10);
    let tail = &sol.residual_history[sol.residual_history.len().saturating_sub(5)..];
    for w in tail.windows(2) {
        assert!(w[1] <= w[0], "residual history {:?}", sol.residual_history);
    }
    assert!((&sol.gamma - sol.k.transpose() * &sol.k).amax() <= 1e-12);
}

#[test]
fn reference_solution_values() {
    let sol = solve_sare(&reference_model(), &SareOptions::default()).unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[0.99998131, 0.00432322, 0.00432322, 2.63048651]);
    assert!((&sol.p - expected).amax() < 1e-7, "P = {}", sol.p);
}

use consensus_core::graph::WeightedDigraph;
use consensus_core::protocol::{aux_gain, control_input, neighborhood_error, ProtocolSpec, ProtocolVariant};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const N: usize = 5;
const DIM: usize = 2;

fn digraph() -> impl Strategy<Value = WeightedDigraph> {
    proptest::collection::vec(prop_oneof![Just(0.0), 0.1..2.0f64], N * N).prop_map(|mut w| {
        for i in 0..N {
            w[i * N + i] = 0.0;
        }
        WeightedDigraph::from_row_major(N, &w).unwrap()
    })
}

fn variant() -> impl Strategy<Value = ProtocolVariant> {
    proptest::sample::select(ProtocolVariant::ALL.to_vec())
}

fn spec(variant: ProtocolVariant) -> ProtocolSpec {
    ProtocolSpec { variant, k1: 1.5, k2: 1.2, mu: 2.0, gamma: 0.3, c0: vec![1.0; N] }
}

fn gains() -> (DMatrix<f64>, DMatrix<f64>) {
    let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0043, 0.0043, 2.63]);
    let k = DMatrix::from_row_slice(1, 2, &[-0.0043, -2.63]);
    (k, p)
}

fn input_of(g: &WeightedDigraph, s: &ProtocolSpec, x: &[f64], c: &[f64]) -> Vec<f64> {
    let (k, p) = gains();
    let xi = neighborhood_error(g, x, DIM).unwrap();
    control_input(s, &xi, c, &k, &p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn stacked_error_matches_kronecker_form(g in digraph(), x in proptest::collection::vec(-5.0..5.0f64, N * DIM)) {
        let xi = neighborhood_error(&g, &x, DIM).unwrap();
        let lk = g.laplacian().matrix().kronecker(&DMatrix::<f64>::identity(DIM, DIM));
        let oracle = lk * DVector::from_column_slice(&x);
        for (a, b) in xi.iter().zip(oracle.iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn inputs_ignore_common_translation(
        g in digraph(),
        v in variant(),
        x in proptest::collection::vec(-5.0..5.0f64, N * DIM),
        shift in proptest::collection::vec(-50.0..50.0f64, DIM),
        c in proptest::collection::vec(1.0..4.0f64, N),
    ) {
        let shifted: Vec<f64> = x.iter().enumerate().map(|(k, v)| v + shift[k % DIM]).collect();
        let s = spec(v);
        let before = input_of(&g, &s, &x, &c);
        let after = input_of(&g, &s, &shifted, &c);
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn inputs_are_local(
        g in digraph(),
        v in variant(),
        x in proptest::collection::vec(-5.0..5.0f64, N * DIM),
        c in proptest::collection::vec(1.0..4.0f64, N),
        agent in 0..N,
        bump in proptest::collection::vec(-3.0..3.0f64, DIM),
    ) {
        let s = spec(v);
        let before = input_of(&g, &s, &x, &c);
        let mut moved = x.clone();
        let mut c_moved = c.clone();
        for j in (0..N).filter(|&j| j != agent && g.weight(agent, j) == 0.0) {
            for k in 0..DIM {
                moved[j * DIM + k] += bump[k];
            }
            c_moved[j] += 1.0;
        }
        let after = input_of(&g, &s, &moved, &c_moved);
        prop_assert_eq!(&before[agent..agent + 1], &after[agent..agent + 1]);
    }

    #[test]
    fn unified_aux_gain_has_a_floor(sigma in 0.0..100.0f64, c in 1.0..50.0f64, k1 in 1.0..3.0f64, k2 in 1.0..3.0f64, mu in 1.01..4.0f64) {
        let s = ProtocolSpec { k1, k2, mu, ..spec(ProtocolVariant::UnifiedDirected) };
        let aux = aux_gain(&s, sigma, c).unwrap();
        let floor = k1 * k2.powf(mu);
        prop_assert!(aux >= floor && floor >= 1.0);
    }
}

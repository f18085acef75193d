mod common;

use common::{arb_walk_summable, fixtures, triangle};
use minsum::decomposition::{
    component_functions, construct_witness, from_messages, incoming_load, is_convex_decomposition,
    is_convex_dominated, EdgeParams, InitialMessages, Violation, Witness,
};
use minsum::error::Error;
use minsum::QuadraticProblem;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn smallest_eigenvalue_2x2(m: [[f64; 2]; 2]) -> f64 {
    let [[a, b], [_, c]] = m;
    let mean = 0.5 * (a + c);
    let radius = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    mean - radius
}

fn random_params(p: &QuadraticProblem, seed: u64) -> EdgeParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = p.num_arcs();
    EdgeParams {
        gamma: (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        z: (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect(),
    }
}

fn check_witness(p: &QuadraticProblem, w: &Witness) {
    assert!(w.margin > 0.0);
    for (k, _) in p.edges().iter().enumerate() {
        let g = p.edge_coupling(k);
        let pairwise = g * g * w.v[2 * k] * w.v[2 * k + 1];
        // the Perron witness sits on the boundary of the pairwise condition
        assert!((pairwise - 1.0).abs() <= 1e-12, "pairwise {pairwise}");
    }
    for load in incoming_load(p, &w.v) {
        assert!(1.0 - load > 0.0);
        assert!(1.0 - load >= w.margin);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constructed_witness_satisfies_both_conditions(p in arb_walk_summable(30, 0.95)) {
        let w = construct_witness(&p).unwrap();
        check_witness(&p, &w);
        prop_assert!(is_convex_decomposition(&p, &w.v).unwrap().convex);
    }

    #[test]
    fn domination_matches_hessian_test(p in arb_walk_summable(12, 0.9), seed in any::<u64>()) {
        let witness = construct_witness(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = p.num_arcs();
        // random quadratic message coefficients folded into the witness pieces
        let msgs = InitialMessages {
            a: (0..m)
                .map(|_| {
                    let mag = rng.gen_range(1e-3..1.0);
                    if rng.gen_bool(0.8) { mag } else { -mag }
                })
                .collect(),
            b: (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let base = EdgeParams { gamma: witness.v.clone(), z: vec![0.0; m] };
        let init = from_messages(&p, &base, &msgs).unwrap();

        let g = component_functions(&p, &base);
        let f0 = component_functions(&p, &init);
        let psd = g.edges.iter().zip(&f0.edges).all(|(ge, fe)| {
            let mut diff = [[0.0; 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    diff[r][c] = ge.hessian[r][c] - fe.hessian[r][c];
                }
            }
            smallest_eigenvalue_2x2(diff) >= 0.0
        });
        prop_assert_eq!(is_convex_dominated(&p, &init.gamma, &witness).unwrap(), psd);
        prop_assert_eq!(psd, msgs.a.iter().all(|&a| a >= 0.0));
    }

    #[test]
    fn components_reconstruct_the_objective(p in arb_walk_summable(12, 0.95), seed in any::<u64>()) {
        let params = random_params(&p, seed);
        let parts = component_functions(&p, &params);
        let (gamma, h) = parts.reconstruct(p.n());
        let exact = p.dense_gamma();
        for r in 0..p.n() {
            for c in 0..p.n() {
                prop_assert!((gamma[(r, c)] - exact[(r, c)]).abs() <= 1e-14);
            }
            prop_assert!((h[r] - p.h()[r]).abs() <= 1e-14);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        for _ in 0..8 {
            let x: Vec<f64> = (0..p.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            prop_assert!((parts.eval(&x) - p.objective(&x)).abs() <= 1e-14 * (1.0 + p.objective(&x).abs()) * p.n() as f64);
        }
    }

    #[test]
    fn zero_messages_leave_parameters_unchanged(p in arb_walk_summable(20, 0.9), seed in any::<u64>()) {
        let base = random_params(&p, seed);
        let out = from_messages(&p, &base, &InitialMessages::zeros(&p)).unwrap();
        prop_assert_eq!(out, base);
    }
}

#[test]
fn fixture_witnesses() {
    for (name, p) in fixtures() {
        let w = construct_witness(&p).unwrap_or_else(|e| panic!("{name}: {e}"));
        check_witness(&p, &w);
    }
}

#[test]
fn triangle_witness_is_uniform() {
    let p = triangle();
    let w = construct_witness(&p).unwrap();
    for v in &w.v {
        assert!((v - 2.5).abs() < 1e-12);
    }
    assert!((w.margin - 0.2).abs() < 1e-12);
    assert!(is_convex_dominated(&p, &[1.25; 6], &w).unwrap());
    assert!(!is_convex_dominated(&p, &[7.0; 6], &w).unwrap());
}

#[test]
fn convexity_examples() {
    let p = triangle();
    let cert = is_convex_decomposition(&p, &[7.0; 6]).unwrap();
    assert!(!cert.convex);
    assert!(matches!(cert.violation, Some(Violation::Vertex { .. })));
    let cert = is_convex_decomposition(&p, &[0.0; 6]).unwrap();
    assert!(matches!(cert.violation, Some(Violation::Pairwise { .. })));
    let cert = is_convex_decomposition(&p, &[2.5; 6]).unwrap();
    assert!(cert.convex);
}

#[test]
fn invalid_witness_is_rejected() {
    let p = triangle();
    assert!(matches!(Witness::new(&p, vec![7.0; 6]), Err(Error::InvalidWitness(_))));
    assert!(matches!(
        Witness::new(&p, vec![1.0; 5]),
        Err(Error::MissingEdgeValue { .. })
    ));
}

#[test]
fn non_walk_summable_has_no_witness() {
    // a 4-cycle with |R| = 0.6 has ρ(|R|) = 1.2
    let p = QuadraticProblem::new(
        4,
        &[(0, 1, -0.6), (1, 2, 0.6), (2, 3, -0.6), (0, 3, 0.6)],
        vec![1.0; 4],
    )
    .unwrap();
    match construct_witness(&p) {
        Err(Error::NotWalkSummable { rho }) => assert!((rho - 1.2).abs() < 1e-9),
        other => panic!("unexpected {other:?}"),
    }
}

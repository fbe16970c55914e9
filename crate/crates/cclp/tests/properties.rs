//! Property tests for the algebraic invariants that must hold on any
//! input, not just the hand-picked unit-test cases.

use proptest::prelude::*;

use cclp::graph::{partition_blocks, transition_matrix, GraphOptions, GraphState};
use cclp::labelprop::propagate_closed_form;
use cclp::loss::{agreement_matrix, chain_set, target_matrix};
use cclp::numkit::{self, Mat};

fn scores(n: usize, c: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-8.0f64..8.0, n * c)
        .prop_map(move |data| Mat::from_vec(n, c, data).unwrap())
}

fn stochastic(n: usize, c: usize) -> impl Strategy<Value = Mat> {
    scores(n, c).prop_map(|s| numkit::row_softmax(&s).unwrap())
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(s in (2usize..8, 2usize..6).prop_flat_map(|(n, c)| scores(n, c))) {
        let out = numkit::row_softmax(&s).unwrap();
        for i in 0..out.rows() {
            let sum: f64 = out.row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(out.row(i).iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn partition_then_reassemble_is_identity(
        (h, n_labeled) in (2usize..9).prop_flat_map(|n| (stochastic(n, n), 1..n))
    ) {
        let (ll, lu, ul, uu) = partition_blocks(&h, n_labeled).unwrap();
        for i in 0..h.rows() {
            for j in 0..h.cols() {
                let from_blocks = match (i < n_labeled, j < n_labeled) {
                    (true, true) => ll.get(i, j),
                    (true, false) => lu.get(i, j - n_labeled),
                    (false, true) => ul.get(i - n_labeled, j),
                    (false, false) => uu.get(i - n_labeled, j - n_labeled),
                };
                prop_assert_eq!(h.get(i, j), from_blocks);
            }
        }
    }

    #[test]
    fn target_matrix_is_symmetric_and_stochastic(
        phi in (2usize..9, 2usize..5).prop_flat_map(|(n, c)| stochastic(n, c))
    ) {
        let t = target_matrix(&phi).unwrap();
        prop_assert!(t.max_abs_diff(&t.transpose()) <= 1e-12);
        for i in 0..t.rows() {
            let sum: f64 = t.row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn chain_row_sums_are_non_increasing(
        (h, phi) in (3usize..8).prop_flat_map(|n| (stochastic(n, n), stochastic(n, 3)))
    ) {
        let m = agreement_matrix(&phi).unwrap();
        let chains = chain_set(&h, &m, 4).unwrap();
        for s in 1..chains.len() {
            for i in 0..h.rows() {
                let prev: f64 = chains[s - 1].row(i).iter().sum();
                let cur: f64 = chains[s].row(i).iter().sum();
                prop_assert!(cur <= prev + 1e-12);
            }
        }
    }

    #[test]
    fn propagated_posteriors_are_stochastic_and_harmonic(
        (z, n_labeled) in (3usize..10).prop_flat_map(|n| {
            (prop::collection::vec(-1.5f64..1.5, n * 2)
                .prop_map(move |d| Mat::from_vec(n, 2, d).unwrap()), 1..n)
        })
    ) {
        let g = GraphState::build(&z, n_labeled, &GraphOptions::default()).unwrap();
        let mut y = Mat::zeros(n_labeled, 2);
        for i in 0..n_labeled {
            y.set(i, i % 2, 1.0);
        }
        let lp = propagate_closed_form(&g, &y).unwrap();
        for i in 0..lp.phi.rows() {
            let sum: f64 = lp.phi.row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
        }
        let (_, _, h_ul, h_uu) = g.blocks().unwrap();
        let phi_u = lp.phi_unlabeled().unwrap();
        let reconstructed = numkit::matmul(&h_uu, &phi_u)
            .unwrap()
            .add(&numkit::matmul(&h_ul, &y).unwrap())
            .unwrap();
        prop_assert!(phi_u.max_abs_diff(&reconstructed) < 1e-9);
    }

    #[test]
    fn transition_matrix_shift_invariance(
        (sim, c) in (3usize..7).prop_flat_map(|n| (scores(n, n), -20.0f64..20.0))
    ) {
        let h1 = transition_matrix(&sim, true).unwrap();
        let shifted = Mat::from_vec(
            sim.rows(),
            sim.cols(),
            sim.data().iter().map(|v| v + c).collect(),
        ).unwrap();
        let h2 = transition_matrix(&shifted, true).unwrap();
        prop_assert!(h1.max_abs_diff(&h2) <= 1e-12);
    }
}

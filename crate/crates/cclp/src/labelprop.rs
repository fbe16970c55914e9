//! Label propagation over a batch graph.
//!
//! Labeled nodes are constant sources: their class posteriors stay
//! clamped to the one-hot labels while confidence spreads to unlabeled
//! nodes through high-similarity regions. The equilibrium for the
//! unlabeled block solves `(I - H_UU) Phi_U = H_UL Y_L` and is computed
//! directly with the LU solver; [`propagate_iterative`] implements the
//! textbook fixed-point iteration and exists to cross-check the closed
//! form, not to replace it.

use crate::graph::GraphState;
use crate::numkit::{self, Mat, NumError, Result};

/// Class posteriors at the propagation equilibrium. The first
/// `n_labeled` rows equal the one-hot labels exactly.
#[derive(Debug, Clone)]
pub struct LPPosteriors {
    pub phi: Mat,
    pub n_labeled: usize,
}

impl LPPosteriors {
    /// The unlabeled block of the posterior matrix.
    pub fn phi_unlabeled(&self) -> Result<Mat> {
        self.phi.block(self.n_labeled, 0, self.phi.rows() - self.n_labeled, self.phi.cols())
    }
}

/// Closed-form propagation: `Phi_U = (I - H_UU)^{-1} H_UL Y_L`.
///
/// `H` strictly positive guarantees the row sums of `H_UU` stay below 1,
/// so the system is solvable; a reported singularity can only mean the
/// unlabeled subgraph was disconnected from every labeled node.
pub fn propagate_closed_form(g: &GraphState, y_onehot: &Mat) -> Result<LPPosteriors> {
    let n_labeled = g.n_labeled();
    if y_onehot.rows() != n_labeled {
        return Err(NumError::shape(
            "propagate_closed_form",
            format!("{} one-hot rows for {} labeled nodes", y_onehot.rows(), n_labeled),
        ));
    }
    if g.n_unlabeled() == 0 {
        return Ok(LPPosteriors { phi: y_onehot.clone(), n_labeled });
    }
    let (_, _, h_ul, h_uu) = g.blocks()?;
    let system = Mat::identity(h_uu.rows()).sub(&h_uu)?;
    let rhs = numkit::matmul(&h_ul, y_onehot)?;
    let phi_u = numkit::lu_solve(&system, &rhs)?;
    let phi = y_onehot.vcat(&phi_u)?;
    Ok(LPPosteriors { phi, n_labeled })
}

/// Reference implementation: `steps` rounds of `Phi <- H Phi` with the
/// labeled rows re-clamped after every round, starting from uniform
/// unlabeled posteriors.
pub fn propagate_iterative(g: &GraphState, y_onehot: &Mat, steps: usize) -> Result<LPPosteriors> {
    if steps == 0 {
        return Err(NumError::arg("propagate_iterative", "steps must be at least 1"));
    }
    let n_labeled = g.n_labeled();
    if y_onehot.rows() != n_labeled {
        return Err(NumError::shape(
            "propagate_iterative",
            format!("{} one-hot rows for {} labeled nodes", y_onehot.rows(), n_labeled),
        ));
    }
    let classes = y_onehot.cols();
    let uniform = Mat::filled(g.n_unlabeled(), classes, 1.0 / classes as f64);
    let mut phi = y_onehot.vcat(&uniform)?;
    for _ in 0..steps {
        let mut next = numkit::matmul(&g.h, &phi)?;
        for i in 0..n_labeled {
            next.row_mut(i).copy_from_slice(y_onehot.row(i));
        }
        phi = next;
    }
    Ok(LPPosteriors { phi, n_labeled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphOptions, GraphState};
    use crate::numkit::Rng;

    fn random_instance(n: usize, n_labeled: usize, classes: usize, rng: &mut Rng) -> (GraphState, Mat) {
        let z = Mat::from_vec(n, 3, (0..n * 3).map(|_| rng.normal()).collect()).unwrap();
        let g = GraphState::build(&z, n_labeled, &GraphOptions::default()).unwrap();
        let mut y = Mat::zeros(n_labeled, classes);
        for i in 0..n_labeled {
            y.set(i, i % classes, 1.0);
        }
        (g, y)
    }

    #[test]
    fn no_unlabeled_nodes_returns_labels() {
        let mut rng = Rng::from_seed(1);
        let (g, y) = random_instance(4, 4, 2, &mut rng);
        let lp = propagate_closed_form(&g, &y).unwrap();
        assert_eq!(lp.phi, y);
    }

    #[test]
    fn symmetric_midpoint_gets_an_even_split() {
        // Two labeled points of different classes, one unlabeled point
        // equidistant from both.
        let z = Mat::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let g = GraphState::build(&z, 2, &GraphOptions::default()).unwrap();
        let y = Mat::identity(2);
        let lp = propagate_closed_form(&g, &y).unwrap();
        assert!((lp.phi.get(2, 0) - 0.5).abs() < 1e-12);
        assert!((lp.phi.get(2, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_long_iteration() {
        let mut rng = Rng::from_seed(2);
        let (g, y) = random_instance(10, 4, 3, &mut rng);
        let closed = propagate_closed_form(&g, &y).unwrap();
        let iterated = propagate_iterative(&g, &y, 10_000).unwrap();
        assert!(closed.phi.max_abs_diff(&iterated.phi) < 1e-8);
    }

    #[test]
    fn posterior_rows_are_stochastic_and_harmonic() {
        let mut rng = Rng::from_seed(3);
        for _ in 0..200 {
            let classes = 2 + rng.gen_index(3);
            let n_labeled = classes + rng.gen_index(3);
            let n = n_labeled + 1 + rng.gen_index(8);
            let (g, y) = random_instance(n, n_labeled, classes, &mut rng);
            let lp = propagate_closed_form(&g, &y).unwrap();
            for i in 0..n {
                let sum: f64 = lp.phi.row(i).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-9);
                assert!(lp.phi.row(i).iter().all(|v| *v >= -1e-12 && *v <= 1.0 + 1e-12));
            }
            // Harmonic property: Phi_U = H_UU Phi_U + H_UL Y_L.
            let (_, _, h_ul, h_uu) = g.blocks().unwrap();
            let phi_u = lp.phi_unlabeled().unwrap();
            let reconstructed = numkit::matmul(&h_uu, &phi_u)
                .unwrap()
                .add(&numkit::matmul(&h_ul, &y).unwrap())
                .unwrap();
            assert!(phi_u.max_abs_diff(&reconstructed) < 1e-9);
        }
    }

    #[test]
    fn single_step_expansion_is_explicit() {
        let mut rng = Rng::from_seed(4);
        let (g, y) = random_instance(6, 2, 2, &mut rng);
        let lp = propagate_iterative(&g, &y, 1).unwrap();

        let uniform = Mat::filled(4, 2, 0.5);
        let phi0 = y.vcat(&uniform).unwrap();
        let expect = numkit::matmul(&g.h, &phi0).unwrap();
        let phi_u = lp.phi_unlabeled().unwrap();
        let expect_u = expect.block(2, 0, 4, 2).unwrap();
        assert!(phi_u.max_abs_diff(&expect_u) < 1e-15);
        assert!(propagate_iterative(&g, &y, 0).is_err());
    }

    #[test]
    fn converged_posteriors_are_a_fixed_point() {
        let mut rng = Rng::from_seed(5);
        let (g, y) = random_instance(9, 3, 3, &mut rng);
        let closed = propagate_closed_form(&g, &y).unwrap();
        let mut phi = numkit::matmul(&g.h, &closed.phi).unwrap();
        for i in 0..3 {
            phi.row_mut(i).copy_from_slice(y.row(i));
        }
        assert!(phi.max_abs_diff(&closed.phi) < 1e-12);
    }

    #[test]
    fn iteration_contracts_toward_the_closed_form() {
        let mut rng = Rng::from_seed(6);
        let (g, y) = random_instance(8, 3, 2, &mut rng);
        let closed = propagate_closed_form(&g, &y).unwrap();
        let mut last = f64::INFINITY;
        for steps in [1usize, 2, 4, 8, 16, 32, 64, 256, 1024, 4096, 16384] {
            let it = propagate_iterative(&g, &y, steps).unwrap();
            let dist = it.phi.max_abs_diff(&closed.phi);
            assert!(dist <= last + 1e-15, "distance grew: {} -> {}", last, dist);
            last = dist;
        }
        assert!(last < 1e-8);
    }

    #[test]
    fn permuting_unlabeled_rows_permutes_posteriors() {
        let mut rng = Rng::from_seed(7);
        let z = Mat::from_vec(8, 2, (0..16).map(|_| rng.normal()).collect()).unwrap();
        let y = Mat::identity(2);

        let g = GraphState::build(&z, 2, &GraphOptions::default()).unwrap();
        let lp = propagate_closed_form(&g, &y).unwrap();

        // Swap unlabeled rows 2 and 5 of the embedding.
        let mut rows: Vec<Vec<f64>> = (0..8).map(|i| z.row(i).to_vec()).collect();
        rows.swap(2, 5);
        let z2 = Mat::from_rows(&rows).unwrap();
        let g2 = GraphState::build(&z2, 2, &GraphOptions::default()).unwrap();
        let lp2 = propagate_closed_form(&g2, &y).unwrap();

        assert!(lp.phi.row(2).iter().zip(lp2.phi.row(5)).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(lp.phi.row(5).iter().zip(lp2.phi.row(2)).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn tight_clusters_classify_to_their_labeled_anchor() {
        // One labeled sample per class, unlabeled samples much closer to
        // their own anchor than to the other.
        let mut rows = vec![vec![5.0, 5.0], vec![-5.0, -5.0]];
        let mut rng = Rng::from_seed(8);
        for i in 0..6 {
            let (cx, cy) = if i % 2 == 0 { (5.0, 5.0) } else { (-5.0, -5.0) };
            rows.push(vec![cx + 0.1 * rng.normal(), cy + 0.1 * rng.normal()]);
        }
        let z = Mat::from_rows(&rows).unwrap();
        let g = GraphState::build(&z, 2, &GraphOptions::default()).unwrap();
        let lp = propagate_closed_form(&g, &Mat::identity(2)).unwrap();
        for i in 0..6 {
            let row = lp.phi.row(2 + i);
            let expect_class = i % 2;
            let argmax = if row[0] >= row[1] { 0 } else { 1 };
            assert_eq!(argmax, expect_class, "row {:?}", row);
        }
    }
}

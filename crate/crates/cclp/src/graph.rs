//! Per-batch graph construction in latent space.
//!
//! Every training batch gets a fully connected graph over its embeddings:
//! a similarity score for each pair, the adjacency `A = exp(score)`, and
//! the row-normalized transition matrix `H` whose row `i` is the one-step
//! random-walk distribution out of sample `i`. Labeled rows come first by
//! convention, which makes the labeled/unlabeled block partition of `H`
//! pure index arithmetic.

use crate::numkit::{self, Mat, NumError, Result};

/// A joined labeled+unlabeled batch, labeled rows first.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Sample vectors, one row each: raw inputs for a network, or the
    /// coordinates themselves in free-embedding experiments.
    pub x: Mat,
    /// One-hot labels for the first `n_labeled` rows.
    pub y_onehot: Mat,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
}

impl Batch {
    pub fn new(x: Mat, y_onehot: Mat, n_labeled: usize, n_unlabeled: usize) -> Result<Batch> {
        if x.rows() != n_labeled + n_unlabeled {
            return Err(NumError::shape(
                "Batch::new",
                format!("{} rows != {} labeled + {} unlabeled", x.rows(), n_labeled, n_unlabeled),
            ));
        }
        if y_onehot.rows() != n_labeled {
            return Err(NumError::shape(
                "Batch::new",
                format!("{} one-hot rows for {} labeled samples", y_onehot.rows(), n_labeled),
            ));
        }
        if n_labeled == 0 {
            return Err(NumError::arg("Batch::new", "need at least one labeled sample"));
        }
        for i in 0..n_labeled {
            let row = y_onehot.row(i);
            let ones = row.iter().filter(|v| **v == 1.0).count();
            let zeros = row.iter().filter(|v| **v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(NumError::arg(
                    "Batch::new",
                    format!("row {} of y_onehot is not one-hot", i),
                ));
            }
        }
        Ok(Batch { x, y_onehot, n_labeled, n_unlabeled })
    }

    /// Total number of samples.
    pub fn n(&self) -> usize {
        self.n_labeled + self.n_unlabeled
    }

    /// Number of classes.
    pub fn classes(&self) -> usize {
        self.y_onehot.cols()
    }
}

/// Pairwise similarity score used for graph edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    /// `z_i . z_j`, the default.
    Dot,
    /// `-|z_i - z_j|^2`; favors metric neighborhoods over aligned
    /// directions, which suits low-dimensional geometric layouts.
    NegSqEuclidean,
}

/// How a batch graph is built.
#[derive(Debug, Clone, Copy)]
pub struct GraphOptions {
    pub similarity: Similarity,
    /// Keep the diagonal in the softmax (an edge from each node to
    /// itself). On by default; the exclusion variant exists for study.
    pub self_loops: bool,
    /// Multiplier applied to raw similarity scores before the softmax;
    /// acts as an inverse temperature on edge weights.
    pub score_scale: f64,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions { similarity: Similarity::Dot, self_loops: true, score_scale: 1.0 }
    }
}

/// Gram matrix of dot-product similarities, `sim[i][j] = z_i . z_j`.
pub fn gram_similarity(z: &Mat) -> Result<Mat> {
    if z.rows() < 2 {
        return Err(NumError::arg("gram_similarity", "need at least two samples"));
    }
    numkit::matmul(z, &z.transpose())
}

/// Similarity scores for the requested metric; symmetric by construction.
pub fn similarity_scores(z: &Mat, kind: Similarity) -> Result<Mat> {
    match kind {
        Similarity::Dot => gram_similarity(z),
        Similarity::NegSqEuclidean => {
            let gram = gram_similarity(z)?;
            let n = z.rows();
            let mut out = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let d2 = gram.get(i, i) + gram.get(j, j) - 2.0 * gram.get(i, j);
                    out.set(i, j, -d2);
                }
            }
            out.check_finite("similarity_scores")
        }
    }
}

/// Row-stochastic transition matrix from similarity scores.
///
/// This is the row normalization of `A = exp(sim)` computed stably as a
/// row softmax; with `include_self_loops` off, diagonal entries are
/// masked out of the normalization and come back exactly zero.
pub fn transition_matrix(sim: &Mat, include_self_loops: bool) -> Result<Mat> {
    if sim.rows() != sim.cols() {
        return Err(NumError::shape(
            "transition_matrix",
            format!("similarity matrix is {}x{}", sim.rows(), sim.cols()),
        ));
    }
    numkit::row_softmax_with(sim, !include_self_loops)
}

/// Splits `h` into its `(LL, LU, UL, UU)` blocks under the
/// labeled-rows-first convention. `UL` is the unlabeled-to-labeled block
/// of shape `n_unlabeled x n_labeled`, the one that multiplies `Y_L`
/// during propagation.
pub fn partition_blocks(h: &Mat, n_labeled: usize) -> Result<(Mat, Mat, Mat, Mat)> {
    let n = h.rows();
    if h.cols() != n {
        return Err(NumError::shape("partition_blocks", format!("{}x{}", h.rows(), h.cols())));
    }
    if n_labeled == 0 || n_labeled > n {
        return Err(NumError::arg(
            "partition_blocks",
            format!("n_labeled = {} out of range for {} nodes", n_labeled, n),
        ));
    }
    let nu = n - n_labeled;
    let ll = h.block(0, 0, n_labeled, n_labeled)?;
    let lu = h.block(0, n_labeled, n_labeled, nu)?;
    let ul = h.block(n_labeled, 0, nu, n_labeled)?;
    let uu = h.block(n_labeled, n_labeled, nu, nu)?;
    Ok((ll, lu, ul, uu))
}

/// Graph built over one batch's embeddings: similarity scores (after
/// scaling), adjacency, and the transition matrix.
#[derive(Debug, Clone)]
pub struct GraphState {
    pub sim: Mat,
    pub a: Mat,
    pub h: Mat,
    n_labeled: usize,
}

impl GraphState {
    pub fn build(z: &Mat, n_labeled: usize, opts: &GraphOptions) -> Result<GraphState> {
        let sim = similarity_scores(z, opts.similarity)?.scale(opts.score_scale)?;
        let a = Mat::from_vec(
            sim.rows(),
            sim.cols(),
            sim.data().iter().map(|v| v.exp()).collect(),
        )
        .map_err(|_| NumError::NonFinite { op: "adjacency" })?;
        let h = transition_matrix(&sim, opts.self_loops)?;
        if n_labeled == 0 || n_labeled > z.rows() {
            return Err(NumError::arg(
                "GraphState::build",
                format!("n_labeled = {} out of range for {} samples", n_labeled, z.rows()),
            ));
        }
        Ok(GraphState { sim, a, h, n_labeled })
    }

    pub fn n(&self) -> usize {
        self.h.rows()
    }

    pub fn n_labeled(&self) -> usize {
        self.n_labeled
    }

    pub fn n_unlabeled(&self) -> usize {
        self.n() - self.n_labeled
    }

    /// The four labeled/unlabeled blocks of `H`, as `(LL, LU, UL, UU)`.
    pub fn blocks(&self) -> Result<(Mat, Mat, Mat, Mat)> {
        partition_blocks(&self.h, self.n_labeled)
    }
}

/// Graph-Laplacian energy `E(f) = 1/2 sum_ij a_ij (f_i - f_j)^2`.
///
/// Zero exactly when `f` is constant on every connected component; for a
/// fully connected positive graph that means constant everywhere. Used as
/// a diagnostic for how label-smooth a given graph is.
pub fn laplacian_energy(a: &Mat, f: &Mat) -> Result<f64> {
    let n = a.rows();
    if a.cols() != n {
        return Err(NumError::shape("laplacian_energy", format!("{}x{}", a.rows(), a.cols())));
    }
    if f.rows() != n || f.cols() != 1 {
        return Err(NumError::shape(
            "laplacian_energy",
            format!("f is {}x{}, need {}x1", f.rows(), f.cols(), n),
        ));
    }
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = f.get(i, 0) - f.get(j, 0);
            acc += a.get(i, j) * d * d;
        }
    }
    let energy = 0.5 * acc;
    if energy.is_finite() {
        Ok(energy)
    } else {
        Err(NumError::NonFinite { op: "laplacian_energy" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    fn random_embeddings(n: usize, d: usize, rng: &mut Rng) -> Mat {
        Mat::from_vec(n, d, (0..n * d).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn gram_similarity_hand_cases() {
        let z = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(gram_similarity(&z).unwrap(), Mat::identity(2));

        let z = Mat::zeros(2, 2);
        assert_eq!(gram_similarity(&z).unwrap(), Mat::zeros(2, 2));

        let z = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let expect = Mat::from_rows(&[vec![5.0, 11.0], vec![11.0, 25.0]]).unwrap();
        assert_eq!(gram_similarity(&z).unwrap(), expect);
    }

    #[test]
    fn neg_sq_euclidean_matches_direct_distances() {
        let mut rng = Rng::from_seed(17);
        let z = random_embeddings(6, 3, &mut rng);
        let sim = similarity_scores(&z, Similarity::NegSqEuclidean).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let d2: f64 = (0..3).map(|k| (z.get(i, k) - z.get(j, k)).powi(2)).sum();
                assert!((sim.get(i, j) + d2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transition_matrix_orthonormal_pair() {
        let z = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let sim = gram_similarity(&z).unwrap();
        let h = transition_matrix(&sim, true).unwrap();
        let sigma1 = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((h.get(0, 0) - sigma1).abs() < 1e-12);
        assert!((h.get(0, 1) - (1.0 - sigma1)).abs() < 1e-12);
        assert!((h.get(1, 1) - sigma1).abs() < 1e-12);
    }

    #[test]
    fn transition_matrix_uniform_when_scores_equal() {
        let sim = Mat::filled(4, 4, 3.25);
        let h = transition_matrix(&sim, true).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((h.get(i, j) - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn transition_matrix_two_nodes_without_self_loops() {
        let sim = Mat::from_rows(&[vec![5.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        let h = transition_matrix(&sim, false).unwrap();
        let expect = Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(h.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn single_node_without_self_loops_is_an_error() {
        let sim = Mat::from_rows(&[vec![1.0]]).unwrap();
        assert!(transition_matrix(&sim, false).is_err());
    }

    #[test]
    fn partition_blocks_index_bookkeeping() {
        let h = Mat::from_rows(&[
            vec![0.1, 0.2, 0.7],
            vec![0.3, 0.3, 0.4],
            vec![0.25, 0.25, 0.5],
        ])
        .unwrap();
        let (ll, lu, ul, uu) = partition_blocks(&h, 2).unwrap();
        assert_eq!(ll.shape(), (2, 2));
        assert_eq!(lu.shape(), (2, 1));
        assert_eq!(ul.shape(), (1, 2));
        assert_eq!(uu.shape(), (1, 1));
        assert_eq!(uu.get(0, 0), 0.5);
        assert_eq!(ul.row(0), &[0.25, 0.25]);
    }

    #[test]
    fn partition_with_all_labeled_has_empty_unlabeled_blocks() {
        let h = Mat::filled(3, 3, 1.0 / 3.0);
        let (ll, lu, ul, uu) = partition_blocks(&h, 3).unwrap();
        assert_eq!(ll.shape(), (3, 3));
        assert_eq!(lu.shape(), (3, 0));
        assert_eq!(ul.shape(), (0, 3));
        assert_eq!(uu.shape(), (0, 0));
    }

    #[test]
    fn partition_reassembles_to_original() {
        let mut rng = Rng::from_seed(29);
        let z = random_embeddings(7, 2, &mut rng);
        let g = GraphState::build(&z, 3, &GraphOptions::default()).unwrap();
        let (ll, lu, ul, uu) = g.blocks().unwrap();
        let top = ll.clone();
        let top = {
            let mut rows = Vec::new();
            for i in 0..top.rows() {
                let mut row = top.row(i).to_vec();
                row.extend_from_slice(lu.row(i));
                rows.push(row);
            }
            for i in 0..ul.rows() {
                let mut row = ul.row(i).to_vec();
                row.extend_from_slice(uu.row(i));
                rows.push(row);
            }
            Mat::from_rows(&rows).unwrap()
        };
        assert_eq!(top, g.h);
    }

    #[test]
    fn rows_of_h_are_stochastic_and_positive() {
        let mut rng = Rng::from_seed(31);
        for _ in 0..50 {
            let n = 2 + rng.gen_index(10);
            let z = random_embeddings(n, 3, &mut rng);
            let g = GraphState::build(&z, 1, &GraphOptions::default()).unwrap();
            for i in 0..n {
                let sum: f64 = g.h.row(i).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
                assert!(g.h.row(i).iter().all(|v| *v > 0.0 && *v < 1.0 || n == 1));
                assert!(g.a.row(i).iter().all(|v| *v > 0.0));
            }
        }
    }

    #[test]
    fn per_row_score_shift_leaves_h_unchanged() {
        let mut rng = Rng::from_seed(37);
        let z = random_embeddings(6, 2, &mut rng);
        let sim = gram_similarity(&z).unwrap();
        let h = transition_matrix(&sim, true).unwrap();
        let mut shifted = sim.clone();
        for i in 0..shifted.rows() {
            let c = rng.range_f64(-20.0, 20.0);
            for v in shifted.row_mut(i) {
                *v += c;
            }
        }
        let h2 = transition_matrix(&shifted, true).unwrap();
        assert!(h.max_abs_diff(&h2) <= 1e-12);
    }

    #[test]
    fn laplacian_energy_constant_and_hand_case() {
        let a = Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let constant = Mat::filled(2, 1, 3.5);
        assert_eq!(laplacian_energy(&a, &constant).unwrap(), 0.0);

        let f = Mat::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        assert!((laplacian_energy(&a, &f).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn laplacian_energy_matches_quadratic_form() {
        // Independent formulation: f' (D - A) f with D the row-sum diagonal.
        let mut rng = Rng::from_seed(41);
        for _ in 0..50 {
            let n = 2 + rng.gen_index(6);
            let mut a = Mat::zeros(n, n);
            for i in 0..n {
                for j in i + 1..n {
                    let w = rng.range_f64(0.0, 2.0);
                    a.set(i, j, w);
                    a.set(j, i, w);
                }
            }
            let f = Mat::from_vec(n, 1, (0..n).map(|_| rng.normal()).collect()).unwrap();
            let pairwise = laplacian_energy(&a, &f).unwrap();

            let mut lap = a.scale(-1.0).unwrap();
            for i in 0..n {
                let deg: f64 = a.row(i).iter().sum();
                lap.set(i, i, lap.get(i, i) + deg);
            }
            let quad = numkit::matmul(&f.transpose(), &numkit::matmul(&lap, &f).unwrap()).unwrap();
            let rel = (pairwise - quad.get(0, 0)).abs() / pairwise.abs().max(1e-12);
            assert!(rel < 1e-9, "pairwise {} vs quadratic {}", pairwise, quad.get(0, 0));
            assert!(pairwise >= 0.0);
        }
    }

    #[test]
    fn batch_validation_rejects_bad_one_hot() {
        let x = Mat::zeros(3, 2);
        let y = Mat::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert!(Batch::new(x, y, 1, 2).is_err());
    }
}

//! The clustering regularizer and its ingredients.
//!
//! From the propagated posteriors `Phi` we form two N-by-N matrices: the
//! agreement matrix `M = Phi Phi'`, whose entry (i, j) estimates the
//! probability that nodes i and j share a class, and the target matrix
//! `T`, the transition structure of an ideal latent space where each
//! class is one compact cluster (uniform within-class mass, zero
//! across). The chain recurrence `H^(s) = (H o M) H^(s-1)` gives the
//! probability of an s-step walk whose first s-1 steps stay within one
//! class; the loss is the mean cross entropy from `T` to each `H^(s)`.
//!
//! A conditional-entropy regularizer over classifier outputs is included
//! as the standard comparison baseline.

use crate::numkit::{self, Mat, NumError, Result};

/// Floor applied to chain entries before taking logs. Entries are
/// provably positive but can underflow at double precision.
pub const LOG_EPS: f64 = 1e-30;

/// Agreement matrix `M = phi * phi'`; entries live in [0, 1] for
/// row-stochastic `phi`, hitting the endpoints exactly when two nodes'
/// posteriors fully agree or fully disagree.
pub fn agreement_matrix(phi: &Mat) -> Result<Mat> {
    numkit::matmul(phi, &phi.transpose())
}

/// Target transition matrix `T_ij = sum_c phi_ic phi_jc / m_c` with
/// `m_c` the total posterior mass of class c. Row-stochastic and
/// symmetric for any row-stochastic `phi`.
pub fn target_matrix(phi: &Mat) -> Result<Mat> {
    let n = phi.rows();
    let class_mass = numkit::matmul(&Mat::ones(1, n), phi)?;
    for (c, mass) in class_mass.row(0).iter().enumerate() {
        if *mass <= 0.0 {
            return Err(NumError::ZeroClassMass { class: c });
        }
    }
    let inv_mass = class_mass.recip()?;
    let broadcast = numkit::matmul(&Mat::ones(n, 1), &inv_mass)?;
    let scaled = numkit::hadamard(phi, &broadcast)?;
    numkit::matmul(&scaled, &phi.transpose())
}

/// The chain matrices `H^(1) = H`, `H^(s) = (H o M) H^(s-1)`.
pub fn chain_set(h: &Mat, m: &Mat, steps: usize) -> Result<Vec<Mat>> {
    if steps == 0 {
        return Err(NumError::arg("chain_set", "steps must be at least 1"));
    }
    if h.shape() != m.shape() || h.rows() != h.cols() {
        return Err(NumError::shape(
            "chain_set",
            format!("h is {:?}, m is {:?}", h.shape(), m.shape()),
        ));
    }
    let mut chains = Vec::with_capacity(steps);
    chains.push(h.clone());
    if steps > 1 {
        let within_class = numkit::hadamard(h, m)?;
        for _ in 1..steps {
            let next = numkit::matmul(&within_class, chains.last().expect("nonempty"))?;
            chains.push(next);
        }
    }
    Ok(chains)
}

/// Everything the regularizer needs for one batch: target, agreement,
/// and the chain matrices for `1..=steps`.
#[derive(Debug, Clone)]
pub struct ChainSet {
    pub t: Mat,
    pub m: Mat,
    pub h_s: Vec<Mat>,
    pub steps: usize,
}

impl ChainSet {
    pub fn build(h: &Mat, phi: &Mat, steps: usize) -> Result<ChainSet> {
        let m = agreement_matrix(phi)?;
        let t = target_matrix(phi)?;
        let h_s = chain_set(h, &m, steps)?;
        Ok(ChainSet { t, m, h_s, steps })
    }
}

/// Scale factor of the clustering loss: `-1 / (S * N^2)`. Shared with
/// the differentiable pipeline so both paths produce identical bits.
pub(crate) fn cclp_scale(steps: usize, n: usize) -> f64 {
    -1.0 / (steps * n * n) as f64
}

/// Cross entropy of one chain matrix against the target, before scaling:
/// `sum_ij T_ij log(max(H^(s)_ij, LOG_EPS))`.
pub(crate) fn xent_term(t: &Mat, h_s: &Mat) -> Result<f64> {
    let logs = h_s.clamp_min(LOG_EPS).ln()?;
    Ok(numkit::hadamard(t, &logs)?.sum_all())
}

/// The clustering loss: mean cross entropy from `t` to each chain
/// matrix, `(1/S) sum_s (1/N^2) sum_ij -T_ij log H^(s)_ij`.
pub fn cclp_loss(t: &Mat, chains: &[Mat]) -> Result<f64> {
    if chains.is_empty() {
        return Err(NumError::arg("cclp_loss", "need at least one chain matrix"));
    }
    let n = t.rows();
    if t.cols() != n {
        return Err(NumError::shape("cclp_loss", format!("target is {:?}", t.shape())));
    }
    let mut acc = 0.0;
    for h_s in chains {
        if h_s.shape() != t.shape() {
            return Err(NumError::shape(
                "cclp_loss",
                format!("chain is {:?}, target is {:?}", h_s.shape(), t.shape()),
            ));
        }
        acc += xent_term(t, h_s)?;
    }
    let loss = acc * cclp_scale(chains.len(), n);
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(NumError::NonFinite { op: "cclp_loss" })
    }
}

/// The single-step special case: cross entropy from `t` to `h` itself.
pub fn one_step_loss(t: &Mat, h: &Mat) -> Result<f64> {
    cclp_loss(t, std::slice::from_ref(h))
}

/// Conditional-entropy baseline: mean over rows of `sum_c -p_c log p_c`.
pub fn cer_loss(class_probs: &Mat) -> Result<f64> {
    if class_probs.rows() == 0 {
        return Ok(0.0);
    }
    let logs = class_probs.clamp_min(LOG_EPS).ln()?;
    let total = numkit::hadamard(class_probs, &logs)?.sum_all();
    let loss = total * (-1.0 / class_probs.rows() as f64);
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(NumError::NonFinite { op: "cer_loss" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    fn random_stochastic(rows: usize, cols: usize, rng: &mut Rng) -> Mat {
        let scores =
            Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.range_f64(-2.0, 2.0)).collect())
                .unwrap();
        numkit::row_softmax(&scores).unwrap()
    }

    #[test]
    fn agreement_extremes() {
        let phi = Mat::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let m = agreement_matrix(&phi).unwrap();
        assert_eq!(m.get(0, 1), 1.0); // identical hard labels
        assert_eq!(m.get(0, 2), 0.0); // orthogonal hard labels

        let uniform = Mat::filled(2, 2, 0.5);
        let m = agreement_matrix(&uniform).unwrap();
        assert!((m.get(0, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn target_matrix_hand_cases() {
        // One hard sample per class: the ideal transition is the identity.
        let t = target_matrix(&Mat::identity(2)).unwrap();
        assert!(t.max_abs_diff(&Mat::identity(2)) < 1e-15);

        let uniform = Mat::filled(2, 2, 0.5);
        let t = target_matrix(&uniform).unwrap();
        assert!(t.max_abs_diff(&Mat::filled(2, 2, 0.5)) < 1e-15);

        // Two hard samples per class: block-constant 0.5 within class.
        let phi = Mat::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let t = target_matrix(&phi).unwrap();
        let expect = Mat::from_rows(&[
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.0, 0.0, 0.5, 0.5],
            vec![0.0, 0.0, 0.5, 0.5],
        ])
        .unwrap();
        assert!(t.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn target_matrix_reports_empty_class() {
        let phi = Mat::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(target_matrix(&phi), Err(NumError::ZeroClassMass { class: 1 })));
    }

    #[test]
    fn target_is_symmetric_and_stochastic_on_random_posteriors() {
        let mut rng = Rng::from_seed(12);
        for _ in 0..1000 {
            let n = 2 + rng.gen_index(8);
            let c = 2 + rng.gen_index(4);
            let phi = random_stochastic(n, c, &mut rng);
            let t = target_matrix(&phi).unwrap();
            assert!(t.max_abs_diff(&t.transpose()) <= 1e-12);
            for i in 0..n {
                let sum: f64 = t.row(i).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-9);
                assert!(t.row(i).iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn chain_base_case_and_hadamard_identity() {
        let mut rng = Rng::from_seed(13);
        let h = random_stochastic(4, 4, &mut rng);
        let chains = chain_set(&h, &Mat::ones(4, 4), 1).unwrap();
        assert_eq!(chains.len(), 1);
        assert_eq!(chains[0], h);

        // With M = all-ones the recurrence collapses to plain powers.
        let chains = chain_set(&h, &Mat::ones(4, 4), 3).unwrap();
        let h2 = numkit::matmul(&h, &h).unwrap();
        let h3 = numkit::matmul(&h, &h2).unwrap();
        assert_eq!(chains[1].data(), h2.data());
        assert_eq!(chains[2].data(), h3.data());
    }

    #[test]
    fn two_step_chain_matches_path_enumeration() {
        let mut rng = Rng::from_seed(14);
        let h = random_stochastic(3, 3, &mut rng);
        let m = random_stochastic(3, 3, &mut rng);
        let chains = chain_set(&h, &m, 2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut expect = 0.0;
                for k in 0..3 {
                    expect += h.get(i, k) * m.get(i, k) * h.get(k, j);
                }
                assert!((chains[1].get(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn chain_row_sums_never_increase() {
        let mut rng = Rng::from_seed(15);
        for _ in 0..100 {
            let n = 2 + rng.gen_index(6);
            let h = random_stochastic(n, n, &mut rng);
            let phi = random_stochastic(n, 2, &mut rng);
            let m = agreement_matrix(&phi).unwrap();
            let chains = chain_set(&h, &m, 5).unwrap();
            for s in 1..chains.len() {
                for i in 0..n {
                    let prev: f64 = chains[s - 1].row(i).iter().sum();
                    let cur: f64 = chains[s].row(i).iter().sum();
                    assert!(cur <= prev + 1e-12, "row sum grew {} -> {}", prev, cur);
                }
            }
        }
    }

    #[test]
    fn cclp_loss_hand_value() {
        let t = Mat::filled(2, 2, 0.5);
        let h = Mat::filled(2, 2, 0.5);
        let loss = cclp_loss(&t, std::slice::from_ref(&h)).unwrap();
        let expect = 0.5 * std::f64::consts::LN_2;
        assert!((loss - expect).abs() < 1e-12);
        assert!((loss - 0.346574).abs() < 1e-6);
    }

    #[test]
    fn cclp_loss_vanishes_at_a_perfect_diagonal() {
        // H arbitrarily close to T = I: the loss tends to zero.
        let t = Mat::identity(3);
        let eps = 1e-9;
        let mut h = Mat::filled(3, 3, eps / 2.0);
        for i in 0..3 {
            h.set(i, i, 1.0 - eps);
        }
        let loss = cclp_loss(&t, std::slice::from_ref(&h)).unwrap();
        assert!(loss >= 0.0);
        assert!(loss < 1e-8);
    }

    #[test]
    fn multi_step_with_s1_equals_one_step() {
        let mut rng = Rng::from_seed(16);
        let h = random_stochastic(6, 6, &mut rng);
        let phi = random_stochastic(6, 3, &mut rng);
        let t = target_matrix(&phi).unwrap();
        let m = agreement_matrix(&phi).unwrap();
        let chains = chain_set(&h, &m, 1).unwrap();
        assert_eq!(cclp_loss(&t, &chains).unwrap(), one_step_loss(&t, &h).unwrap());
    }

    #[test]
    fn blending_h_toward_t_decreases_the_loss() {
        let mut rng = Rng::from_seed(17);
        for _ in 0..20 {
            let n = 3 + rng.gen_index(4);
            let h = random_stochastic(n, n, &mut rng);
            let phi = random_stochastic(n, 2, &mut rng);
            let t = target_matrix(&phi).unwrap();
            let mut last = one_step_loss(&t, &h).unwrap();
            for step in 1..10 {
                let lambda = step as f64 / 10.0;
                let blend = h.scale(1.0 - lambda).unwrap().add(&t.scale(lambda).unwrap()).unwrap();
                let loss = one_step_loss(&t, &blend).unwrap();
                assert!(loss <= last + 1e-12, "loss rose along the blend path");
                last = loss;
            }
        }
    }

    #[test]
    fn cer_loss_reference_values() {
        let one_hot = Mat::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(cer_loss(&one_hot).unwrap().abs() < 1e-9);

        let uniform = Mat::filled(1, 2, 0.5);
        assert!((cer_loss(&uniform).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);

        let skewed = Mat::from_rows(&[vec![0.75, 0.25]]).unwrap();
        let expect = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        assert!((cer_loss(&skewed).unwrap() - expect).abs() < 1e-12);
        assert!((cer_loss(&skewed).unwrap() - 0.562335).abs() < 1e-6);
    }
}

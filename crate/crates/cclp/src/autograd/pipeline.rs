//! The composite differentiable computation, expressed in tape
//! primitives: embeddings to similarity scores to transition matrix to
//! propagated posteriors (through the linear solve) to target, agreement
//! and chain matrices to the scalar losses.
//!
//! Each builder mirrors the corresponding plain-matrix implementation
//! kernel for kernel, so the recorded forward values equal the pure
//! path's values bit-for-bit; tests assert exactly that.

use crate::graph::{GraphOptions, Similarity};
use crate::loss::{self, LOG_EPS};
use crate::numkit::{Mat, NumError, Result};

use super::{Tape, VarId};

/// Recorded similarity scores for `z`, including the score scale.
pub fn similarity_on_tape(
    tape: &mut Tape,
    z: VarId,
    kind: Similarity,
    score_scale: f64,
) -> Result<VarId> {
    let zt = tape.transpose(z);
    let gram = tape.matmul(z, zt)?;
    match kind {
        Similarity::Dot => tape.scale(gram, score_scale),
        Similarity::NegSqEuclidean => {
            let (n, d) = tape.value(z).shape();
            let zz = tape.hadamard(z, z)?;
            let ones_d1 = tape.leaf(Mat::ones(d, 1));
            let sq_norms = tape.matmul(zz, ones_d1)?;
            let ones_1n = tape.leaf(Mat::ones(1, n));
            let by_row = tape.matmul(sq_norms, ones_1n)?;
            let by_col = tape.transpose(by_row);
            let minus_two_gram = tape.scale(gram, -2.0)?;
            let partial = tape.add(by_row, by_col)?;
            let dist_sq = tape.add(partial, minus_two_gram)?;
            tape.scale(dist_sq, -score_scale)
        }
    }
}

/// Everything the regularizer records for one batch.
#[derive(Debug, Clone)]
pub struct CclpGraph {
    /// The scalar clustering loss.
    pub loss: VarId,
    /// Transition matrix `H`.
    pub h: VarId,
    /// Propagated posteriors (labeled rows clamped to the labels).
    pub phi: VarId,
    /// Target transition matrix `T`.
    pub t: VarId,
    /// Agreement matrix `M`.
    pub m: VarId,
    /// Chain matrices `H^(1)..H^(S)`.
    pub chains: Vec<VarId>,
}

/// Records the full clustering regularizer for embeddings `z` (labeled
/// rows first) and returns handles to the interesting intermediates.
///
/// With `stop_grad_phi` set, the propagated posteriors are treated as
/// constants when forming `T` and `M`: gradients then reach the
/// embeddings only through the chain matrices, not through the solve.
pub fn cclp_loss_on_tape(
    tape: &mut Tape,
    z: VarId,
    y_onehot: &Mat,
    n_labeled: usize,
    opts: &GraphOptions,
    steps: usize,
    stop_grad_phi: bool,
) -> Result<CclpGraph> {
    if steps == 0 {
        return Err(NumError::arg("cclp_loss_on_tape", "steps must be at least 1"));
    }
    let n = tape.value(z).rows();
    if n_labeled == 0 || n_labeled > n || y_onehot.rows() != n_labeled {
        return Err(NumError::arg(
            "cclp_loss_on_tape",
            format!("{} labeled of {} samples, {} label rows", n_labeled, n, y_onehot.rows()),
        ));
    }
    let n_unlabeled = n - n_labeled;

    let sim = similarity_on_tape(tape, z, opts.similarity, opts.score_scale)?;
    let h = tape.row_softmax(sim, !opts.self_loops)?;

    // Label propagation: Phi_U = (I - H_UU)^{-1} H_UL Y_L, labeled rows
    // clamped to the labels by construction.
    let y_leaf = tape.leaf(y_onehot.clone());
    let phi = if n_unlabeled == 0 {
        y_leaf
    } else {
        let h_uu = tape.block(h, n_labeled, n_labeled, n_unlabeled, n_unlabeled)?;
        let h_ul = tape.block(h, n_labeled, 0, n_unlabeled, n_labeled)?;
        let eye = tape.leaf(Mat::identity(n_unlabeled));
        let neg_uu = tape.scale(h_uu, -1.0)?;
        let system = tape.add(eye, neg_uu)?;
        let rhs = tape.matmul(h_ul, y_leaf)?;
        let phi_u = tape.lu_solve(system, rhs)?;
        tape.vcat(y_leaf, phi_u)?
    };

    let phi_tm = if stop_grad_phi { tape.stop_grad(phi) } else { phi };
    let phi_t = tape.transpose(phi_tm);
    let m = tape.matmul(phi_tm, phi_t)?;

    // Target matrix: rows of phi scaled by inverse class mass.
    let ones_1n = tape.leaf(Mat::ones(1, n));
    let class_mass = tape.matmul(ones_1n, phi_tm)?;
    let inv_mass = tape.recip(class_mass)?;
    let ones_n1 = tape.leaf(Mat::ones(n, 1));
    let mass_rows = tape.matmul(ones_n1, inv_mass)?;
    let scaled_phi = tape.hadamard(phi_tm, mass_rows)?;
    let t = tape.matmul(scaled_phi, phi_t)?;

    // Chain recurrence H^(s) = (H o M) H^(s-1).
    let mut chains = vec![h];
    if steps > 1 {
        let within_class = tape.hadamard(h, m)?;
        for _ in 1..steps {
            let prev = *chains.last().expect("nonempty");
            chains.push(tape.matmul(within_class, prev)?);
        }
    }

    // (1/S) sum_s (1/N^2) sum_ij -T_ij log H^(s)_ij.
    let mut acc: Option<VarId> = None;
    for h_s in &chains {
        let clamped = tape.clamp_min(*h_s, LOG_EPS);
        let logs = tape.log(clamped)?;
        let weighted = tape.hadamard(t, logs)?;
        let term = tape.sum(weighted);
        acc = Some(match acc {
            None => term,
            Some(prev) => tape.add(prev, term)?,
        });
    }
    let total = acc.expect("at least one step");
    let loss = tape.scale(total, loss::cclp_scale(steps, n))?;

    Ok(CclpGraph { loss, h, phi, t, m, chains })
}

/// Mean negative log-likelihood of the true classes for recorded
/// probabilities: `-(1/N_L) sum_ic y_ic log p_ic`.
pub fn supervised_loss_on_tape(tape: &mut Tape, probs: VarId, y_onehot: &Mat) -> Result<VarId> {
    let shape = tape.value(probs).shape();
    if shape != y_onehot.shape() {
        return Err(NumError::shape(
            "supervised_loss_on_tape",
            format!("probs {:?} vs labels {:?}", shape, y_onehot.shape()),
        ));
    }
    let y_leaf = tape.leaf(y_onehot.clone());
    let clamped = tape.clamp_min(probs, LOG_EPS);
    let logs = tape.log(clamped)?;
    let weighted = tape.hadamard(y_leaf, logs)?;
    let total = tape.sum(weighted);
    tape.scale(total, -1.0 / shape.0 as f64)
}

/// Mean prediction entropy of recorded probabilities:
/// `(1/N) sum_i sum_c -p_ic log p_ic`.
pub fn cer_loss_on_tape(tape: &mut Tape, probs: VarId) -> Result<VarId> {
    let rows = tape.value(probs).rows();
    if rows == 0 {
        return Err(NumError::arg("cer_loss_on_tape", "no rows"));
    }
    let clamped = tape.clamp_min(probs, LOG_EPS);
    let logs = tape.log(clamped)?;
    let weighted = tape.hadamard(probs, logs)?;
    let total = tape.sum(weighted);
    tape.scale(total, -1.0 / rows as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphState;
    use crate::labelprop;
    use crate::loss::ChainSet;
    use crate::model::LinearClassifier;
    use crate::numkit::Rng;

    fn one_hot_cycle(n_labeled: usize, classes: usize) -> Mat {
        let mut y = Mat::zeros(n_labeled, classes);
        for i in 0..n_labeled {
            y.set(i, i % classes, 1.0);
        }
        y
    }

    fn random_embeddings(n: usize, d: usize, rng: &mut Rng) -> Mat {
        Mat::from_vec(n, d, (0..n * d).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn tape_forward_equals_pure_path_bit_for_bit() {
        let mut rng = Rng::from_seed(21);
        for (kind, scale) in [
            (Similarity::Dot, 1.0),
            (Similarity::Dot, 0.5),
            (Similarity::NegSqEuclidean, 1.0),
            (Similarity::NegSqEuclidean, 5.0),
        ] {
            let n = 9;
            let n_labeled = 3;
            let z = random_embeddings(n, 3, &mut rng);
            let y = one_hot_cycle(n_labeled, 3);
            let opts = GraphOptions { similarity: kind, self_loops: true, score_scale: scale };

            let mut tape = Tape::new();
            let z_id = tape.leaf(z.clone());
            let g = cclp_loss_on_tape(&mut tape, z_id, &y, n_labeled, &opts, 3, false).unwrap();

            let state = GraphState::build(&z, n_labeled, &opts).unwrap();
            let lp = labelprop::propagate_closed_form(&state, &y).unwrap();
            let chains = ChainSet::build(&state.h, &lp.phi, 3).unwrap();
            let pure_loss = crate::loss::cclp_loss(&chains.t, &chains.h_s).unwrap();

            assert_eq!(tape.value(g.h).data(), state.h.data(), "{:?}", kind);
            assert_eq!(tape.value(g.phi).data(), lp.phi.data(), "{:?}", kind);
            assert_eq!(tape.value(g.m).data(), chains.m.data(), "{:?}", kind);
            assert_eq!(tape.value(g.t).data(), chains.t.data(), "{:?}", kind);
            for (s, id) in g.chains.iter().enumerate() {
                assert_eq!(tape.value(*id).data(), chains.h_s[s].data(), "{:?} s={}", kind, s);
            }
            assert_eq!(tape.value(g.loss).get(0, 0), pure_loss, "{:?}", kind);
        }
    }

    #[test]
    fn all_labeled_batch_uses_labels_as_posteriors() {
        let mut rng = Rng::from_seed(22);
        let z = random_embeddings(4, 2, &mut rng);
        let y = one_hot_cycle(4, 2);
        let mut tape = Tape::new();
        let z_id = tape.leaf(z);
        let g = cclp_loss_on_tape(
            &mut tape,
            z_id,
            &y,
            4,
            &GraphOptions::default(),
            2,
            false,
        )
        .unwrap();
        assert_eq!(tape.value(g.phi).data(), y.data());
        assert!(tape.value(g.loss).get(0, 0) >= 0.0);
    }

    #[test]
    fn losses_on_tape_match_pure_losses() {
        let mut rng = Rng::from_seed(23);
        let clf = LinearClassifier::new(3, 2, &mut rng);
        let z = random_embeddings(5, 3, &mut rng);
        let y = one_hot_cycle(5, 2);

        let probs = clf.forward(&z).unwrap();
        let pure_sup = crate::model::supervised_loss(&probs, &y).unwrap();
        let pure_cer = crate::loss::cer_loss(&probs).unwrap();

        let mut tape = Tape::new();
        let z_id = tape.leaf(z);
        let cvars = clf.register(&mut tape);
        let p_id = clf.forward_on_tape(&mut tape, z_id, &cvars).unwrap();
        let sup = supervised_loss_on_tape(&mut tape, p_id, &y).unwrap();
        let cer = cer_loss_on_tape(&mut tape, p_id).unwrap();

        assert_eq!(tape.value(sup).get(0, 0), pure_sup);
        assert_eq!(tape.value(cer).get(0, 0), pure_cer);
    }

    #[test]
    fn stop_grad_phi_changes_embedding_gradients_but_not_the_loss() {
        let mut rng = Rng::from_seed(24);
        let z = random_embeddings(8, 2, &mut rng);
        let y = one_hot_cycle(3, 3);

        let run = |stop: bool| {
            let mut tape = Tape::new();
            let z_id = tape.leaf(z.clone());
            let g = cclp_loss_on_tape(
                &mut tape,
                z_id,
                &y,
                3,
                &GraphOptions::default(),
                2,
                stop,
            )
            .unwrap();
            let grads = tape.backward(g.loss).unwrap();
            (tape.value(g.loss).get(0, 0), grads.wrt(z_id).clone())
        };
        let (loss_flow, grad_flow) = run(false);
        let (loss_stop, grad_stop) = run(true);
        assert_eq!(loss_flow, loss_stop);
        assert!(grad_flow.max_abs_diff(&grad_stop) > 1e-9, "stop-grad had no effect");
    }

    #[test]
    fn cclp_gradients_reach_labeled_and_unlabeled_embeddings() {
        let mut rng = Rng::from_seed(25);
        let z = random_embeddings(8, 3, &mut rng);
        let y = one_hot_cycle(2, 2);
        let mut tape = Tape::new();
        let z_id = tape.leaf(z);
        let g = cclp_loss_on_tape(
            &mut tape,
            z_id,
            &y,
            2,
            &GraphOptions::default(),
            3,
            false,
        )
        .unwrap();
        let grads = tape.backward(g.loss).unwrap();
        let gz = grads.wrt(z_id);
        let labeled_norm: f64 = (0..2).map(|i| gz.row(i).iter().map(|v| v.abs()).sum::<f64>()).sum();
        let unlabeled_norm: f64 =
            (2..8).map(|i| gz.row(i).iter().map(|v| v.abs()).sum::<f64>()).sum();
        assert!(labeled_norm > 1e-10, "no gradient on labeled embeddings");
        assert!(unlabeled_norm > 1e-10, "no gradient on unlabeled embeddings");
    }

    #[test]
    fn replay_of_the_full_pipeline_is_bit_identical() {
        let mut rng = Rng::from_seed(26);
        let z = random_embeddings(7, 2, &mut rng);
        let y = one_hot_cycle(2, 2);
        let mut tape = Tape::new();
        let z_id = tape.leaf(z);
        let _ = cclp_loss_on_tape(
            &mut tape,
            z_id,
            &y,
            2,
            &GraphOptions { similarity: Similarity::NegSqEuclidean, self_loops: true, score_scale: 2.0 },
            4,
            false,
        )
        .unwrap();
        let replayed = tape.replay().unwrap();
        for (i, v) in replayed.iter().enumerate() {
            assert_eq!(v.data(), tape.value(super::VarId(i)).data(), "node {}", i);
        }
    }
}

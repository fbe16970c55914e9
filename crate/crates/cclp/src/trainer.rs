//! The training loop: forward pass, batch graph, label propagation,
//! losses, and the asymmetric parameter updates — the feature extractor
//! descends the total loss while the classifier descends the supervised
//! loss alone, so the regularizer shapes the latent space without ever
//! steering the decision boundary directly.

use crate::autograd::{pipeline, Tape, VarId};
use crate::data::{sample_batch, DataError, DataResult, Dataset, SamplerState};
use crate::graph::{Batch, GraphOptions, GraphState, Similarity};
use crate::labelprop;
use crate::model::{LinearClassifier, MlpExtractor};
use crate::numkit::{Mat, NumError, Result, Rng};

/// Named RNG streams derived from the user seed.
const STREAM_PARAMS: u64 = 0x7061_7261_6d73; // "params"
const STREAM_SAMPLER: u64 = 0x7361_6d70_6c65; // "sample"

/// Which unlabeled-data term is added to the supervised loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    /// The multi-step compact-clustering loss.
    Cclp,
    /// Conditional-entropy baseline on classifier outputs.
    Cer,
    /// Supervision only.
    None,
}

/// Full configuration of a training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Labeled batch size; must be a multiple of the class count.
    pub n_l: usize,
    /// Unlabeled batch size.
    pub n_u: usize,
    /// Markov-chain steps S of the clustering loss.
    pub steps_s: usize,
    /// Regularizer weight w.
    pub weight_w: f64,
    /// SGD learning rate.
    pub lr_alpha: f64,
    /// Iteration budget (the stopping criterion).
    pub iterations: usize,
    pub seed: u64,
    pub regularizer: Regularizer,
    /// Treat the propagated posteriors as constants in T and M.
    pub stop_grad_phi: bool,
    pub self_loops: bool,
    pub similarity: Similarity,
    pub score_scale: f64,
    /// Hidden layer widths of the feature extractor.
    pub hidden: Vec<usize>,
    /// Embedding dimension d.
    pub embed_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_l: 100,
            n_u: 100,
            steps_s: 3,
            weight_w: 1.0,
            lr_alpha: 0.1,
            iterations: 1000,
            seed: 0,
            regularizer: Regularizer::Cclp,
            stop_grad_phi: false,
            self_loops: true,
            similarity: Similarity::Dot,
            score_scale: 1.0,
            hidden: vec![128, 64],
            embed_dim: 32,
        }
    }
}

impl TrainConfig {
    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions {
            similarity: self.similarity,
            self_loops: self.self_loops,
            score_scale: self.score_scale,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps_s == 0 {
            return Err(NumError::arg("TrainConfig", "steps_s must be at least 1"));
        }
        if self.weight_w < 0.0 {
            return Err(NumError::arg("TrainConfig", "weight_w must be nonnegative"));
        }
        if self.lr_alpha <= 0.0 {
            return Err(NumError::arg("TrainConfig", "lr_alpha must be positive"));
        }
        Ok(())
    }
}

/// Per-iteration metrics. `l_total = l_sup + w * l_reg` holds exactly as
/// recorded on the tape.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub l_sup: f64,
    pub l_reg: f64,
    pub l_total: f64,
    /// Fraction of the labeled batch the classifier gets right.
    pub train_accuracy: f64,
    /// Embeddings of this iteration's batch, when snapshotting is on.
    pub embedding_snapshot: Option<Mat>,
}

struct StepPlan {
    record: IterationRecord,
    new_extractor_params: Vec<Mat>,
    new_classifier_w: Mat,
    new_classifier_b: Mat,
    embeddings: Mat,
}

fn batch_accuracy(probs: &Mat, y_onehot: &Mat) -> f64 {
    let mut correct = 0;
    for i in 0..probs.rows() {
        let pred = probs
            .row(i)
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, _)| j)
            .expect("nonempty row");
        let truth = y_onehot
            .row(i)
            .iter()
            .position(|v| *v == 1.0)
            .expect("one-hot row");
        if pred == truth {
            correct += 1;
        }
    }
    correct as f64 / probs.rows() as f64
}

/// Records forward + both backward passes and works out the new
/// parameter values without touching the model, so a failing step leaves
/// the caller's state unchanged.
fn plan_step(
    batch: &Batch,
    extractor: &MlpExtractor,
    classifier: &LinearClassifier,
    cfg: &TrainConfig,
) -> Result<StepPlan> {
    cfg.validate()?;
    let mut tape = Tape::new();
    let x_id = tape.leaf(batch.x.clone());
    let mvars = extractor.register(&mut tape);
    let z = extractor.forward_on_tape(&mut tape, x_id, &mvars)?;
    let cvars = classifier.register(&mut tape);

    let d = extractor.output_dim();
    let z_labeled = tape.block(z, 0, 0, batch.n_labeled, d)?;
    let probs_labeled = classifier.forward_on_tape(&mut tape, z_labeled, &cvars)?;
    let l_sup = pipeline::supervised_loss_on_tape(&mut tape, probs_labeled, &batch.y_onehot)?;

    let reg_id: Option<VarId> = match cfg.regularizer {
        Regularizer::None => None,
        Regularizer::Cclp => {
            let g = pipeline::cclp_loss_on_tape(
                &mut tape,
                z,
                &batch.y_onehot,
                batch.n_labeled,
                &cfg.graph_options(),
                cfg.steps_s,
                cfg.stop_grad_phi,
            )?;
            Some(g.loss)
        }
        Regularizer::Cer => {
            if batch.n_unlabeled == 0 {
                None
            } else {
                let z_unlabeled = tape.block(z, batch.n_labeled, 0, batch.n_unlabeled, d)?;
                let probs_unlabeled = classifier.forward_on_tape(&mut tape, z_unlabeled, &cvars)?;
                Some(pipeline::cer_loss_on_tape(&mut tape, probs_unlabeled)?)
            }
        }
    };

    let total_id = match reg_id {
        None => l_sup,
        Some(r) => {
            let weighted = tape.scale(r, cfg.weight_w)?;
            tape.add(l_sup, weighted)?
        }
    };

    let grads_total = tape.backward(total_id)?;
    let grads_sup = tape.backward(l_sup)?;

    // theta_z <- theta_z - alpha dL_total/dtheta_z
    let mut new_extractor_params = Vec::new();
    for (param, id) in extractor.params().iter().zip(MlpExtractor::var_ids(&mvars)) {
        let step = grads_total.wrt(id).scale(cfg.lr_alpha)?;
        new_extractor_params.push(param.sub(&step)?);
    }
    // theta_g <- theta_g - alpha dL_sup/dtheta_g
    let new_classifier_w = classifier.w.sub(&grads_sup.wrt(cvars.w).scale(cfg.lr_alpha)?)?;
    let new_classifier_b = classifier.b.sub(&grads_sup.wrt(cvars.b).scale(cfg.lr_alpha)?)?;

    let l_sup_value = tape.value(l_sup).get(0, 0);
    let l_reg_value = reg_id.map_or(0.0, |r| tape.value(r).get(0, 0));
    let record = IterationRecord {
        iteration: 0,
        l_sup: l_sup_value,
        l_reg: l_reg_value,
        l_total: tape.value(total_id).get(0, 0),
        train_accuracy: batch_accuracy(tape.value(probs_labeled), &batch.y_onehot),
        embedding_snapshot: None,
    };
    Ok(StepPlan {
        record,
        new_extractor_params,
        new_classifier_w,
        new_classifier_b,
        embeddings: tape.value(z).clone(),
    })
}

/// One SGD step on one batch. Errors abort the step with both models
/// unchanged.
pub fn train_step(
    batch: &Batch,
    extractor: &mut MlpExtractor,
    classifier: &mut LinearClassifier,
    cfg: &TrainConfig,
) -> Result<IterationRecord> {
    let plan = plan_step(batch, extractor, classifier, cfg)?;
    for (param, new) in extractor.params_mut().into_iter().zip(plan.new_extractor_params) {
        *param = new;
    }
    classifier.w = plan.new_classifier_w;
    classifier.b = plan.new_classifier_b;
    Ok(plan.record)
}

/// Runs the full loop for `cfg.iterations` steps. The whole trajectory
/// is a pure function of the datasets and the configuration (seed
/// included).
pub fn train(
    labeled: &Dataset,
    unlabeled: &Dataset,
    cfg: &TrainConfig,
    snapshot_every: usize,
) -> DataResult<(MlpExtractor, LinearClassifier, Vec<IterationRecord>)> {
    cfg.validate().map_err(DataError::from)?;
    let mut param_rng = Rng::with_stream(cfg.seed, STREAM_PARAMS);
    let mut extractor =
        MlpExtractor::new(labeled.x.cols(), &cfg.hidden, cfg.embed_dim, &mut param_rng);
    let mut classifier = LinearClassifier::new(cfg.embed_dim, labeled.classes, &mut param_rng);
    let mut sampler = SamplerState::new(labeled, unlabeled, Rng::with_stream(cfg.seed, STREAM_SAMPLER));

    let mut records = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let batch = sample_batch(labeled, unlabeled, cfg.n_l, cfg.n_u, &mut sampler)?;
        let plan = plan_step(&batch, &extractor, &classifier, cfg).map_err(DataError::from)?;
        for (param, new) in extractor.params_mut().into_iter().zip(plan.new_extractor_params) {
            *param = new;
        }
        classifier.w = plan.new_classifier_w;
        classifier.b = plan.new_classifier_b;
        let mut record = plan.record;
        record.iteration = iteration;
        if snapshot_every > 0 && iteration % snapshot_every == 0 {
            record.embedding_snapshot = Some(plan.embeddings);
        }
        records.push(record);
    }
    Ok((extractor, classifier, records))
}

/// Classification error rate of the model on a labeled dataset.
pub fn holdout_error(
    extractor: &MlpExtractor,
    classifier: &LinearClassifier,
    ds: &Dataset,
) -> Result<f64> {
    let z = extractor.forward(&ds.x)?;
    let preds = classifier.predict(&z)?;
    let mut wrong = 0;
    let mut total = 0;
    for (pred, label) in preds.iter().zip(&ds.y) {
        if let Some(c) = label {
            total += 1;
            if pred != c {
                wrong += 1;
            }
        }
    }
    if total == 0 {
        return Err(NumError::arg("holdout_error", "dataset has no labels"));
    }
    Ok(wrong as f64 / total as f64)
}

/// One recorded state of a free-embedding run: the coordinates, the two
/// losses' gradients on them (separately), the propagated posteriors,
/// and the classifier parameters, all captured before the update at
/// `iteration` was applied.
#[derive(Debug, Clone)]
pub struct ToySnapshot {
    pub iteration: usize,
    pub coords: Mat,
    pub grad_sup: Mat,
    pub grad_reg: Mat,
    pub lp_posteriors: Mat,
    pub classifier_w: Mat,
    pub classifier_b: Mat,
    pub l_sup: f64,
    pub l_reg: f64,
    pub l_total: f64,
}

/// Result of a free-embedding run.
#[derive(Debug, Clone)]
pub struct FreeTrajectory {
    pub snapshots: Vec<ToySnapshot>,
    pub final_coords: Mat,
    pub final_classifier: LinearClassifier,
}

/// Optimizes 2D coordinates directly (the embeddings are the
/// parameters), jointly with a linear classifier: the coordinates
/// descend the total loss, the classifier descends the supervised loss.
/// Captures a snapshot every `snapshot_every` iterations plus the final
/// state; with an iteration budget of zero the trajectory is exactly the
/// initial state.
pub fn free_embedding_train(
    layout: &Batch,
    cfg: &TrainConfig,
    snapshot_every: usize,
) -> Result<FreeTrajectory> {
    cfg.validate()?;
    if snapshot_every == 0 {
        return Err(NumError::arg("free_embedding_train", "snapshot_every must be at least 1"));
    }
    let mut coords = layout.x.clone();
    let classes = layout.classes();
    let mut param_rng = Rng::with_stream(cfg.seed, STREAM_PARAMS);
    let mut classifier = LinearClassifier::new(coords.cols(), classes, &mut param_rng);
    let mut snapshots = Vec::new();

    for iteration in 0..=cfg.iterations {
        let mut tape = Tape::new();
        let z = tape.leaf(coords.clone());
        let cvars = classifier.register(&mut tape);
        let z_labeled = tape.block(z, 0, 0, layout.n_labeled, coords.cols())?;
        let probs_labeled = classifier.forward_on_tape(&mut tape, z_labeled, &cvars)?;
        let l_sup = pipeline::supervised_loss_on_tape(&mut tape, probs_labeled, &layout.y_onehot)?;

        let mut phi_id = None;
        let reg_id = match cfg.regularizer {
            Regularizer::None => None,
            Regularizer::Cclp => {
                let g = pipeline::cclp_loss_on_tape(
                    &mut tape,
                    z,
                    &layout.y_onehot,
                    layout.n_labeled,
                    &cfg.graph_options(),
                    cfg.steps_s,
                    cfg.stop_grad_phi,
                )?;
                phi_id = Some(g.phi);
                Some(g.loss)
            }
            Regularizer::Cer => {
                let z_unlabeled =
                    tape.block(z, layout.n_labeled, 0, layout.n_unlabeled, coords.cols())?;
                let probs_unlabeled = classifier.forward_on_tape(&mut tape, z_unlabeled, &cvars)?;
                Some(pipeline::cer_loss_on_tape(&mut tape, probs_unlabeled)?)
            }
        };
        let total_id = match reg_id {
            None => l_sup,
            Some(r) => {
                let weighted = tape.scale(r, cfg.weight_w)?;
                tape.add(l_sup, weighted)?
            }
        };

        let grads_total = tape.backward(total_id)?;
        let grads_sup = tape.backward(l_sup)?;

        if iteration % snapshot_every == 0 || iteration == cfg.iterations {
            let grad_reg = match reg_id {
                None => Mat::zeros(coords.rows(), coords.cols()),
                Some(r) => tape.backward(r)?.wrt(z).clone(),
            };
            let lp_posteriors = match phi_id {
                Some(id) => tape.value(id).clone(),
                None => {
                    let state =
                        GraphState::build(&coords, layout.n_labeled, &cfg.graph_options())?;
                    labelprop::propagate_closed_form(&state, &layout.y_onehot)?.phi
                }
            };
            snapshots.push(ToySnapshot {
                iteration,
                coords: coords.clone(),
                grad_sup: grads_sup.wrt(z).clone(),
                grad_reg,
                lp_posteriors,
                classifier_w: classifier.w.clone(),
                classifier_b: classifier.b.clone(),
                l_sup: tape.value(l_sup).get(0, 0),
                l_reg: reg_id.map_or(0.0, |r| tape.value(r).get(0, 0)),
                l_total: tape.value(total_id).get(0, 0),
            });
        }

        if iteration < cfg.iterations {
            coords = coords.sub(&grads_total.wrt(z).scale(cfg.lr_alpha)?)?;
            classifier.w = classifier.w.sub(&grads_sup.wrt(cvars.w).scale(cfg.lr_alpha)?)?;
            classifier.b = classifier.b.sub(&grads_sup.wrt(cvars.b).scale(cfg.lr_alpha)?)?;
        }
    }
    Ok(FreeTrajectory { snapshots, final_coords: coords, final_classifier: classifier })
}

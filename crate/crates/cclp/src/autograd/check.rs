//! Central finite-difference gradient checking, plus a harness that
//! checks every loss in the crate against numeric gradients with respect
//! to embeddings and every model parameter.

use crate::autograd::{pipeline, Tape, VarId};
use crate::graph::GraphOptions;
use crate::model::{LinearClassifier, MlpExtractor};
use crate::numkit::{Mat, NumError, Result, Rng};

/// Floor inside the relative-error denominator, so that near-zero
/// gradient entries are compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-8;

/// Relative error between an analytic and a numeric gradient entry.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Outcome of comparing an analytic gradient against central finite
/// differences.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub analytic: Mat,
    pub numeric: Mat,
    /// `|a - n| / max(|a|, |n|, 1e-8)`, maximized over entries.
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    /// The `k` entries with the largest relative error, as
    /// `(row, col, analytic, numeric, rel_err)`, worst first.
    pub fn worst_entries(&self, k: usize) -> Vec<(usize, usize, f64, f64, f64)> {
        let mut entries: Vec<_> = (0..self.analytic.rows())
            .flat_map(|i| (0..self.analytic.cols()).map(move |j| (i, j)))
            .map(|(i, j)| {
                let a = self.analytic.get(i, j);
                let n = self.numeric.get(i, j);
                (i, j, a, n, rel_err(a, n))
            })
            .collect();
        entries.sort_by(|x, y| y.4.total_cmp(&x.4));
        entries.truncate(k);
        entries
    }
}

/// Compares `analytic` against the central difference
/// `(f(at + h e_ij) - f(at - h e_ij)) / 2h` for every entry of `at`.
///
/// `h` must lie in `[1e-7, 1e-3]`: larger steps lose too much to
/// truncation, smaller ones to cancellation.
pub fn finite_diff_check<F>(
    mut f: F,
    at: &Mat,
    h: f64,
    analytic: &Mat,
    tolerance: f64,
) -> Result<GradReport>
where
    F: FnMut(&Mat) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(NumError::arg("finite_diff_check", format!("h = {} out of [1e-7, 1e-3]", h)));
    }
    if analytic.shape() != at.shape() {
        return Err(NumError::shape(
            "finite_diff_check",
            format!("analytic is {:?}, point is {:?}", analytic.shape(), at.shape()),
        ));
    }
    let mut numeric = Mat::zeros(at.rows(), at.cols());
    let mut probe = at.clone();
    for i in 0..at.rows() {
        for j in 0..at.cols() {
            let base = at.get(i, j);
            probe.set(i, j, base + h);
            let up = f(&probe)?;
            probe.set(i, j, base - h);
            let down = f(&probe)?;
            probe.set(i, j, base);
            let slope = (up - down) / (2.0 * h);
            if !slope.is_finite() {
                return Err(NumError::NonFinite { op: "finite_diff_check" });
            }
            numeric.set(i, j, slope);
        }
    }
    let max_rel_err = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .fold(0.0f64, |acc, (a, n)| acc.max(rel_err(*a, *n)));
    Ok(GradReport { analytic: analytic.clone(), numeric, max_rel_err, tolerance })
}

/// Loss functions covered by the gradient-check harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckLoss {
    /// Supervised cross entropy on labeled rows.
    Sup,
    /// Single-step clustering loss.
    OneStep,
    /// Multi-step clustering loss (step count from the spec).
    Cclp,
    /// Conditional entropy on unlabeled rows.
    Cer,
}

impl CheckLoss {
    pub fn parse(name: &str) -> Option<CheckLoss> {
        match name {
            "sup" => Some(CheckLoss::Sup),
            "1step" => Some(CheckLoss::OneStep),
            "cclp" => Some(CheckLoss::Cclp),
            "cer" => Some(CheckLoss::Cer),
            _ => None,
        }
    }
}

/// Shape of a random gradient-check instance.
#[derive(Debug, Clone)]
pub struct CheckSpec {
    /// Batch size (the first `classes` rows are labeled, one per class).
    pub n: usize,
    /// Embedding dimension.
    pub d: usize,
    pub classes: usize,
    /// Chain steps for [`CheckLoss::Cclp`].
    pub steps: usize,
    pub seed: u64,
    /// Central-difference step.
    pub h: f64,
    pub tolerance: f64,
    pub graph: GraphOptions,
    /// When set, embeddings come from a small MLP over random inputs and
    /// the extractor's parameters are checked; otherwise the embeddings
    /// themselves are the leaf.
    pub use_mlp: bool,
    /// Test hook: corrupt one adjoint rule on the analytic tape so the
    /// comparison must fail. Proves the checker has teeth.
    pub corrupt_adjoint: bool,
}

impl Default for CheckSpec {
    fn default() -> Self {
        CheckSpec {
            n: 8,
            d: 3,
            classes: 2,
            steps: 3,
            seed: 0,
            h: 1e-5,
            tolerance: 1e-5,
            graph: GraphOptions::default(),
            use_mlp: false,
            corrupt_adjoint: false,
        }
    }
}

/// One leaf's gradient-check outcome.
#[derive(Debug, Clone)]
pub struct LeafReport {
    pub leaf: String,
    pub report: GradReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LeafKey {
    Embeddings,
    ExtractorParam(usize),
    ClassifierWeight,
    ClassifierBias,
}

impl LeafKey {
    fn name(&self) -> String {
        match self {
            LeafKey::Embeddings => "embeddings".to_string(),
            LeafKey::ExtractorParam(i) => format!("extractor.param{}", i),
            LeafKey::ClassifierWeight => "classifier.w".to_string(),
            LeafKey::ClassifierBias => "classifier.b".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
struct CheckInstance {
    /// Free embeddings (None when an extractor produces them).
    z0: Option<Mat>,
    /// Extractor inputs (None in the free-embedding family).
    x: Option<Mat>,
    extractor: Option<MlpExtractor>,
    classifier: LinearClassifier,
    y_onehot: Mat,
    n_labeled: usize,
    graph: GraphOptions,
    steps: usize,
    corrupt_adjoint: bool,
}

impl CheckInstance {
    fn from_spec(spec: &CheckSpec, attempt: u64) -> Result<CheckInstance> {
        if spec.n < spec.classes + 1 {
            return Err(NumError::arg("CheckSpec", "need at least one unlabeled sample"));
        }
        let mut rng = Rng::with_stream(spec.seed, 0xC11E_C6 ^ attempt.wrapping_mul(0x9E37));
        let mut y = Mat::zeros(spec.classes, spec.classes);
        for i in 0..spec.classes {
            y.set(i, i, 1.0);
        }
        let (z0, x, extractor) = if spec.use_mlp {
            let (x, mlp) = tame_mlp_instance(spec, &mut rng)?;
            (None, Some(x), Some(mlp))
        } else {
            let z = Mat::from_vec(
                spec.n,
                spec.d,
                (0..spec.n * spec.d).map(|_| 0.8 * rng.normal()).collect(),
            )?;
            (Some(z), None, None)
        };
        let classifier = LinearClassifier::new(spec.d, spec.classes, &mut rng);
        Ok(CheckInstance {
            z0,
            x,
            extractor,
            classifier,
            y_onehot: y,
            n_labeled: spec.classes,
            graph: spec.graph,
            steps: spec.steps,
            corrupt_adjoint: spec.corrupt_adjoint,
        })
    }

    fn leaves(&self) -> Vec<LeafKey> {
        let mut keys = Vec::new();
        match &self.extractor {
            Some(mlp) => {
                keys.extend((0..mlp.params().len()).map(LeafKey::ExtractorParam));
            }
            None => keys.push(LeafKey::Embeddings),
        }
        keys.push(LeafKey::ClassifierWeight);
        keys.push(LeafKey::ClassifierBias);
        keys
    }

    fn leaf_value(&self, key: LeafKey) -> &Mat {
        match key {
            LeafKey::Embeddings => self.z0.as_ref().expect("free-embedding instance"),
            LeafKey::ExtractorParam(i) => self.extractor.as_ref().expect("mlp instance").params()[i],
            LeafKey::ClassifierWeight => &self.classifier.w,
            LeafKey::ClassifierBias => &self.classifier.b,
        }
    }

    fn with_leaf(&self, key: LeafKey, value: &Mat) -> CheckInstance {
        let mut out = self.clone();
        match key {
            LeafKey::Embeddings => out.z0 = Some(value.clone()),
            LeafKey::ExtractorParam(i) => {
                let mlp = out.extractor.as_mut().expect("mlp instance");
                *mlp.params_mut()[i] = value.clone();
            }
            LeafKey::ClassifierWeight => out.classifier.w = value.clone(),
            LeafKey::ClassifierBias => out.classifier.b = value.clone(),
        }
        out
    }

    /// Records the requested loss and returns the tape, the loss node and
    /// the tape ids of every checkable leaf.
    fn record(&self, loss: CheckLoss) -> Result<(Tape, VarId, Vec<(LeafKey, VarId)>)> {
        let mut tape = Tape::new();
        // Corruption skews backward only; the numeric probes (which use
        // forward values alone) stay exact, so analytic and numeric must
        // disagree.
        tape.corrupt_matmul_adjoint_for_testing(self.corrupt_adjoint);
        let mut leaves = Vec::new();
        let z = match (&self.z0, &self.x, &self.extractor) {
            (Some(z0), _, _) => {
                let id = tape.leaf(z0.clone());
                leaves.push((LeafKey::Embeddings, id));
                id
            }
            (None, Some(x), Some(mlp)) => {
                let x_id = tape.leaf(x.clone());
                let vars = mlp.register(&mut tape);
                for (i, id) in MlpExtractor::var_ids(&vars).into_iter().enumerate() {
                    leaves.push((LeafKey::ExtractorParam(i), id));
                }
                mlp.forward_on_tape(&mut tape, x_id, &vars)?
            }
            _ => return Err(NumError::arg("CheckInstance", "inconsistent instance")),
        };
        let cvars = self.classifier.register(&mut tape);
        leaves.push((LeafKey::ClassifierWeight, cvars.w));
        leaves.push((LeafKey::ClassifierBias, cvars.b));

        let d = tape.value(z).cols();
        let n = tape.value(z).rows();
        let loss_id = match loss {
            CheckLoss::Sup => {
                let z_l = tape.block(z, 0, 0, self.n_labeled, d)?;
                let probs = self.classifier.forward_on_tape(&mut tape, z_l, &cvars)?;
                pipeline::supervised_loss_on_tape(&mut tape, probs, &self.y_onehot)?
            }
            CheckLoss::Cer => {
                let z_u = tape.block(z, self.n_labeled, 0, n - self.n_labeled, d)?;
                let probs = self.classifier.forward_on_tape(&mut tape, z_u, &cvars)?;
                pipeline::cer_loss_on_tape(&mut tape, probs)?
            }
            CheckLoss::OneStep | CheckLoss::Cclp => {
                let steps = if loss == CheckLoss::OneStep { 1 } else { self.steps };
                pipeline::cclp_loss_on_tape(
                    &mut tape,
                    z,
                    &self.y_onehot,
                    self.n_labeled,
                    &self.graph,
                    steps,
                    false,
                )?
                .loss
            }
        };
        Ok((tape, loss_id, leaves))
    }
}

/// Draws random extractor instances until one keeps every hidden
/// preactivation away from the rectifier kink.
///
/// A finite-difference probe is only meaningful where the function is
/// smooth over the probe interval: a preactivation within the margin of
/// zero would flip its rectifier between the two probe points and the
/// central difference would measure a one-sided slope. Weights are also
/// shrunk so dot-product similarities stay in a regime where truncation
/// error sits well below the check tolerance.
fn tame_mlp_instance(spec: &CheckSpec, rng: &mut Rng) -> Result<(Mat, MlpExtractor)> {
    const KINK_MARGIN: f64 = 1e-3;
    let input_dim = 3;
    loop {
        let x = Mat::from_vec(
            spec.n,
            input_dim,
            (0..spec.n * input_dim).map(|_| rng.normal()).collect(),
        )?;
        let mut mlp = MlpExtractor::new(input_dim, &[5], spec.d, rng);
        let n_weights = mlp.params().len() / 2;
        for (i, param) in mlp.params_mut().into_iter().enumerate() {
            if i < n_weights {
                *param = param.scale(0.4)?;
            } else {
                let randomized: Vec<f64> =
                    (0..param.rows() * param.cols()).map(|_| 0.2 * rng.normal()).collect();
                *param = Mat::from_vec(param.rows(), param.cols(), randomized)?;
            }
        }

        // Walk the hidden layers and find the preactivation closest to 0.
        let params = mlp.params();
        let mut cur = x.clone();
        let mut margin = f64::INFINITY;
        for layer in 0..n_weights - 1 {
            let mut a = crate::numkit::matmul(&cur, params[layer])?;
            for i in 0..a.rows() {
                for j in 0..a.cols() {
                    let v = a.get(i, j) + params[n_weights + layer].get(0, j);
                    a.set(i, j, v);
                    margin = margin.min(v.abs());
                }
            }
            cur = a.relu();
        }
        if margin > KINK_MARGIN {
            return Ok((x, mlp));
        }
    }
}

/// Smallest analytic-gradient magnitude the finite-difference probe can
/// certify to 1e-5 relative accuracy: the probe's absolute resolution is
/// roughly 1e-10 (rounding of the loss over the 2e-5 interval plus
/// truncation), so entries below this are indistinguishable from their
/// own measurement noise. Exactly-zero entries are fine: structural
/// independence shows up as a bit-identical loss under perturbation.
const MEASURABLE_GRAD: f64 = 1e-4;

/// Runs the full analytic-vs-numeric comparison for one loss on one
/// random instance, one report per leaf (embeddings or extractor
/// parameters, plus the classifier).
///
/// Instances whose analytic gradients contain entries inside the
/// unmeasurable band `(0, MEASURABLE_GRAD)` are redrawn deterministically
/// — a finite-difference check on such an entry reports noise, not
/// correctness.
pub fn check_loss_gradients(loss: CheckLoss, spec: &CheckSpec) -> Result<Vec<LeafReport>> {
    let mut chosen = None;
    for attempt in 0..500 {
        let instance = CheckInstance::from_spec(spec, attempt)?;
        let (tape, loss_id, leaf_ids) = instance.record(loss)?;
        let grads = tape.backward(loss_id)?;
        let measurable = leaf_ids.iter().all(|(_, id)| {
            grads
                .wrt(*id)
                .data()
                .iter()
                .all(|g| *g == 0.0 || g.abs() >= MEASURABLE_GRAD)
        });
        if measurable {
            chosen = Some((instance, leaf_ids, grads));
            break;
        }
    }
    let (instance, leaf_ids, grads) = chosen.ok_or_else(|| {
        NumError::arg("check_loss_gradients", "no measurable instance in 500 attempts")
    })?;

    let mut reports = Vec::new();
    for key in instance.leaves() {
        let analytic = leaf_ids
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, id)| grads.wrt(*id).clone())
            .expect("every leaf is recorded");
        let at = instance.leaf_value(key).clone();
        let f = |m: &Mat| -> Result<f64> {
            let probe = instance.with_leaf(key, m);
            let (tape, loss_id, _) = probe.record(loss)?;
            Ok(tape.value(loss_id).get(0, 0))
        };
        let report = finite_diff_check(f, &at, spec.h, &analytic, spec.tolerance)?;
        reports.push(LeafReport { leaf: key.name(), report });
    }
    Ok(reports)
}

//! Learnable pieces: a small rectifier MLP feature extractor, the linear
//! classifier that sits on top of it, and the free-embedding container
//! used when 2D coordinates are optimized directly.
//!
//! Both models run in two modes: a plain forward pass over matrices, and
//! a recorded forward pass on an autograd [`Tape`] whose parameters were
//! registered as leaves. The two modes execute the same kernel sequence
//! and produce identical bits.

use crate::autograd::{Tape, VarId};
use crate::loss::LOG_EPS;
use crate::numkit::{self, Mat, NumError, Result, Rng};

/// Multi-layer perceptron with rectifier activations on every hidden
/// layer and a linear output layer. The architecture is fixed at
/// construction.
#[derive(Debug, Clone)]
pub struct MlpExtractor {
    weights: Vec<Mat>,
    biases: Vec<Mat>,
}

/// Tape handles for a registered extractor, in layer order.
#[derive(Debug, Clone)]
pub struct MlpVars {
    pub weights: Vec<VarId>,
    pub biases: Vec<VarId>,
}

impl MlpExtractor {
    /// He-initialized network `input_dim -> hidden... -> output_dim`:
    /// weights drawn from `N(0, 2 / fan_in)`, biases zero.
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, rng: &mut Rng) -> MlpExtractor {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let sd = (2.0 / fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| sd * rng.normal()).collect();
            weights.push(Mat::from_vec(fan_in, fan_out, data).expect("finite init"));
            biases.push(Mat::zeros(1, fan_out));
        }
        MlpExtractor { weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("at least one layer").cols()
    }

    /// Embeds `x` (one sample per row).
    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.input_dim() {
            return Err(NumError::shape(
                "extract",
                format!("{} input columns, expected {}", x.cols(), self.input_dim()),
            ));
        }
        let layers = self.weights.len();
        let mut cur = x.clone();
        for (idx, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut a = numkit::matmul(&cur, w)?;
            for i in 0..a.rows() {
                for j in 0..a.cols() {
                    a.set(i, j, a.get(i, j) + b.get(0, j));
                }
            }
            let a = a.check_finite("extract")?;
            cur = if idx + 1 < layers { a.relu() } else { a };
        }
        Ok(cur)
    }

    /// Registers every parameter as a tape leaf.
    pub fn register(&self, tape: &mut Tape) -> MlpVars {
        let weights = self.weights.iter().map(|w| tape.leaf(w.clone())).collect();
        let biases = self.biases.iter().map(|b| tape.leaf(b.clone())).collect();
        MlpVars { weights, biases }
    }

    /// Recorded forward pass; computes the same bits as [`Self::forward`].
    pub fn forward_on_tape(&self, tape: &mut Tape, x: VarId, vars: &MlpVars) -> Result<VarId> {
        let n = tape.value(x).rows();
        let ones = tape.leaf(Mat::ones(n, 1));
        let layers = vars.weights.len();
        let mut cur = x;
        for (idx, (w, b)) in vars.weights.iter().zip(&vars.biases).enumerate() {
            let prod = tape.matmul(cur, *w)?;
            let bias = tape.matmul(ones, *b)?;
            let a = tape.add(prod, bias)?;
            cur = if idx + 1 < layers { tape.relu(a) } else { a };
        }
        Ok(cur)
    }

    /// Parameter matrices in registration order (weights then biases,
    /// layer by layer is *not* the order — all weights first, matching
    /// [`Self::register`]).
    pub fn params(&self) -> Vec<&Mat> {
        self.weights.iter().chain(self.biases.iter()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        self.weights.iter_mut().chain(self.biases.iter_mut()).collect()
    }

    /// Matching flat list of the registered variable ids.
    pub fn var_ids(vars: &MlpVars) -> Vec<VarId> {
        vars.weights.iter().chain(vars.biases.iter()).copied().collect()
    }
}

/// Linear classifier `softmax(z W + b)`.
#[derive(Debug, Clone)]
pub struct LinearClassifier {
    pub w: Mat,
    pub b: Mat,
}

/// Tape handles for a registered classifier.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierVars {
    pub w: VarId,
    pub b: VarId,
}

impl LinearClassifier {
    pub fn new(embed_dim: usize, classes: usize, rng: &mut Rng) -> LinearClassifier {
        let sd = (2.0 / embed_dim as f64).sqrt();
        let data = (0..embed_dim * classes).map(|_| sd * rng.normal()).collect();
        LinearClassifier {
            w: Mat::from_vec(embed_dim, classes, data).expect("finite init"),
            b: Mat::zeros(1, classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.w.cols()
    }

    /// Class probabilities, one distribution per row of `z`.
    pub fn forward(&self, z: &Mat) -> Result<Mat> {
        if z.cols() != self.w.rows() {
            return Err(NumError::shape(
                "classify",
                format!("{} embedding columns, classifier expects {}", z.cols(), self.w.rows()),
            ));
        }
        let mut logits = numkit::matmul(z, &self.w)?;
        for i in 0..logits.rows() {
            for j in 0..logits.cols() {
                logits.set(i, j, logits.get(i, j) + self.b.get(0, j));
            }
        }
        numkit::row_softmax(&logits.check_finite("classify")?)
    }

    /// Most probable class per row.
    pub fn predict(&self, z: &Mat) -> Result<Vec<usize>> {
        let probs = self.forward(z)?;
        Ok((0..probs.rows())
            .map(|i| {
                probs
                    .row(i)
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(j, _)| j)
                    .expect("at least one class")
            })
            .collect())
    }

    pub fn register(&self, tape: &mut Tape) -> ClassifierVars {
        ClassifierVars { w: tape.leaf(self.w.clone()), b: tape.leaf(self.b.clone()) }
    }

    /// Recorded forward pass; computes the same bits as [`Self::forward`].
    pub fn forward_on_tape(&self, tape: &mut Tape, z: VarId, vars: &ClassifierVars) -> Result<VarId> {
        let n = tape.value(z).rows();
        let ones = tape.leaf(Mat::ones(n, 1));
        let prod = tape.matmul(z, vars.w)?;
        let bias = tape.matmul(ones, vars.b)?;
        let logits = tape.add(prod, bias)?;
        tape.row_softmax(logits, false)
    }
}

/// Directly optimizable 2D coordinates, the "model" of the isolated toy
/// experiments: the embedding matrix itself is the parameter.
#[derive(Debug, Clone)]
pub struct FreeEmbeddings {
    pub z: Mat,
}

impl FreeEmbeddings {
    pub fn new(z: Mat) -> FreeEmbeddings {
        FreeEmbeddings { z }
    }
}

/// Mean negative log-likelihood of the true classes,
/// `-(1/N_L) sum_i sum_c y_ic log p_ic` with the log clamped at 1e-30.
pub fn supervised_loss(probs: &Mat, y_onehot: &Mat) -> Result<f64> {
    if probs.shape() != y_onehot.shape() {
        return Err(NumError::shape(
            "supervised_loss",
            format!("probs {:?} vs labels {:?}", probs.shape(), y_onehot.shape()),
        ));
    }
    if probs.rows() == 0 {
        return Err(NumError::arg("supervised_loss", "no labeled rows"));
    }
    let logs = probs.clamp_min(LOG_EPS).ln()?;
    let total = numkit::hadamard(y_onehot, &logs)?.sum_all();
    Ok(total * (-1.0 / probs.rows() as f64))
}

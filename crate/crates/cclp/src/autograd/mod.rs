//! Reverse-mode differentiation over dense-matrix primitives.
//!
//! A [`Tape`] records every primitive applied during a forward pass —
//! matrix product, Hadamard product, row softmax, LU solve, log, clamp,
//! sums, and a handful of structural operations — together with its
//! inputs and output. [`Tape::backward`] then walks the record in
//! reverse, applying each primitive's adjoint rule, and returns the
//! gradient of a scalar output with respect to every recorded value.
//!
//! Differentiating *through* the label-propagation solve is the point of
//! this module: for `X = A^{-1} B` the adjoints are
//!
//! ```text
//! dL/dB = A^{-T} (dL/dX)         (one more solve, with A transposed)
//! dL/dA = -(dL/dB) X'
//! ```
//!
//! so gradients reach the embeddings both directly via the graph and
//! indirectly via the propagated posteriors.
//!
//! The composite losses live in [`pipeline`]; the finite-difference
//! checker in [`check`] validates any scalar-valued function of a matrix
//! against its claimed gradient.

pub mod check;
pub mod pipeline;

use crate::numkit::{self, Mat, NumError, Result};

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(VarId, VarId),
    Transpose(VarId),
    Hadamard(VarId, VarId),
    Add(VarId, VarId),
    Scale(VarId, f64),
    RowSoftmax { arg: VarId, exclude_diag: bool },
    LuSolve { a: VarId, b: VarId },
    Log(VarId),
    ClampMin(VarId, f64),
    Recip(VarId),
    Relu(VarId),
    Sum(VarId),
    Block { arg: VarId, row0: usize, col0: usize, rows: usize, cols: usize },
    VCat(VarId, VarId),
    StopGrad(VarId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Mat,
}

/// Recording of one forward computation.
///
/// Replaying the tape reproduces every recorded value bit-for-bit, and
/// [`Tape::backward`] is a pure function of the recording, so repeated
/// backward passes are bit-identical too.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    corrupt_matmul_adjoint: bool,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    /// Number of recorded values.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Test hook: deliberately mis-scale one term of the matrix-product
    /// adjoint so gradient checks must fail. Exists to prove the checker
    /// can catch a broken rule.
    pub fn corrupt_matmul_adjoint_for_testing(&mut self, enabled: bool) {
        self.corrupt_matmul_adjoint = enabled;
    }

    /// The recorded value of `id`.
    pub fn value(&self, id: VarId) -> &Mat {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Mat) -> VarId {
        self.nodes.push(Node { op, value });
        VarId(self.nodes.len() - 1)
    }

    /// Records an input value. Constants and differentiable inputs are
    /// recorded the same way; callers simply never ask for the gradient
    /// of a constant.
    pub fn leaf(&mut self, value: Mat) -> VarId {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = numkit::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn transpose(&mut self, a: VarId) -> VarId {
        let value = self.value(a).transpose();
        self.push(Op::Transpose(a), value)
    }

    pub fn hadamard(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = numkit::hadamard(self.value(a), self.value(b))?;
        Ok(self.push(Op::Hadamard(a, b), value))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn scale(&mut self, a: VarId, factor: f64) -> Result<VarId> {
        let value = self.value(a).scale(factor)?;
        Ok(self.push(Op::Scale(a, factor), value))
    }

    pub fn row_softmax(&mut self, a: VarId, exclude_diag: bool) -> Result<VarId> {
        let value = numkit::row_softmax_with(self.value(a), exclude_diag)?;
        Ok(self.push(Op::RowSoftmax { arg: a, exclude_diag }, value))
    }

    pub fn lu_solve(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = numkit::lu_solve(self.value(a), self.value(b))?;
        Ok(self.push(Op::LuSolve { a, b }, value))
    }

    pub fn log(&mut self, a: VarId) -> Result<VarId> {
        let value = self.value(a).ln()?;
        Ok(self.push(Op::Log(a), value))
    }

    pub fn clamp_min(&mut self, a: VarId, floor: f64) -> VarId {
        let value = self.value(a).clamp_min(floor);
        self.push(Op::ClampMin(a, floor), value)
    }

    pub fn recip(&mut self, a: VarId) -> Result<VarId> {
        let value = self.value(a).recip()?;
        Ok(self.push(Op::Recip(a), value))
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        let value = self.value(a).relu();
        self.push(Op::Relu(a), value)
    }

    /// Sum of all entries as a 1x1 matrix, accumulated in row-major order.
    pub fn sum(&mut self, a: VarId) -> VarId {
        let value = Mat::from_vec(1, 1, vec![self.value(a).sum_all()]).expect("scalar");
        self.push(Op::Sum(a), value)
    }

    pub fn block(
        &mut self,
        a: VarId,
        row0: usize,
        col0: usize,
        rows: usize,
        cols: usize,
    ) -> Result<VarId> {
        let value = self.value(a).block(row0, col0, rows, cols)?;
        Ok(self.push(Op::Block { arg: a, row0, col0, rows, cols }, value))
    }

    pub fn vcat(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = self.value(a).vcat(self.value(b))?;
        Ok(self.push(Op::VCat(a, b), value))
    }

    /// Identity in the forward direction, zero in the backward direction.
    pub fn stop_grad(&mut self, a: VarId) -> VarId {
        let value = self.value(a).clone();
        self.push(Op::StopGrad(a), value)
    }

    /// Re-executes every recorded primitive from the recorded leaves and
    /// returns the recomputed values; used to verify that the recording
    /// is a faithful, bit-reproducible description of the forward pass.
    pub fn replay(&self) -> Result<Vec<Mat>> {
        let mut values: Vec<Mat> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Leaf => node.value.clone(),
                Op::MatMul(a, b) => numkit::matmul(&values[a.0], &values[b.0])?,
                Op::Transpose(a) => values[a.0].transpose(),
                Op::Hadamard(a, b) => numkit::hadamard(&values[a.0], &values[b.0])?,
                Op::Add(a, b) => values[a.0].add(&values[b.0])?,
                Op::Scale(a, f) => values[a.0].scale(*f)?,
                Op::RowSoftmax { arg, exclude_diag } => {
                    numkit::row_softmax_with(&values[arg.0], *exclude_diag)?
                }
                Op::LuSolve { a, b } => numkit::lu_solve(&values[a.0], &values[b.0])?,
                Op::Log(a) => values[a.0].ln()?,
                Op::ClampMin(a, floor) => values[a.0].clamp_min(*floor),
                Op::Recip(a) => values[a.0].recip()?,
                Op::Relu(a) => values[a.0].relu(),
                Op::Sum(a) => Mat::from_vec(1, 1, vec![values[a.0].sum_all()])?,
                Op::Block { arg, row0, col0, rows, cols } => {
                    values[arg.0].block(*row0, *col0, *rows, *cols)?
                }
                Op::VCat(a, b) => values[a.0].vcat(&values[b.0])?,
                Op::StopGrad(a) => values[a.0].clone(),
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Gradient of the scalar `output` with respect to every recorded
    /// value, by one reverse sweep over the tape.
    pub fn backward(&self, output: VarId) -> Result<Gradients> {
        let out_node = &self.nodes[output.0];
        if out_node.value.shape() != (1, 1) {
            return Err(NumError::arg(
                "backward",
                format!("output must be a 1x1 scalar, got {:?}", out_node.value.shape()),
            ));
        }
        let mut grads: Vec<Mat> = self
            .nodes
            .iter()
            .map(|n| Mat::zeros(n.value.rows(), n.value.cols()))
            .collect();
        grads[output.0].set(0, 0, 1.0);

        for idx in (0..=output.0).rev() {
            if grads[idx].data().iter().all(|v| *v == 0.0) {
                continue;
            }
            let g = grads[idx].clone();
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let mut ga = numkit::matmul(&g, &self.value(*b).transpose())?;
                    if self.corrupt_matmul_adjoint {
                        ga = ga.scale(1.0 + 1e-3)?;
                    }
                    let gb = numkit::matmul(&self.value(*a).transpose(), &g)?;
                    add_assign(&mut grads[a.0], &ga);
                    add_assign(&mut grads[b.0], &gb);
                }
                Op::Transpose(a) => {
                    add_assign(&mut grads[a.0], &g.transpose());
                }
                Op::Hadamard(a, b) => {
                    let ga = numkit::hadamard(&g, self.value(*b))?;
                    let gb = numkit::hadamard(&g, self.value(*a))?;
                    add_assign(&mut grads[a.0], &ga);
                    add_assign(&mut grads[b.0], &gb);
                }
                Op::Add(a, b) => {
                    add_assign(&mut grads[a.0], &g);
                    add_assign(&mut grads[b.0], &g);
                }
                Op::Scale(a, f) => {
                    add_assign(&mut grads[a.0], &g.scale(*f)?);
                }
                Op::RowSoftmax { arg, .. } => {
                    // ds_ij = y_ij (g_ij - sum_k g_ik y_ik); masked entries
                    // have y = 0 and receive no gradient.
                    let y = &self.nodes[idx].value;
                    let mut gs = Mat::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let mut dot = 0.0;
                        for (gv, yv) in g.row(i).iter().zip(y.row(i)) {
                            dot += gv * yv;
                        }
                        for j in 0..y.cols() {
                            gs.set(i, j, y.get(i, j) * (g.get(i, j) - dot));
                        }
                    }
                    add_assign(&mut grads[arg.0], &gs);
                }
                Op::LuSolve { a, b } => {
                    let x = &self.nodes[idx].value;
                    let gb = numkit::lu_solve(&self.value(*a).transpose(), &g)?;
                    let ga = numkit::matmul(&gb, &x.transpose())?.scale(-1.0)?;
                    add_assign(&mut grads[a.0], &ga);
                    add_assign(&mut grads[b.0], &gb);
                }
                Op::Log(a) => {
                    let x = self.value(*a);
                    let mut gl = Mat::zeros(x.rows(), x.cols());
                    for (gv, (xv, out)) in
                        g.data().iter().zip(x.data().iter().zip(gl.data_mut()))
                    {
                        *out = gv / xv;
                    }
                    add_assign(&mut grads[a.0], &gl);
                }
                Op::ClampMin(a, floor) => {
                    let x = self.value(*a);
                    let mut gc = Mat::zeros(x.rows(), x.cols());
                    for (gv, (xv, out)) in
                        g.data().iter().zip(x.data().iter().zip(gc.data_mut()))
                    {
                        *out = if *xv >= *floor { *gv } else { 0.0 };
                    }
                    add_assign(&mut grads[a.0], &gc);
                }
                Op::Recip(a) => {
                    // d(1/x)/dx = -1/x^2 = -y^2 with y the recorded output.
                    let y = &self.nodes[idx].value;
                    let mut gr = Mat::zeros(y.rows(), y.cols());
                    for (gv, (yv, out)) in
                        g.data().iter().zip(y.data().iter().zip(gr.data_mut()))
                    {
                        *out = -gv * yv * yv;
                    }
                    add_assign(&mut grads[a.0], &gr);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let mut gr = Mat::zeros(x.rows(), x.cols());
                    for (gv, (xv, out)) in
                        g.data().iter().zip(x.data().iter().zip(gr.data_mut()))
                    {
                        *out = if *xv > 0.0 { *gv } else { 0.0 };
                    }
                    add_assign(&mut grads[a.0], &gr);
                }
                Op::Sum(a) => {
                    let seed = g.get(0, 0);
                    let shape = self.value(*a).shape();
                    add_assign(&mut grads[a.0], &Mat::filled(shape.0, shape.1, seed));
                }
                Op::Block { arg, row0, col0, rows, cols } => {
                    let target = &mut grads[arg.0];
                    for i in 0..*rows {
                        for j in 0..*cols {
                            let v = target.get(row0 + i, col0 + j) + g.get(i, j);
                            target.set(row0 + i, col0 + j, v);
                        }
                    }
                }
                Op::VCat(a, b) => {
                    let top_rows = self.value(*a).rows();
                    let cols = g.cols();
                    let top = g.block(0, 0, top_rows, cols)?;
                    let bottom = g.block(top_rows, 0, g.rows() - top_rows, cols)?;
                    add_assign(&mut grads[a.0], &top);
                    add_assign(&mut grads[b.0], &bottom);
                }
                Op::StopGrad(_) => {}
            }
        }
        Ok(Gradients { grads })
    }
}

fn add_assign(target: &mut Mat, source: &Mat) {
    debug_assert_eq!(target.shape(), source.shape());
    for (t, s) in target.data_mut().iter_mut().zip(source.data()) {
        *t += s;
    }
}

/// Gradients of one scalar output with respect to every tape value.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Mat>,
}

impl Gradients {
    /// Gradient with respect to the value recorded at `id`.
    pub fn wrt(&self, id: VarId) -> &Mat {
        &self.grads[id.0]
    }
}

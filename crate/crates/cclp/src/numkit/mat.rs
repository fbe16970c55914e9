//! The `Mat` type and its kernels: product, Hadamard product, row-wise
//! softmax, and an LU solver with partial pivoting.

use super::{NumError, Result};

/// Relative pivot threshold below which a system is reported singular.
const PIVOT_RTOL: f64 = 1e-14;

/// Dense row-major matrix of `f64`.
///
/// Every public operation either returns a matrix whose entries are all
/// finite or reports an error; NaN and infinity never propagate silently.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Matrix with every entry equal to `value`.
    pub fn filled(rows: usize, cols: usize, value: f64) -> Mat {
        Mat { rows, cols, data: vec![value; rows * cols] }
    }

    /// All-ones matrix.
    pub fn ones(rows: usize, cols: usize) -> Mat {
        Mat::filled(rows, cols, 1.0)
    }

    /// n-by-n identity.
    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from a row-major buffer. The buffer length must be
    /// `rows * cols` and every entry must be finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Mat> {
        if data.len() != rows * cols {
            return Err(NumError::shape(
                "from_vec",
                format!("{}x{} needs {} entries, got {}", rows, cols, rows * cols, data.len()),
            ));
        }
        let m = Mat { rows, cols, data };
        m.check_finite("from_vec")
    }

    /// Builds a matrix from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(NumError::shape("from_rows", "ragged rows".to_string()));
        }
        let data = rows.iter().flatten().copied().collect();
        Mat::from_vec(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// (rows, cols) pair.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Row-major backing slice.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Transposed copy.
    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Entrywise sum.
    pub fn add(&self, other: &Mat) -> Result<Mat> {
        self.zip_with("add", other, |a, b| a + b)
    }

    /// Entrywise difference.
    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    /// Multiplication by a scalar.
    pub fn scale(&self, factor: f64) -> Result<Mat> {
        let data = self.data.iter().map(|v| v * factor).collect();
        Mat { rows: self.rows, cols: self.cols, data }.check_finite("scale")
    }

    /// Copy of the `rows x cols` block whose top-left corner is `(row0, col0)`.
    pub fn block(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<Mat> {
        if row0 + rows > self.rows || col0 + cols > self.cols {
            return Err(NumError::shape(
                "block",
                format!(
                    "block {}x{} at ({},{}) out of bounds for {}x{}",
                    rows, cols, row0, col0, self.rows, self.cols
                ),
            ));
        }
        let mut out = Mat::zeros(rows, cols);
        for i in 0..rows {
            let src = &self.data[(row0 + i) * self.cols + col0..(row0 + i) * self.cols + col0 + cols];
            out.row_mut(i).copy_from_slice(src);
        }
        Ok(out)
    }

    /// Stacks `self` on top of `other`.
    pub fn vcat(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.cols {
            return Err(NumError::shape(
                "vcat",
                format!("{} vs {} columns", self.cols, other.cols),
            ));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Mat { rows: self.rows + other.rows, cols: self.cols, data })
    }

    /// Largest absolute entry (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Largest absolute difference against another matrix of the same shape.
    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff: shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    fn zip_with(&self, op: &'static str, other: &Mat, f: impl Fn(f64, f64) -> f64) -> Result<Mat> {
        if self.shape() != other.shape() {
            return Err(NumError::shape(
                op,
                format!("{}x{} vs {}x{}", self.rows, self.cols, other.rows, other.cols),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Mat { rows: self.rows, cols: self.cols, data }.check_finite(op)
    }

    /// Entrywise `max(v, floor)`.
    pub(crate) fn clamp_min(&self, floor: f64) -> Mat {
        let data = self.data.iter().map(|v| v.max(floor)).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    /// Entrywise natural log; errors unless every entry is positive.
    pub(crate) fn ln(&self) -> Result<Mat> {
        let data = self.data.iter().map(|v| v.ln()).collect();
        Mat { rows: self.rows, cols: self.cols, data }.check_finite("ln")
    }

    /// Entrywise reciprocal; errors on zero entries.
    pub(crate) fn recip(&self) -> Result<Mat> {
        let data = self.data.iter().map(|v| 1.0 / v).collect();
        Mat { rows: self.rows, cols: self.cols, data }.check_finite("recip")
    }

    /// Entrywise `max(v, 0)`.
    pub(crate) fn relu(&self) -> Mat {
        let data = self.data.iter().map(|v| v.max(0.0)).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    /// Sum of all entries, accumulated left-to-right in row-major order.
    pub(crate) fn sum_all(&self) -> f64 {
        self.data.iter().sum()
    }

    pub(crate) fn check_finite(self, op: &'static str) -> Result<Mat> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(NumError::NonFinite { op })
        }
    }
}

/// Matrix product `a * b`.
///
/// Each output entry is the dot product of a row of `a` with a column of
/// `b`, accumulated over `k` in ascending order; the result is therefore
/// bit-identical to the naive triple loop.
pub fn matmul(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.cols != b.rows {
        return Err(NumError::shape(
            "matmul",
            format!("{}x{} * {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut out = Mat::zeros(a.rows, b.cols);
    // i-k-j order: cache friendly, same per-entry accumulation order as i-j-k.
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
    out.check_finite("matmul")
}

/// Elementwise (Hadamard) product.
pub fn hadamard(a: &Mat, b: &Mat) -> Result<Mat> {
    a.zip_with("hadamard", b, |x, y| x * y)
}

/// Row-wise softmax with max-subtraction.
///
/// `out[i][j] = exp(s[i][j] - max_k s[i][k]) / sum_k exp(s[i][k] - max_k s[i][k])`.
/// The per-row shift leaves the result unchanged mathematically while
/// keeping `exp` in range for arbitrarily large scores.
pub fn row_softmax(scores: &Mat) -> Result<Mat> {
    row_softmax_with(scores, false)
}

/// Row softmax that can mask out the diagonal (used when a transition
/// matrix must exclude self-loops). Masked entries come out exactly zero.
pub(crate) fn row_softmax_with(scores: &Mat, exclude_diag: bool) -> Result<Mat> {
    if !scores.data.iter().all(|v| v.is_finite()) {
        return Err(NumError::NonFinite { op: "row_softmax" });
    }
    if exclude_diag && scores.rows != scores.cols {
        return Err(NumError::shape(
            "row_softmax",
            format!("diagonal mask needs a square matrix, got {}x{}", scores.rows, scores.cols),
        ));
    }
    if exclude_diag && scores.rows == 1 {
        return Err(NumError::arg(
            "row_softmax",
            "cannot exclude the diagonal of a 1x1 matrix: the row would be empty",
        ));
    }
    let mut out = Mat::zeros(scores.rows, scores.cols);
    for i in 0..scores.rows {
        let row = scores.row(i);
        let mut max = f64::NEG_INFINITY;
        for (j, v) in row.iter().enumerate() {
            if exclude_diag && j == i {
                continue;
            }
            max = max.max(*v);
        }
        let out_row = out.row_mut(i);
        let mut sum = 0.0;
        for (j, v) in row.iter().enumerate() {
            if exclude_diag && j == i {
                continue;
            }
            let e = (v - max).exp();
            out_row[j] = e;
            sum += e;
        }
        for v in out_row.iter_mut() {
            *v /= sum;
        }
    }
    out.check_finite("row_softmax")
}

/// Solves `a * x = b` by LU decomposition with partial pivoting.
///
/// `a` must be square and `b` must have matching row count; all right-hand
/// sides are solved in one factorization. A pivot smaller than
/// `1e-14 * max|a|` reports [`NumError::Singular`] instead of continuing
/// with a meaningless division.
pub fn lu_solve(a: &Mat, b: &Mat) -> Result<Mat> {
    let n = a.rows;
    if a.cols != n {
        return Err(NumError::shape("lu_solve", format!("matrix is {}x{}", a.rows, a.cols)));
    }
    if b.rows != n {
        return Err(NumError::shape(
            "lu_solve",
            format!("rhs has {} rows, system has {}", b.rows, n),
        ));
    }
    let threshold = PIVOT_RTOL * a.max_abs().max(f64::MIN_POSITIVE);

    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        // Pick the largest remaining pivot in this column.
        let mut pivot_row = col;
        let mut pivot_abs = lu.get(col, col).abs();
        for r in col + 1..n {
            let v = lu.get(r, col).abs();
            if v > pivot_abs {
                pivot_abs = v;
                pivot_row = r;
            }
        }
        if pivot_abs < threshold {
            return Err(NumError::Singular { pivot: pivot_abs, threshold });
        }
        if pivot_row != col {
            perm.swap(col, pivot_row);
            for j in 0..n {
                let tmp = lu.get(col, j);
                lu.set(col, j, lu.get(pivot_row, j));
                lu.set(pivot_row, j, tmp);
            }
        }
        let pivot = lu.get(col, col);
        for r in col + 1..n {
            let factor = lu.get(r, col) / pivot;
            lu.set(r, col, factor);
            for j in col + 1..n {
                let v = lu.get(r, j) - factor * lu.get(col, j);
                lu.set(r, j, v);
            }
        }
    }

    // Apply the row permutation to b, then forward/back substitution.
    let mut x = Mat::zeros(n, b.cols);
    for i in 0..n {
        x.row_mut(i).copy_from_slice(b.row(perm[i]));
    }
    for col in 0..n {
        for r in col + 1..n {
            let factor = lu.get(r, col);
            for j in 0..b.cols {
                let v = x.get(r, j) - factor * x.get(col, j);
                x.set(r, j, v);
            }
        }
    }
    for col in (0..n).rev() {
        let pivot = lu.get(col, col);
        for j in 0..b.cols {
            let mut v = x.get(col, j);
            for k in col + 1..n {
                v -= lu.get(col, k) * x.get(k, j);
            }
            x.set(col, j, v / pivot);
        }
    }
    x.check_finite("lu_solve")
}

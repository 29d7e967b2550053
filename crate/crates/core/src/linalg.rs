//! Dense linear-algebra primitives shared by all trainers: Gram-matrix
//! accumulation, regularized symmetric-positive-definite solves, and the
//! flatten/outer-product identity.
//!
//! Everything here is generic over [`Scalar`]; the systems solved are small
//! (at most `max_dim * dim` per projection matrix), so the factorizations
//! are plain dense Cholesky with an LDLt fallback.

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Dense real vector. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> DenseVector<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![T::zero(); n],
        }
    }

    /// Rejects non-finite entries.
    pub fn from_vec(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite vector entry".into()));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.values, &other.values)
    }
}

impl<T> std::ops::Deref for DenseVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.values
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "dot of mismatched lengths");
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

/// Dense row-major matrix. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![T::zero(); rows * cols],
        }
    }

    /// Row-major construction; rejects shape/length mismatch and non-finite
    /// entries.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "matrix shape {}x{} does not match {} values",
                rows,
                cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn identity(n: usize) -> Self {
        Self::truncated_identity(n, n)
    }

    /// Rectangular matrix with ones on the main diagonal, zeros elsewhere.
    pub fn truncated_identity(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.values[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self * x`, output length `rows`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `self^T * x`, output length `cols`.
    pub fn matvec_transpose(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        self.matvec_transpose_into(x, &mut out);
        out
    }

    /// In-place variant of [`matvec_transpose`](Self::matvec_transpose).
    pub fn matvec_transpose_into(&self, x: &[T], out: &mut [T]) {
        assert_eq!(x.len(), self.rows, "matvec_transpose dimension mismatch");
        assert_eq!(out.len(), self.cols, "matvec_transpose output buffer");
        out.fill(T::zero());
        for r in 0..self.rows {
            let xr = x[r];
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += xr * *v;
            }
        }
    }

    pub fn frobenius_sq(&self) -> T {
        norm_sq(&self.values)
    }

    /// Row-major concatenation of all rows.
    pub fn flatten(&self) -> DenseVector<T> {
        DenseVector {
            values: self.values.clone(),
        }
    }
}

/// `flatten(left * right^T)`: element `k` is
/// `left[k / len(right)] * right[k % len(right)]`.
pub fn flatten_outer<T: Scalar>(left: &[T], right: &[T]) -> DenseVector<T> {
    let mut out = vec![T::zero(); left.len() * right.len()];
    flatten_outer_into(left, right, &mut out);
    DenseVector { values: out }
}

/// In-place variant of [`flatten_outer`] for hot loops.
pub fn flatten_outer_into<T: Scalar>(left: &[T], right: &[T], out: &mut [T]) {
    assert_eq!(out.len(), left.len() * right.len(), "flatten_outer buffer");
    for (i, l) in left.iter().enumerate() {
        let row = &mut out[i * right.len()..(i + 1) * right.len()];
        for (o, r) in row.iter_mut().zip(right) {
            *o = *l * *r;
        }
    }
}

/// Row-major reshape; inverse of [`DenseMatrix::flatten`].
///
/// Panics if `v.len() != rows * cols`.
pub fn unflatten<T: Scalar>(v: &[T], rows: usize, cols: usize) -> DenseMatrix<T> {
    assert_eq!(v.len(), rows * cols, "unflatten length mismatch");
    DenseMatrix {
        rows,
        cols,
        values: v.to_vec(),
    }
}

/// Compensated (Neumaier) accumulator for long sums.
#[derive(Debug, Clone, Copy)]
pub struct Accumulator<T> {
    sum: T,
    compensation: T,
}

impl<T: Scalar> Default for Accumulator<T> {
    fn default() -> Self {
        Self {
            sum: T::zero(),
            compensation: T::zero(),
        }
    }
}

impl<T: Scalar> Accumulator<T> {
    pub fn add(&mut self, value: T) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: Self) {
        self.add(other.sum);
        self.compensation += other.compensation;
    }

    pub fn total(&self) -> T {
        self.sum + self.compensation
    }
}

/// Per-entity normal equations: the Gram matrix `F^T F` and moment vector
/// `F^T r` of a ridge regression, accumulated one observation at a time.
///
/// Both triangles of the Gram matrix are written from the same product, so
/// symmetry is exact. Parallel users accumulate partial instances and
/// [`merge`](Self::merge) them in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations<T> {
    gram: DenseMatrix<T>,
    moment: Vec<T>,
    count: u64,
}

impl<T: Scalar> NormalEquations<T> {
    pub fn new(n: usize) -> Self {
        Self {
            gram: DenseMatrix::zeros(n, n),
            moment: vec![T::zero(); n],
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.moment.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn gram(&self) -> &DenseMatrix<T> {
        &self.gram
    }

    pub fn moment(&self) -> &[T] {
        &self.moment
    }

    /// Adds one observation with weight 1.
    ///
    /// Panics on dimension mismatch.
    pub fn accumulate(&mut self, feature: &[T], target: T) {
        self.accumulate_weighted(feature, target, T::one());
    }

    /// Adds one observation: `gram += w * f * f^T`, `moment += w * r * f`.
    ///
    /// Panics on dimension mismatch or non-positive weight.
    pub fn accumulate_weighted(&mut self, feature: &[T], target: T, weight: T) {
        let n = self.dim();
        assert_eq!(feature.len(), n, "feature length does not match gram side");
        assert!(weight > T::zero(), "observation weight must be positive");
        for i in 0..n {
            let wi = weight * feature[i];
            for j in i..n {
                let p = wi * feature[j];
                self.gram.values[i * n + j] += p;
                if j != i {
                    self.gram.values[j * n + i] += p;
                }
            }
            self.moment[i] += wi * target;
        }
        self.count += 1;
    }

    /// Elementwise addition of another accumulator of the same dimension.
    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "merge dimension mismatch");
        for (a, b) in self.gram.values.iter_mut().zip(&other.gram.values) {
            *a += *b;
        }
        for (a, b) in self.moment.iter_mut().zip(&other.moment) {
            *a += *b;
        }
        self.count += other.count;
    }

    /// Solves `(gram + reg*I) w = moment` by Cholesky factorization, falling
    /// back to LDLt if the Cholesky pivots fail, and verifies the relative
    /// residual against [`Scalar::residual_tol`] (one refinement pass is
    /// attempted before giving up).
    pub fn solve_regularized(&self, reg: T) -> Result<DenseVector<T>> {
        if reg < T::zero() {
            return Err(Error::InvalidInput(
                "regularization must be non-negative".into(),
            ));
        }
        if !self.gram.is_finite() || self.moment.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("non-finite normal equations".into()));
        }
        let n = self.dim();
        let mut a = self.gram.clone();
        for i in 0..n {
            a.values[i * n + i] += reg;
        }
        let factor = SpdFactor::compute(&a)?;
        let mut w = factor.solve(&self.moment);

        let tol = T::residual_tol();
        let m_norm = norm_sq(&self.moment).sqrt();
        let denom = if m_norm > T::zero() {
            m_norm
        } else {
            T::min_positive_value()
        };
        let mut resid = residual(&a, &w, &self.moment);
        if norm_sq(&resid).sqrt() > tol * denom {
            // one step of iterative refinement with the existing factor
            let delta = factor.solve(&resid);
            for (wi, di) in w.iter_mut().zip(&delta) {
                *wi -= *di;
            }
            resid = residual(&a, &w, &self.moment);
            if norm_sq(&resid).sqrt() > tol * denom {
                return Err(Error::Factorization(format!(
                    "residual {} exceeds tolerance after refinement",
                    norm_sq(&resid).sqrt() / denom
                )));
            }
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("non-finite solution".into()));
        }
        Ok(DenseVector { values: w })
    }
}

fn residual<T: Scalar>(a: &DenseMatrix<T>, w: &[T], b: &[T]) -> Vec<T> {
    a.matvec(w)
        .into_iter()
        .zip(b)
        .map(|(aw, bi)| aw - *bi)
        .collect()
}

enum SpdFactor<T> {
    Cholesky { lower: DenseMatrix<T> },
    Ldlt { lower: DenseMatrix<T>, diag: Vec<T> },
}

impl<T: Scalar> SpdFactor<T> {
    fn compute(a: &DenseMatrix<T>) -> Result<Self> {
        match cholesky(a) {
            Some(lower) => Ok(SpdFactor::Cholesky { lower }),
            None => {
                let (lower, diag) = ldlt(a).ok_or_else(|| {
                    Error::Factorization(
                        "matrix is not positive definite and LDLt pivots vanished".into(),
                    )
                })?;
                Ok(SpdFactor::Ldlt { lower, diag })
            }
        }
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        match self {
            SpdFactor::Cholesky { lower } => {
                let z = forward_substitute(lower, b);
                backward_substitute_transposed(lower, &z)
            }
            SpdFactor::Ldlt { lower, diag } => {
                let mut z = forward_substitute(lower, b);
                for (zi, di) in z.iter_mut().zip(diag) {
                    *zi /= *di;
                }
                backward_substitute_transposed(lower, &z)
            }
        }
    }
}

fn cholesky<T: Scalar>(a: &DenseMatrix<T>) -> Option<DenseMatrix<T>> {
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut s = a.get(j, j);
        for k in 0..j {
            s -= l.get(j, k) * l.get(j, k);
        }
        if !(s > T::zero()) || !s.is_finite() {
            return None;
        }
        let diag = s.sqrt();
        l.set(j, j, diag);
        for i in j + 1..n {
            let mut t = a.get(i, j);
            for k in 0..j {
                t -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, t / diag);
        }
    }
    Some(l)
}

fn ldlt<T: Scalar>(a: &DenseMatrix<T>) -> Option<(DenseMatrix<T>, Vec<T>)> {
    let n = a.rows();
    let mut l = DenseMatrix::identity(n);
    let mut d = vec![T::zero(); n];
    let scale = (0..n)
        .map(|i| a.get(i, i).abs())
        .fold(T::zero(), |m, v| m.max(v));
    let threshold = scale * T::epsilon() * T::from_usize(n.max(1)).unwrap();
    for j in 0..n {
        let mut dj = a.get(j, j);
        for k in 0..j {
            dj -= l.get(j, k) * l.get(j, k) * d[k];
        }
        if !dj.is_finite() || dj.abs() <= threshold {
            return None;
        }
        d[j] = dj;
        for i in j + 1..n {
            let mut t = a.get(i, j);
            for k in 0..j {
                t -= l.get(i, k) * l.get(j, k) * d[k];
            }
            l.set(i, j, t / dj);
        }
    }
    Some((l, d))
}

fn forward_substitute<T: Scalar>(l: &DenseMatrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut z = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * z[k];
        }
        z[i] = s / l.get(i, i);
    }
    z
}

fn backward_substitute_transposed<T: Scalar>(l: &DenseMatrix<T>, z: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut w = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l.get(k, i) * w[k];
        }
        w[i] = s / l.get(i, i);
    }
    w
}

//! Small dense linear algebra: a column-major matrix, Householder QR with
//! column pivoting for rank-revealing least squares, and a cyclic Jacobi
//! eigensolver for symmetric matrices.
//!
//! Everything here operates on the handful of regressor columns left after
//! fixed-effect absorption, so plain O(n k^2) algorithms are sufficient.

use crate::scalar::Scalar;

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    /// Builds a matrix from equally long columns.
    pub fn from_columns(columns: &[Vec<S>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * cols);
        for c in columns {
            assert_eq!(c.len(), rows, "ragged columns");
            data.extend_from_slice(c);
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, values: &[S]) -> Self {
        assert_eq!(values.len(), rows * cols);
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = values[i * cols + j];
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> &[S] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [S] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            for k in 0..self.cols {
                let b = other[(k, j)];
                if b == S::zero() {
                    continue;
                }
                let a = self.col(k);
                let o = out.col_mut(j);
                for i in 0..a.len() {
                    o[i] = o[i] + a[i] * b;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: S) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * c).collect() }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(S, S) -> S) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn diagonal(&self) -> Vec<S> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> S {
        self.diagonal().into_iter().fold(S::zero(), |a, b| a + b)
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Replaces the matrix by (A + A')/2.
    pub fn symmetrize(&mut self) {
        let two = S::lit(2.0);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = (self[(i, j)] + self[(j, i)]) / two;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn is_symmetric(&self, tol: S) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Row-major copy of the values.
    pub fn to_row_major(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.push(self[(i, j)]);
            }
        }
        out
    }

    /// Quadratic form g' A g.
    pub fn quad_form(&self, g: &[S]) -> S {
        let mut acc = S::zero();
        for j in 0..self.cols {
            let c = self.col(j);
            let inner = c.iter().zip(g).fold(S::zero(), |a, (&x, &y)| a + x * y);
            acc = acc + inner * g[j];
        }
        acc
    }

    pub fn convert<T: Scalar>(&self) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| T::lit(v.as_f64())).collect(),
        }
    }
}

impl<S> std::ops::Index<(usize, usize)> for Matrix<S> {
    type Output = S;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[j * self.rows + i]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for Matrix<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[j * self.rows + i]
    }
}

pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Householder QR with column pivoting, A P = Q R.
#[derive(Debug, Clone)]
pub struct PivotedQr<S> {
    qr: Matrix<S>,
    tau: Vec<S>,
    perm: Vec<usize>,
    rank: usize,
}

impl<S: Scalar> PivotedQr<S> {
    /// Factorizes `a`, stopping once the next pivot falls below
    /// `rel_tol * |R[0,0]|`.
    pub fn new(a: &Matrix<S>, rel_tol: S) -> Self {
        let (m, n) = (a.nrows(), a.ncols());
        let mut qr = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut tau = Vec::with_capacity(n.min(m));
        let mut rank = 0;
        let mut first_pivot = S::zero();

        for k in 0..n.min(m) {
            // Recompute trailing norms exactly; the column count is tiny.
            let (best, best_norm) = (k..n)
                .map(|j| (j, dot(&qr.col(j)[k..], &qr.col(j)[k..]).sqrt()))
                .fold((k, -S::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
            if k == 0 {
                first_pivot = best_norm;
            }
            if best_norm <= rel_tol * first_pivot || best_norm == S::zero() {
                break;
            }
            if best != k {
                perm.swap(k, best);
                for i in 0..m {
                    let tmp = qr[(i, k)];
                    qr[(i, k)] = qr[(i, best)];
                    qr[(i, best)] = tmp;
                }
            }

            let alpha = qr[(k, k)];
            let beta = if alpha >= S::zero() { -best_norm } else { best_norm };
            let v0 = alpha - beta;
            // v = x - beta e1, scaled so v[0] = 1.
            for i in (k + 1)..m {
                qr[(i, k)] = qr[(i, k)] / v0;
            }
            let t = (beta - alpha) / beta;
            qr[(k, k)] = beta;
            tau.push(t);

            for j in (k + 1)..n {
                let mut s = qr[(k, j)];
                for i in (k + 1)..m {
                    s = s + qr[(i, k)] * qr[(i, j)];
                }
                s = s * t;
                qr[(k, j)] = qr[(k, j)] - s;
                for i in (k + 1)..m {
                    let vik = qr[(i, k)];
                    qr[(i, j)] = qr[(i, j)] - s * vik;
                }
            }
            rank += 1;
        }
        Self { qr, tau, perm, rank }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Original indices of the columns retained, in pivot order.
    pub fn kept(&self) -> &[usize] {
        &self.perm[..self.rank]
    }

    /// Original indices of columns found linearly dependent.
    pub fn dropped(&self) -> Vec<usize> {
        let mut d = self.perm[self.rank..].to_vec();
        d.sort_unstable();
        d
    }

    fn apply_qt(&self, b: &mut [S]) {
        let m = self.qr.nrows();
        for k in 0..self.rank {
            let mut s = b[k];
            for i in (k + 1)..m {
                s = s + self.qr[(i, k)] * b[i];
            }
            s = s * self.tau[k];
            b[k] = b[k] - s;
            for i in (k + 1)..m {
                b[i] = b[i] - s * self.qr[(i, k)];
            }
        }
    }

    /// Least-squares solution; dropped columns get a zero coefficient.
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.qr.ncols();
        let mut qtb = b.to_vec();
        self.apply_qt(&mut qtb);
        let r = self.rank;
        let mut z = vec![S::zero(); r];
        for i in (0..r).rev() {
            let mut s = qtb[i];
            for j in (i + 1)..r {
                s = s - self.qr[(i, j)] * z[j];
            }
            z[i] = s / self.qr[(i, i)];
        }
        let mut x = vec![S::zero(); n];
        for (k, &col) in self.perm[..r].iter().enumerate() {
            x[col] = z[k];
        }
        x
    }

    /// (A'A)^{-1} restricted to the retained columns, ordered by ascending
    /// original column index.
    pub fn inverse_gram(&self) -> Matrix<S> {
        let r = self.rank;
        // R^{-1}, upper triangular.
        let mut rinv = Matrix::zeros(r, r);
        for j in 0..r {
            rinv[(j, j)] = S::one() / self.qr[(j, j)];
            for i in (0..j).rev() {
                let mut s = S::zero();
                for k in (i + 1)..=j {
                    s = s + self.qr[(i, k)] * rinv[(k, j)];
                }
                rinv[(i, j)] = -s / self.qr[(i, i)];
            }
        }
        let pivot_order = rinv.matmul(&rinv.transpose());
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by_key(|&k| self.perm[k]);
        let mut out = Matrix::zeros(r, r);
        for (a, &ka) in order.iter().enumerate() {
            for (b, &kb) in order.iter().enumerate() {
                out[(a, b)] = pivot_order[(ka, kb)];
            }
        }
        out.symmetrize();
        out
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the matrix whose columns are the eigenvectors.
pub fn symmetric_eigen<S: Scalar>(a: &Matrix<S>) -> (Vec<S>, Matrix<S>) {
    let n = a.nrows();
    let mut m = a.clone();
    m.symmetrize();
    let mut v = Matrix::identity(n);
    let eps = S::epsilon();
    for _sweep in 0..100 {
        let off: S = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .fold(S::zero(), |acc, (i, j)| acc + m[(i, j)] * m[(i, j)]);
        let scale: S = (0..n).fold(S::zero(), |acc, i| acc + m[(i, i)] * m[(i, i)]);
        if off <= eps * eps * scale || off == S::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == S::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (S::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (m.diagonal(), v)
}

/// Clamps negative eigenvalues to zero. Returns the repaired matrix and the
/// number of eigenvalues that were floored.
pub fn floor_eigenvalues<S: Scalar>(a: &Matrix<S>) -> (Matrix<S>, usize) {
    let (vals, vecs) = symmetric_eigen(a);
    let negative = vals.iter().filter(|&&v| v < S::zero()).count();
    if negative == 0 {
        return (a.clone(), 0);
    }
    let n = a.nrows();
    let mut out = Matrix::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        let lam = lam.max(S::zero());
        if lam == S::zero() {
            continue;
        }
        for j in 0..n {
            for i in 0..n {
                out[(i, j)] = out[(i, j)] + lam * vecs[(i, k)] * vecs[(j, k)];
            }
        }
    }
    out.symmetrize();
    (out, negative)
}

//! Dense real linear algebra for desk-scale Hessians.
//!
//! Everything here operates on explicitly stored matrices. The matrix-free
//! path lives in [`crate::estimators`].

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Relative asymmetry tolerated by routines that require a symmetric input.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// `condition_number` reports `+inf` when `σ_min < SINGULAR_RATIO · σ_max`.
pub const SINGULAR_RATIO: f64 = 1e-12;

/// Smallest `|det|` (and smallest row norm) not treated as zero.
pub const TINY: f64 = 1e-300;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Row-major dense real matrix with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Precondition(format!(
                "entry ({}, {}) is not finite",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Builds an `n x n` matrix column by column.
    pub fn from_columns(n_rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::zeros(n_rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            check_dim(n_rows, col.len())?;
            for (i, &x) in col.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        Self::new(m.rows, m.cols, m.data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_dim(self.cols, other.rows)?;
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, v.len())?;
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dim(self.rows, other.rows)?;
        check_dim(self.cols, other.cols)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// Largest `|a_ij - a_ji|`, relative to the Frobenius norm.
    pub fn relative_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        let norm = self.frobenius_norm();
        if worst == 0.0 {
            0.0
        } else {
            worst / norm
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square() && self.relative_asymmetry() <= SYMMETRY_TOL
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Result<Self> {
        self.require_square()?;
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let m = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = m;
                s[(j, i)] = m;
            }
        }
        Ok(s)
    }

    /// Rows and columns `keep` of a square matrix, in the given order.
    pub fn principal_submatrix(&self, keep: &[usize]) -> Result<Self> {
        self.require_square()?;
        let n = keep.len();
        let mut out = Self::zeros(n, n);
        for (a, &i) in keep.iter().enumerate() {
            if i >= self.rows {
                return Err(Error::Precondition(format!("index {i} out of range")));
            }
            for (b, &j) in keep.iter().enumerate() {
                out[(a, b)] = self[(i, j)];
            }
        }
        Ok(out)
    }

    pub(crate) fn require_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "matrix must be square, got {}x{}",
                self.rows, self.cols
            )))
        }
    }

    pub(crate) fn require_symmetric(&self) -> Result<()> {
        self.require_square()?;
        let asym = self.relative_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::Precondition(format!(
                "matrix must be symmetric, relative asymmetry {asym:e}"
            )));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigenvalues sorted descending; column `j` of `eigenvectors` pairs with
/// `eigenvalues[j]`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

impl EigenDecomposition {
    /// `Q · diag(f(λ)) · Qᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.eigenvalues.len();
        let q = &self.eigenvectors;
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for (k, &m) in mapped.iter().enumerate() {
                    s += q[(i, k)] * m * q[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.reconstruct_with(|l| l)
    }
}

fn off_diagonal_norm(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps over all `(p, q)` pairs until the off-diagonal Frobenius mass falls
/// below `1e-12 · ‖H‖_F`. Deterministic for a given input.
pub fn sym_eig(h: &DenseMatrix) -> Result<EigenDecomposition> {
    h.require_symmetric()?;
    let n = h.rows();
    let mut a = h.symmetrized()?;
    let mut v = DenseMatrix::identity(n);
    let threshold = JACOBI_TOL * h.frobenius_norm();

    let mut converged = off_diagonal_norm(&a) <= threshold;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence(sweeps));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- Pᵀ A P with P_pp = P_qq = c, P_pq = s, P_qp = -s.
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
        converged = off_diagonal_norm(&a) <= threshold;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            eigenvectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigenvalues only, sorted descending.
///
/// Householder reduction to tridiagonal form followed by implicit QL with
/// Wilkinson shifts. `O(n³)` with a far smaller constant than [`sym_eig`], so
/// this is what condition numbers of a few-hundred-dimensional Hessians use.
pub fn sym_eigenvalues(h: &DenseMatrix) -> Result<Vec<f64>> {
    h.require_symmetric()?;
    let n = h.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut a = h.symmetrized()?;
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];

    for i in (1..n).rev() {
        let l = i - 1;
        let mut hh = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| a[(i, k)].abs()).sum();
            if scale == 0.0 {
                e[i] = a[(i, l)];
            } else {
                for k in 0..=l {
                    a[(i, k)] /= scale;
                    hh += a[(i, k)] * a[(i, k)];
                }
                let f = a[(i, l)];
                let g = if f >= 0.0 { -hh.sqrt() } else { hh.sqrt() };
                e[i] = scale * g;
                hh -= f * g;
                a[(i, l)] = f - g;
                let mut f = 0.0;
                for j in 0..=l {
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[(j, k)] * a[(i, k)];
                    }
                    for k in (j + 1)..=l {
                        g += a[(k, j)] * a[(i, k)];
                    }
                    e[j] = g / hh;
                    f += e[j] * a[(i, j)];
                }
                let hk = f / (hh + hh);
                for j in 0..=l {
                    let f = a[(i, j)];
                    let g = e[j] - hk * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[(j, k)] -= f * e[k] + g * a[(i, k)];
                    }
                }
            }
        } else {
            e[i] = a[(i, l)];
        }
        d[i] = hh;
    }
    for (i, di) in d.iter_mut().enumerate() {
        *di = a[(i, i)];
    }

    // Implicit QL on the tridiagonal (d, e).
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence(iter));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut early_exit = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    early_exit = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if early_exit {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|x, y| y.total_cmp(x));
    Ok(d)
}

/// Singular values sorted descending.
///
/// Symmetric inputs use `|λ|`; anything else falls back to `√eig(AᵀA)`.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    a.require_square()?;
    let mut sv: Vec<f64> = if a.is_symmetric() {
        sym_eigenvalues(a)?.into_iter().map(f64::abs).collect()
    } else {
        let gram = a.transpose().matmul(a)?.symmetrized()?;
        sym_eigenvalues(&gram)?
            .into_iter()
            .map(|l| l.max(0.0).sqrt())
            .collect()
    };
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv)
}

/// `σ_max / σ_min`, or `+inf` when `σ_min < 1e-12 · σ_max`.
pub fn condition_number(a: &DenseMatrix) -> Result<f64> {
    a.require_square()?;
    if a.max_abs() == 0.0 {
        return Err(Error::DegenerateInput("zero matrix".into()));
    }
    let sv = singular_values(a)?;
    let max = sv[0];
    let min = *sv.last().expect("nonempty");
    if min < SINGULAR_RATIO * max {
        Ok(f64::INFINITY)
    } else {
        Ok(max / min)
    }
}

/// The absolute Hessian `Σ_j |λ_j| q_j q_jᵀ`.
pub fn abs_matrix(h: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(sym_eig(h)?.reconstruct_with(f64::abs))
}

/// Scales every row to unit 2-norm. Returns the row norms and the scaled matrix.
pub fn row_equilibrate(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let mut scaled = a.clone();
    let mut scales = Vec::with_capacity(a.rows());
    for i in 0..a.rows() {
        let norm = norm2(a.row(i));
        if !(norm > TINY) {
            return Err(Error::DegenerateRow { row: i });
        }
        scaled.row_mut(i).iter_mut().for_each(|x| *x /= norm);
        scales.push(norm);
    }
    Ok((scales, scaled))
}

/// `ln|det A|` and the sign of `det A`, via LU with partial pivoting.
///
/// Returns a sign of `0.0` when a pivot is exactly zero.
pub fn log_abs_det(a: &DenseMatrix) -> Result<(f64, f64)> {
    a.require_square()?;
    let n = a.rows();
    let mut lu = a.clone();
    let mut sign = 1.0;
    let mut log_det = 0.0;
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| lu[(i, col)].abs().total_cmp(&lu[(j, col)].abs()))
            .expect("nonempty range");
        let pivot = lu[(pivot_row, col)];
        if pivot == 0.0 {
            return Ok((0.0, f64::NEG_INFINITY));
        }
        if pivot_row != col {
            for k in 0..n {
                let tmp = lu[(col, k)];
                lu[(col, k)] = lu[(pivot_row, k)];
                lu[(pivot_row, k)] = tmp;
            }
            sign = -sign;
        }
        sign *= pivot.signum();
        log_det += pivot.abs().ln();
        for i in (col + 1)..n {
            let factor = lu[(i, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                lu[(i, k)] -= factor * lu[(col, k)];
            }
        }
    }
    Ok((sign, log_det))
}

pub fn determinant(a: &DenseMatrix) -> Result<f64> {
    let (sign, log_det) = log_abs_det(a)?;
    Ok(sign * log_det.exp())
}

/// Upper bound `2/|det H| · (‖H‖_F/√N)^N` on the condition number.
///
/// Evaluated in log space so moderate `N` does not overflow.
pub fn guggenheimer_bound(h: &DenseMatrix) -> Result<f64> {
    h.require_square()?;
    let n = h.rows() as f64;
    let (sign, log_det) = log_abs_det(h)?;
    if sign == 0.0 || log_det < TINY.ln() {
        return Err(Error::Singular);
    }
    let log_bound = 2f64.ln() - log_det + n * (h.frobenius_norm() / n.sqrt()).ln();
    Ok(log_bound.exp())
}

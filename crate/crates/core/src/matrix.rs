//! Dense real symmetric matrices and the small set of linear-algebra
//! primitives the rest of the crate is built on.
//!
//! Every density matrix, overlap matrix, observable and Hamiltonian in this
//! crate is a [`DenseSymMatrix`]. Symmetry is enforced when a matrix is built
//! by averaging `(A + Aᵀ)/2`; the deviation that was removed is kept so callers
//! can inspect how asymmetric their input really was.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// Relative tolerance used by [`DenseSymMatrix::from_row_major`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Jacobi sweeps stop once the off-diagonal Frobenius mass falls below this
/// fraction of the full Frobenius norm.
pub const EIGEN_TOLERANCE: f64 = 1e-12;

const MAX_JACOBI_SWEEPS: usize = 100;

/// Smallest eigenvalue accepted by [`fractional_power`].
pub const POSITIVE_DEFINITE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymMatrix {
    dim: usize,
    data: Vec<f64>,
    asymmetry: f64,
}

impl DenseSymMatrix {
    /// Builds a matrix from row-major entries, rejecting anything further from
    /// symmetric than `1e-12·max(1, |a_ij|)`.
    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        Self::from_row_major_with_tolerance(dim, entries, SYMMETRY_TOLERANCE)
    }

    pub fn from_row_major_with_tolerance(dim: usize, entries: Vec<f64>, tol: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMatrix("dimension must be at least 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries for dimension {dim}, found {}",
                dim * dim,
                entries.len()
            )));
        }
        if let Some(pos) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite entry at ({}, {})",
                pos / dim,
                pos % dim
            )));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let a = entries[i * dim + j];
                let b = entries[j * dim + i];
                let dev = (a - b).abs();
                if dev > tol * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::Asymmetric {
                        row: i,
                        col: j,
                        deviation: dev,
                    });
                }
            }
        }
        Ok(Self::symmetrized(dim, entries))
    }

    /// Averages `entries` with its transpose without any tolerance check.
    pub(crate) fn symmetrized(dim: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        let mut asymmetry = 0.0f64;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let a = data[i * dim + j];
                let b = data[j * dim + i];
                asymmetry = asymmetry.max((a - b).abs());
                let m = 0.5 * (a + b);
                data[i * dim + j] = m;
                data[j * dim + i] = m;
            }
        }
        Self {
            dim,
            data,
            asymmetry,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be at least 1");
        Self {
            dim,
            data: vec![0.0; dim * dim],
            asymmetry: 0.0,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * dim + i] = d;
        }
        m
    }

    /// Builds `f(i, j)` for `i <= j` and mirrors it.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    /// Outer-product sum `Σ_k w_k v_k v_kᵀ`.
    pub fn from_weighted_outer(dim: usize, vectors: &[(f64, &[f64])]) -> Self {
        let mut m = Self::zeros(dim);
        for (w, v) in vectors {
            assert_eq!(v.len(), dim);
            for i in 0..dim {
                for j in 0..dim {
                    m.data[i * dim + j] += w * v[i] * v[j];
                }
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Largest `|A[i][j] − A[j][i]|` removed when the matrix was symmetrized.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// ‖self − other‖_F.
    pub fn distance(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| x * factor).collect(),
            asymmetry: 0.0,
        }
    }

    /// `self += factor · other`.
    pub fn add_scaled(&mut self, factor: f64, other: &Self) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    /// General row-major product `self · other`. The result is generally not
    /// symmetric, so it is returned as a plain square matrix.
    pub fn product(&self, other: &Self) -> Square {
        assert_eq!(self.dim, other.dim);
        Square::from_sym(self).mul(&Square::from_sym(other))
    }

    pub fn square(&self) -> Self {
        self.product(self).into_symmetric()
    }

    /// `self · middle · self`, symmetric whenever both factors are.
    pub fn sandwich(&self, middle: &Self) -> Self {
        assert_eq!(self.dim, middle.dim);
        let outer = Square::from_sym(self);
        outer
            .mul(&Square::from_sym(middle))
            .mul(&outer)
            .into_symmetric()
    }

    /// Copies the sub-block on `indices × indices`.
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let k = indices.len();
        let mut data = Vec::with_capacity(k * k);
        for &i in indices {
            for &j in indices {
                data.push(self.get(i, j));
            }
        }
        Self {
            dim: k,
            data,
            asymmetry: 0.0,
        }
    }

    /// Places `self` at `indices × indices` inside a zero matrix of size `full_dim`.
    pub fn scatter(&self, indices: &[usize], full_dim: usize) -> Result<Self> {
        if indices.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: indices.len(),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= full_dim) {
            return Err(Error::invalid(format!(
                "index {bad} out of range for dimension {full_dim}"
            )));
        }
        let mut out = Self::zeros(full_dim);
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                out.data[i * full_dim + j] = self.get(a, b);
            }
        }
        Ok(out)
    }

    /// `self · v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `vᵀ · self · v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.apply(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }
}

impl Add for &DenseSymMatrix {
    type Output = DenseSymMatrix;
    fn add(self, rhs: &DenseSymMatrix) -> DenseSymMatrix {
        let mut out = self.clone();
        out.add_scaled(1.0, rhs);
        out.asymmetry = 0.0;
        out
    }
}

impl Sub for &DenseSymMatrix {
    type Output = DenseSymMatrix;
    fn sub(self, rhs: &DenseSymMatrix) -> DenseSymMatrix {
        let mut out = self.clone();
        out.add_scaled(-1.0, rhs);
        out.asymmetry = 0.0;
        out
    }
}

impl Mul<f64> for &DenseSymMatrix {
    type Output = DenseSymMatrix;
    fn mul(self, rhs: f64) -> DenseSymMatrix {
        self.scale(rhs)
    }
}

/// General square matrix, row-major. Used for intermediate products whose
/// symmetry is not guaranteed (e.g. `P′²PP′`).
#[derive(Debug, Clone, PartialEq)]
pub struct Square {
    dim: usize,
    data: Vec<f64>,
}

impl Square {
    pub fn from_sym(m: &DenseSymMatrix) -> Self {
        Self {
            dim: m.dim,
            data: m.data.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn mul(&self, other: &Square) -> Square {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Square { dim: n, data: out }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn into_symmetric(self) -> DenseSymMatrix {
        DenseSymMatrix::symmetrized(self.dim, self.data)
    }
}

/// Ascending eigenvalues and column-orthonormal eigenvectors of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Row-major `dim × dim`; column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Vec<f64>,
    pub sweeps: usize,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| self.eigenvectors[i * n + k]).collect()
    }

    /// `Q · diag(g(λ)) · Qᵀ`.
    pub fn reconstruct_with(&self, g: impl Fn(f64) -> f64) -> DenseSymMatrix {
        let n = self.dim();
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| g(l)).collect();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for (k, w) in mapped.iter().enumerate() {
                    s += self.eigenvectors[i * n + k] * w * self.eigenvectors[j * n + k];
                }
                data[i * n + j] = s;
                data[j * n + i] = s;
            }
        }
        DenseSymMatrix::symmetrized(n, data)
    }

    pub fn reconstruct(&self) -> DenseSymMatrix {
        self.reconstruct_with(|l| l)
    }
}

/// Cyclic Jacobi eigendecomposition.
pub fn sym_eigendecompose(a: &DenseSymMatrix) -> Result<EigenDecomposition> {
    let n = a.dim;
    let mut m = a.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm = a.frobenius_norm();
    let off_norm = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off = off_norm(&m);
        if off <= EIGEN_TOLERANCE * norm || off == 0.0 {
            break;
        }
        if sweeps >= MAX_JACOBI_SWEEPS {
            return Err(Error::EigenNonConvergence {
                sweeps,
                off_norm: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                m[p * n + p] = app - t * apq;
                m[q * n + q] = aqq + t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = m[r * n + p];
                    let arq = m[r * n + q];
                    let new_rp = c * arp - s * arq;
                    let new_rq = s * arp + c * arq;
                    m[r * n + p] = new_rp;
                    m[p * n + r] = new_rp;
                    m[r * n + q] = new_rq;
                    m[q * n + r] = new_rq;
                }
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = c * vrp - s * vrq;
                    v[r * n + q] = s * vrp + c * vrq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[x * n + x].total_cmp(&m[y * n + y]));
    let eigenvalues = order.iter().map(|&k| m[k * n + k]).collect();
    let mut eigenvectors = vec![0.0; n * n];
    for (new_k, &old_k) in order.iter().enumerate() {
        for i in 0..n {
            eigenvectors[i * n + new_k] = v[i * n + old_k];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
        sweeps,
    })
}

/// `S^{±1/2}` through the eigendecomposition of a positive-definite `S`.
pub fn fractional_power(s: &DenseSymMatrix, exponent: f64) -> Result<DenseSymMatrix> {
    if exponent != 0.5 && exponent != -0.5 {
        return Err(Error::invalid(format!(
            "fractional power exponent must be +1/2 or -1/2, got {exponent}"
        )));
    }
    let eig = sym_eigendecompose(s)?;
    if let Some(&bad) = eig
        .eigenvalues
        .iter()
        .find(|&&l| l <= POSITIVE_DEFINITE_FLOOR)
    {
        return Err(Error::SingularOverlap { eigenvalue: bad });
    }
    Ok(eig.reconstruct_with(|l| l.powf(exponent)))
}

/// `tr(A·B) = Σ_ij A[i][j]·B[j][i]`.
pub fn trace_product(a: &DenseSymMatrix, b: &DenseSymMatrix) -> Result<f64> {
    a.check_same_dim(b)?;
    Ok(trace_product_unchecked(a, b))
}

pub(crate) fn trace_product_unchecked(a: &DenseSymMatrix, b: &DenseSymMatrix) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// `‖P² − P‖_F`.
pub fn idempotency_residual(p: &DenseSymMatrix) -> f64 {
    let p2 = p.square();
    p2.distance(p)
}

//! Small complex linear-algebra helpers used across the crate.
//!
//! The matrices here are tiny (`N x N` for `N` modes), so everything is
//! dimensioned dynamically and backed by `nalgebra` decompositions where a
//! factorization is needed.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use crate::error::{Error, Result};

/// A dense complex matrix stored row-major, expected (and in places
/// verified) to be hermitean.
#[derive(Debug, Clone, PartialEq)]
pub struct HermMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl HermMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    /// Builds from row-major data; the length must be `dim * dim`.
    pub fn from_data(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    /// The outer product `M_{ij} = conj(v_i) v_j`, hermitean and rank one.
    pub fn conj_outer(v: &[Complex64]) -> Self {
        let dim = v.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = v[i].conj() * v[j];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.entry(i, i)).sum()
    }

    /// Largest deviation from hermiticity, `max |M_{ij} - conj(M_{ji})|`.
    pub fn hermiticity_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                worst = worst.max((self.entry(i, j) - self.entry(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.entry(i, j) * v[j]).sum())
            .collect()
    }

    fn to_na(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(i, j))
    }

    /// Real eigenvalues, sorted by decreasing magnitude.
    ///
    /// The matrix is symmetrized first so that tiny hermiticity violations
    /// from rounding cannot push the decomposition off the real axis.
    pub fn eigenvalues_desc(&self) -> Vec<f64> {
        let m = self.to_na();
        let sym = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let mut vals: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().cloned().collect();
        vals.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
        vals
    }
}

/// The unitary `exp(-i tau A)` for hermitean `A`, computed through the
/// symmetric eigendecomposition so the result is unitary to rounding.
pub fn unitary_flow_matrix(a: &HermMatrix, tau: f64) -> Result<Vec<Vec<Complex64>>> {
    if a.hermiticity_residual() > 1e-12 {
        return Err(Error::InvalidFlow(format!(
            "generator matrix is not hermitean (residual {:.3e})",
            a.hermiticity_residual()
        )));
    }
    let m = a.to_na();
    let sym = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let se = sym.symmetric_eigen();
    let phases = DVector::from_iterator(
        a.dim(),
        se.eigenvalues.iter().map(|&l| Complex64::from_polar(1.0, -tau * l)),
    );
    let u = &se.eigenvectors * DMatrix::from_diagonal(&phases) * se.eigenvectors.adjoint();
    Ok((0..a.dim())
        .map(|i| (0..a.dim()).map(|j| u[(i, j)]).collect())
        .collect())
}

/// Applies a dense square matrix (as rows) to a vector.
pub fn mat_apply(rows: &[Vec<Complex64>], v: &[Complex64]) -> Vec<Complex64> {
    rows.iter()
        .map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum())
        .collect()
}

// ---------------------------------------------------------------------------
// 2x2 complex matrices and the spin-1/2 building blocks
// ---------------------------------------------------------------------------

/// A 2x2 complex matrix, enough for spinor rotations and boosts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[Complex64; 2]; 2]);

impl Mat2 {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Mat2([[one, zero], [zero, one]])
    }

    pub fn mul(&self, other: &Mat2) -> Mat2 {
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = self.0[i][0] * other.0[0][j] + self.0[i][1] * other.0[1][j];
            }
        }
        Mat2(out)
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        vec![
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    pub fn scale(&self, s: Complex64) -> Mat2 {
        let mut out = self.0;
        for row in &mut out {
            for e in row {
                *e *= s;
            }
        }
        Mat2(out)
    }

    pub fn add(&self, other: &Mat2) -> Mat2 {
        let mut out = self.0;
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] += other.0[i][j];
            }
        }
        Mat2(out)
    }

    /// Largest componentwise deviation from another matrix.
    pub fn max_dev(&self, other: &Mat2) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        worst
    }
}

/// The Pauli matrix `sigma_k`, `k = 1, 2, 3`.
pub fn pauli(k: usize) -> Mat2 {
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match k {
        1 => Mat2([[zero, one], [one, zero]]),
        2 => Mat2([[zero, -i], [i, zero]]),
        3 => Mat2([[one, zero], [zero, -one]]),
        _ => panic!("pauli index must be 1, 2 or 3"),
    }
}

/// `n . sigma` for a real 3-vector `n`.
pub fn dot_sigma(n: [f64; 3]) -> Mat2 {
    let mut out = Mat2([[Complex64::new(0.0, 0.0); 2]; 2]);
    for (k, &nk) in n.iter().enumerate() {
        out = out.add(&pauli(k + 1).scale(Complex64::new(nk, 0.0)));
    }
    out
}

/// The spinor rotation `cos(tau/2) 1 - i sin(tau/2) n.sigma`.
pub fn spinor_rotation(n: [f64; 3], tau: f64) -> Mat2 {
    let half = 0.5 * tau;
    Mat2::identity()
        .scale(Complex64::new(half.cos(), 0.0))
        .add(&dot_sigma(n).scale(Complex64::new(0.0, -half.sin())))
}

/// The boost `cosh(gamma/2) 1 + sinh(gamma/2) nu.sigma`.
pub fn spinor_boost(nu: [f64; 3], gamma: f64) -> Mat2 {
    let half = 0.5 * gamma;
    Mat2::identity()
        .scale(Complex64::new(half.cosh(), 0.0))
        .add(&dot_sigma(nu).scale(Complex64::new(half.sinh(), 0.0)))
}

// ---------------------------------------------------------------------------
// Real 3-vector geometry
// ---------------------------------------------------------------------------

pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

pub fn normalize3(a: [f64; 3]) -> Result<[f64; 3]> {
    let n = norm3(a);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Degenerate("cannot normalize a zero 3-vector".into()));
    }
    Ok([a[0] / n, a[1] / n, a[2] / n])
}

/// Right-handed rotation of `v` by `angle` about the unit axis `n`.
pub fn rotate3(v: [f64; 3], n: [f64; 3], angle: f64) -> [f64; 3] {
    let c = angle.cos();
    let s = angle.sin();
    let nxv = cross3(n, v);
    let ndv = dot3(n, v);
    [
        c * v[0] + s * nxv[0] + (1.0 - c) * n[0] * ndv,
        c * v[1] + s * nxv[1] + (1.0 - c) * n[1] * ndv,
        c * v[2] + s * nxv[2] + (1.0 - c) * n[2] * ndv,
    ]
}

// ---------------------------------------------------------------------------
// Regularized complex least squares
// ---------------------------------------------------------------------------

/// Solves `min_c ||D c - rhs||` over complex coefficients with a small ridge
/// term, returning `(coefficients, residual_norm, rhs_norm)`.
///
/// The ridge keeps the normal equations positive definite when dictionary
/// columns are linearly dependent, which happens by construction when a
/// subsystem's invariants coincide with a subset of the plain ones.
pub fn ridge_lstsq(
    columns: &[Vec<Complex64>],
    rhs: &[Complex64],
    lambda: f64,
) -> Result<(Vec<Complex64>, f64, f64)> {
    let ncols = columns.len();
    let nrows = rhs.len();
    if ncols == 0 || nrows == 0 {
        return Err(Error::Degenerate("empty least-squares system".into()));
    }
    for col in columns {
        if col.len() != nrows {
            return Err(Error::DimensionMismatch {
                expected: nrows,
                got: col.len(),
            });
        }
    }
    let d = DMatrix::from_fn(nrows, ncols, |i, j| columns[j][i]);
    let b = DVector::from_iterator(nrows, rhs.iter().cloned());
    let mut gram = d.adjoint() * &d;
    for k in 0..ncols {
        gram[(k, k)] += Complex64::new(lambda, 0.0);
    }
    let rhs_proj = d.adjoint() * &b;
    let chol = Cholesky::new(gram)
        .ok_or_else(|| Error::Degenerate("normal equations not positive definite".into()))?;
    let coeffs = chol.solve(&rhs_proj);
    let residual = (&d * &coeffs - &b).norm();
    Ok((coeffs.iter().cloned().collect(), residual, b.norm()))
}

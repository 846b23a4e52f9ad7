//! Conserved quantities of a commensurate oscillator.
//!
//! Besides the energy and the actions, an m-oscillator carries the complex
//! polynomial invariants `K_{nn'} = alpha_n^{m_n} conj(alpha_{n'})^{m_{n'}}`,
//! the relative angles `chi_{nn'} = m_n phi_n - m_{n'} phi_{n'}`, and the
//! sesquilinear matrix `J_{nn'} = conj(beta_n) beta_{n'}` built from the
//! reduced variables. The matrix is an outer product, hence hermitean,
//! positive semidefinite and of rank one; for two modes that is exactly the
//! null-cone identity `J_0^2 = J_1^2 + J_2^2 + J_3^2` of the equivalent
//! four-vector.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::HermMatrix;
use crate::space::{FrequencySignature, PhasePoint, ReducedPoint};
use crate::wrap_angle;

/// Total energy `E = omega * sum_n I_n / m_n`.
pub fn hamiltonian(x: &PhasePoint, sig: &FrequencySignature) -> Result<f64> {
    sig.check_dim(x.dim())?;
    Ok(sig.omega()
        * x.alpha()
            .iter()
            .zip(sig.divisors())
            .map(|(a, &m)| a.norm_sqr() / m as f64)
            .sum::<f64>())
}

/// The polynomial invariant `K_{nn'} = alpha_n^{m_n} conj(alpha_{n'})^{m_{n'}}`
/// for a pair of distinct modes (zero-based indices).
pub fn k_invariant(
    x: &PhasePoint,
    sig: &FrequencySignature,
    n: usize,
    nprime: usize,
) -> Result<Complex64> {
    sig.check_dim(x.dim())?;
    for &idx in &[n, nprime] {
        if idx >= x.dim() {
            return Err(Error::IndexOutOfRange {
                index: idx,
                dim: x.dim(),
            });
        }
    }
    if n == nprime {
        return Err(Error::Degenerate(
            "the polynomial invariant couples two distinct modes".into(),
        ));
    }
    let a = x.alpha()[n].powu(sig.divisor(n) as u32);
    let b = x.alpha()[nprime].conj().powu(sig.divisor(nprime) as u32);
    Ok(a * b)
}

/// The strictly-upper-triangular table of relative angles
/// `chi_{nn'} = (m_n phi_n - m_{n'} phi_{n'}) mod 2 pi`, `n < n'`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelAngleSet {
    dim: usize,
    chi: Vec<f64>, // packed rows of the strict upper triangle
}

impl RelAngleSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn pack_index(&self, n: usize, nprime: usize) -> usize {
        debug_assert!(n < nprime && nprime < self.dim);
        // offset of row n in the packed strict upper triangle
        let row_start = n * self.dim - n * (n + 1) / 2;
        row_start + (nprime - n - 1)
    }

    /// `chi_{nn'}` for `n < n'`.
    pub fn chi(&self, n: usize, nprime: usize) -> f64 {
        self.chi[self.pack_index(n, nprime)]
    }

    /// `chi` for any index order, using `chi_{n'n} = (2 pi - chi_{nn'}) mod 2 pi`.
    pub fn chi_any(&self, n: usize, nprime: usize) -> f64 {
        if n < nprime {
            self.chi(n, nprime)
        } else {
            wrap_angle(std::f64::consts::TAU - self.chi(nprime, n))
        }
    }

    /// Worst triple-sum residual `chi_ab + chi_bc + chi_ca mod 2 pi`,
    /// measured as a distance to zero on the circle.
    pub fn cocycle_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..self.dim {
            for b in 0..self.dim {
                for c in 0..self.dim {
                    if a == b || b == c || a == c {
                        continue;
                    }
                    let s = wrap_angle(self.chi_any(a, b) + self.chi_any(b, c) + self.chi_any(c, a));
                    worst = worst.max(s.min(std::f64::consts::TAU - s));
                }
            }
        }
        worst
    }
}

/// Computes all relative angles; every mode must carry positive action.
pub fn rel_angles(x: &PhasePoint, sig: &FrequencySignature) -> Result<RelAngleSet> {
    sig.check_dim(x.dim())?;
    let dim = x.dim();
    let mut scaled = Vec::with_capacity(dim);
    for n in 0..dim {
        let phi = x.angle(n).ok_or(Error::ZeroAction { index: n })?;
        scaled.push(sig.divisor(n) as f64 * phi);
    }
    let mut chi = Vec::with_capacity(dim * (dim - 1) / 2);
    for n in 0..dim {
        for nprime in (n + 1)..dim {
            chi.push(wrap_angle(scaled[n] - scaled[nprime]));
        }
    }
    Ok(RelAngleSet { dim, chi })
}

/// The full set of sesquilinear invariants of a reduced point.
///
/// `jmat` is the matrix `J_{nn'} = conj(beta_n) beta_{n'}` and
/// `j0 = trace(jmat) / 2`. For two modes the equivalent real four-vector
/// `(J_0, J_1, J_2, J_3)` is exposed as well.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantSet {
    j0: f64,
    jmat: HermMatrix,
    jvec: Option<[f64; 3]>,
}

impl InvariantSet {
    /// Invariants of a reduced point.
    pub fn from_reduced(b: &ReducedPoint) -> Self {
        let jmat = HermMatrix::conj_outer(b.beta());
        Self::assemble(jmat)
    }

    /// Wraps a hand-built hermitean matrix (useful for probing the rank
    /// test with non-physical inputs).
    pub fn from_matrix(jmat: HermMatrix) -> Result<Self> {
        if jmat.hermiticity_residual() > 1e-12 {
            return Err(Error::Degenerate(format!(
                "invariant matrix is not hermitean (residual {:.3e})",
                jmat.hermiticity_residual()
            )));
        }
        Ok(Self::assemble(jmat))
    }

    /// Builds a two-mode set directly from the four-vector components.
    pub fn from_four_vector(j0: f64, jvec: [f64; 3]) -> Self {
        let mut jmat = HermMatrix::zeros(2);
        jmat.set(0, 0, Complex64::new(j0 + jvec[2], 0.0));
        jmat.set(1, 1, Complex64::new(j0 - jvec[2], 0.0));
        jmat.set(0, 1, Complex64::new(jvec[0], jvec[1]));
        jmat.set(1, 0, Complex64::new(jvec[0], -jvec[1]));
        InvariantSet {
            j0,
            jmat,
            jvec: Some(jvec),
        }
    }

    fn assemble(jmat: HermMatrix) -> Self {
        let j0 = 0.5 * jmat.trace().re;
        let jvec = (jmat.dim() == 2).then(|| {
            let off = jmat.entry(0, 1);
            [
                off.re,
                off.im,
                0.5 * (jmat.entry(0, 0).re - jmat.entry(1, 1).re),
            ]
        });
        InvariantSet { j0, jmat, jvec }
    }

    pub fn dim(&self) -> usize {
        self.jmat.dim()
    }

    /// The energy-like invariant, half the matrix trace.
    pub fn j0(&self) -> f64 {
        self.j0
    }

    pub fn jmat(&self) -> &HermMatrix {
        &self.jmat
    }

    /// The real 3-vector part; only present for two modes.
    pub fn jvec(&self) -> Option<[f64; 3]> {
        self.jvec
    }

    /// Largest componentwise deviation from another set.
    pub fn max_dev(&self, other: &InvariantSet) -> f64 {
        let mut worst = (self.j0 - other.j0).abs();
        if self.dim() == other.dim() {
            for i in 0..self.dim() {
                for j in 0..self.dim() {
                    worst = worst.max((self.jmat.entry(i, j) - other.jmat.entry(i, j)).norm());
                }
            }
        } else {
            worst = f64::INFINITY;
        }
        worst
    }
}

/// How far an invariant set is from the physical rank-one stratum.
///
/// For two modes this is the null-cone defect `|J_0^2 - |Jvec|^2|`; in
/// general it is the magnitude of the second-largest eigenvalue of the
/// invariant matrix, which vanishes exactly on outer products.
pub fn cone_residual(inv: &InvariantSet) -> f64 {
    if let Some(jv) = inv.jvec() {
        let j2 = jv[0] * jv[0] + jv[1] * jv[1] + jv[2] * jv[2];
        (inv.j0() * inv.j0() - j2).abs()
    } else {
        let vals = inv.jmat().eigenvalues_desc();
        vals.get(1).map(|v| v.abs()).unwrap_or(0.0)
    }
}

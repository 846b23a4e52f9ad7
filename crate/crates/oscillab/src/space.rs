//! Phase space, reduced phase space, and the maps between them.
//!
//! A point of the `2N`-dimensional phase space is held as a vector of
//! complex mode amplitudes `alpha_n = (q_n + i p_n) / sqrt(2)`, from which
//! the Cartesian pair `(q, p)` and the action-angle pair `(I, phi)` are
//! derived views. The reduction map sends `alpha` to
//! `beta_n = sqrt(I_n / m_n) * exp(i m_n phi_n)`; it is many-to-one, with
//! the discrete ambiguity group `C_{m_1} x ... x C_{m_N}` identifying the
//! preimages of each reduced point.

use num_complex::Complex64;
use num_integer::Integer;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::wrap_angle;

/// The integer frequency divisors `m` and base angular frequency `omega`
/// defining a commensurate oscillator: mode `n` oscillates at `omega / m_n`.
///
/// The constructor removes any overall common divisor of `m`, so downstream
/// code may assume `gcd(m) = 1`. Divisors shared by *subsets* of the modes
/// are kept; they drive the classification of non-canonical oscillators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencySignature {
    m: Vec<u64>,
    omega: f64,
}

impl FrequencySignature {
    /// Builds a signature from raw divisors, dividing out their overall gcd.
    pub fn new(m_raw: &[u64], omega: f64) -> Result<Self> {
        if m_raw.is_empty() {
            return Err(Error::InvalidSignature("empty divisor vector".into()));
        }
        if let Some(&bad) = m_raw.iter().find(|&&v| v == 0) {
            return Err(Error::InvalidSignature(format!(
                "divisors must be positive, got {bad}"
            )));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidSignature(format!(
                "omega must be positive and finite, got {omega}"
            )));
        }
        let g = m_raw.iter().fold(0u64, |acc, &v| acc.gcd(&v));
        let m = m_raw.iter().map(|&v| v / g).collect();
        Ok(Self { m, omega })
    }

    /// Number of modes `N`.
    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// The normalized divisor vector.
    pub fn divisors(&self) -> &[u64] {
        &self.m
    }

    /// Divisor of a single mode.
    pub fn divisor(&self, n: usize) -> u64 {
        self.m[n]
    }

    /// Base angular frequency.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Frequency of mode `n`, `omega / m_n`.
    pub fn mode_frequency(&self, n: usize) -> f64 {
        self.omega / self.m[n] as f64
    }

    /// Order of the ambiguity group, the product of all divisors.
    pub fn ambiguity_order(&self) -> Result<u64> {
        self.m
            .iter()
            .try_fold(1u64, |acc, &v| acc.checked_mul(v))
            .ok_or(Error::Overflow("ambiguity group order"))
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

/// A point of phase space, stored as the complex mode vector `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    alpha: Vec<Complex64>,
}

/// Cartesian and action-angle views of a phase point.
///
/// An angle is `None` when its mode carries no action; deciding whether that
/// is an error is left to the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateViews {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub actions: Vec<f64>,
    pub angles: Vec<Option<f64>>,
}

impl PhasePoint {
    /// Wraps a complex amplitude vector; every entry must be finite.
    pub fn new(alpha: Vec<Complex64>) -> Result<Self> {
        if let Some(idx) = alpha.iter().position(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::InvalidSignature(format!(
                "non-finite amplitude at mode {idx}"
            )));
        }
        Ok(Self { alpha })
    }

    /// Builds a point from Cartesian coordinates, `alpha = (q + i p)/sqrt(2)`.
    pub fn from_cartesian(q: &[f64], p: &[f64]) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: q.len(),
                got: p.len(),
            });
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::new(
            q.iter()
                .zip(p)
                .map(|(&qi, &pi)| Complex64::new(qi * s, pi * s))
                .collect(),
        )
    }

    /// Builds a point from actions and angles, `alpha = sqrt(I) e^{i phi}`.
    pub fn from_action_angle(actions: &[f64], angles: &[f64]) -> Result<Self> {
        if actions.len() != angles.len() {
            return Err(Error::DimensionMismatch {
                expected: actions.len(),
                got: angles.len(),
            });
        }
        if let Some(idx) = actions.iter().position(|&i| i < 0.0) {
            return Err(Error::InvalidSignature(format!(
                "negative action at mode {idx}"
            )));
        }
        Self::new(
            actions
                .iter()
                .zip(angles)
                .map(|(&i, &phi)| Complex64::from_polar(i.sqrt(), phi))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[Complex64] {
        &self.alpha
    }

    /// Action of mode `n`, `I_n = |alpha_n|^2`.
    pub fn action(&self, n: usize) -> f64 {
        self.alpha[n].norm_sqr()
    }

    /// Angle of mode `n` in `[0, 2*pi)`, or `None` at zero action.
    pub fn angle(&self, n: usize) -> Option<f64> {
        if self.action(n) == 0.0 {
            None
        } else {
            Some(wrap_angle(self.alpha[n].arg()))
        }
    }

    /// All coordinate views at once.
    pub fn views(&self) -> CoordinateViews {
        let s = std::f64::consts::SQRT_2;
        CoordinateViews {
            q: self.alpha.iter().map(|a| s * a.re).collect(),
            p: self.alpha.iter().map(|a| s * a.im).collect(),
            actions: (0..self.dim()).map(|n| self.action(n)).collect(),
            angles: (0..self.dim()).map(|n| self.angle(n)).collect(),
        }
    }
}

/// A point of the reduced phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedPoint {
    beta: Vec<Complex64>,
}

impl ReducedPoint {
    pub fn new(beta: Vec<Complex64>) -> Result<Self> {
        if let Some(idx) = beta.iter().position(|b| !b.re.is_finite() || !b.im.is_finite()) {
            return Err(Error::InvalidSignature(format!(
                "non-finite reduced amplitude at mode {idx}"
            )));
        }
        Ok(Self { beta })
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[Complex64] {
        &self.beta
    }

    /// Squared norm `sum_n |beta_n|^2`; twice the energy-like invariant.
    pub fn norm_sqr(&self) -> f64 {
        self.beta.iter().map(|b| b.norm_sqr()).sum()
    }
}

/// An element of the discrete ambiguity group: `r_n` is read modulo `m_n`
/// and acts on phase space by `alpha_n -> exp(-i 2 pi r_n / m_n) alpha_n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmbiguityElement {
    r: Vec<i64>,
}

impl AmbiguityElement {
    pub fn new(r: Vec<i64>) -> Self {
        Self { r }
    }

    /// The identity element in dimension `n`.
    pub fn identity(n: usize) -> Self {
        Self { r: vec![0; n] }
    }

    pub fn r(&self) -> &[i64] {
        &self.r
    }
}

/// Sends `alpha` to the reduced point
/// `beta_n = sqrt(I_n / m_n) * exp(i m_n phi_n)`.
///
/// A vanishing amplitude maps to zero, which is the continuous limit of the
/// formula along any approach direction of the modulus.
pub fn reduce(x: &PhasePoint, sig: &FrequencySignature) -> Result<ReducedPoint> {
    sig.check_dim(x.dim())?;
    let beta = x
        .alpha()
        .iter()
        .zip(sig.divisors())
        .map(|(&a, &m)| reduce_mode(a, m))
        .collect();
    ReducedPoint::new(beta)
}

/// Single-mode reduction with an arbitrary phase multiplier and divisor.
///
/// `reduce_mode_with(a, e, d)` returns `sqrt(I/d) * exp(i e phi)`; the plain
/// reduction is the case `e = d = m_n`. Divisor subsystems reuse this with
/// their own reduced exponents.
pub(crate) fn reduce_mode_with(a: Complex64, exponent: u64, divisor: u64) -> Complex64 {
    let r = a.norm();
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    // (a/|a|)^e keeps the modulus exactly 1, unlike a.powu(e)/r^e.
    let unit = a / r;
    let phase = unit.powu(exponent as u32);
    phase * (r / (divisor as f64).sqrt())
}

fn reduce_mode(a: Complex64, m: u64) -> Complex64 {
    reduce_mode_with(a, m, m)
}

/// Applies an ambiguity-group element, `alpha_n -> e^{-i 2 pi r_n / m_n} alpha_n`.
pub fn ambiguity_apply(
    x: &PhasePoint,
    sig: &FrequencySignature,
    g: &AmbiguityElement,
) -> Result<PhasePoint> {
    sig.check_dim(x.dim())?;
    if g.r().len() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: g.r().len(),
        });
    }
    let alpha = x
        .alpha()
        .iter()
        .zip(sig.divisors())
        .zip(g.r())
        .map(|((&a, &m), &r)| {
            let rm = r.rem_euclid(m as i64);
            a * Complex64::from_polar(1.0, -std::f64::consts::TAU * rm as f64 / m as f64)
        })
        .collect();
    PhasePoint::new(alpha)
}

/// The circle action on fibers of the reduced space, `beta -> e^{i gamma} beta`.
pub fn fiber_rotate(b: &ReducedPoint, gamma: f64) -> ReducedPoint {
    let phase = Complex64::from_polar(1.0, gamma);
    ReducedPoint {
        beta: b.beta().iter().map(|&v| v * phase).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn signature_normalizes_overall_gcd() {
        let s = FrequencySignature::new(&[1, 1], 1.0).unwrap();
        assert_eq!(s.divisors(), &[1, 1]);
        let s = FrequencySignature::new(&[2, 4], 1.0).unwrap();
        assert_eq!(s.divisors(), &[1, 2]);
        assert_eq!(s.omega(), 1.0);
        // pairwise divisors survive when the overall gcd is already 1
        let s = FrequencySignature::new(&[2, 6, 3], 2.0).unwrap();
        assert_eq!(s.divisors(), &[2, 6, 3]);
        assert_eq!(s.omega(), 2.0);
    }

    #[test]
    fn signature_rejects_bad_input() {
        assert!(matches!(
            FrequencySignature::new(&[], 1.0),
            Err(Error::InvalidSignature(_))
        ));
        assert!(FrequencySignature::new(&[1, 0], 1.0).is_err());
        assert!(FrequencySignature::new(&[1], 0.0).is_err());
        assert!(FrequencySignature::new(&[1], f64::NAN).is_err());
        assert!(FrequencySignature::new(&[1], f64::INFINITY).is_err());
    }

    #[test]
    fn coordinate_views_basic() {
        let x = PhasePoint::new(vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let v = x.views();
        assert_relative_eq!(v.q[0], SQRT_2, epsilon = 1e-15);
        assert_eq!(v.q[1], 0.0);
        assert_eq!(v.p, vec![0.0, 0.0]);
        assert_eq!(v.actions, vec![1.0, 0.0]);
        assert_eq!(v.angles[0], Some(0.0));
        assert_eq!(v.angles[1], None);

        let origin = PhasePoint::new(vec![c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(origin.views().angles.iter().all(|a| a.is_none()));

        let x = PhasePoint::new(vec![c(0.0, 1.0)]).unwrap();
        let v = x.views();
        assert_relative_eq!(v.q[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(v.p[0], SQRT_2, epsilon = 1e-15);
        assert_eq!(v.actions, vec![1.0]);
        assert_relative_eq!(v.angles[0].unwrap(), FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn reduce_examples() {
        let sig = FrequencySignature::new(&[1, 2], 1.0).unwrap();
        let x = PhasePoint::new(vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let b = reduce(&x, &sig).unwrap();
        assert_relative_eq!(b.beta()[0].re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(b.beta()[1].re, 0.7071067811865476, epsilon = 1e-15);
        assert_relative_eq!(b.beta()[1].im, 0.0, epsilon = 1e-15);

        // squaring the phase of i gives -1
        let x = PhasePoint::new(vec![c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        let b = reduce(&x, &sig).unwrap();
        assert_relative_eq!(b.beta()[1].re, -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert!(b.beta()[1].im.abs() < 1e-15);

        // the isotropic reduction is the identity
        let sig = FrequencySignature::new(&[1, 1], 1.0).unwrap();
        let x = PhasePoint::new(vec![c(0.3, -0.4), c(-1.1, 0.2)]).unwrap();
        let b = reduce(&x, &sig).unwrap();
        for (a, bb) in x.alpha().iter().zip(b.beta()) {
            assert_relative_eq!(a.re, bb.re, epsilon = 1e-15);
            assert_relative_eq!(a.im, bb.im, epsilon = 1e-15);
        }

        // zero amplitude reduces to zero
        let sig = FrequencySignature::new(&[1, 2], 1.0).unwrap();
        let x = PhasePoint::new(vec![c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        let b = reduce(&x, &sig).unwrap();
        assert_eq!(b.beta(), &[c(0.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn ambiguity_examples() {
        let sig = FrequencySignature::new(&[1, 2], 1.0).unwrap();
        let x = PhasePoint::new(vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap();

        let id = AmbiguityElement::identity(2);
        assert_eq!(ambiguity_apply(&x, &sig, &id).unwrap(), x);

        let g = AmbiguityElement::new(vec![0, 1]);
        let y = ambiguity_apply(&x, &sig, &g).unwrap();
        assert_relative_eq!(y.alpha()[0].re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(y.alpha()[1].re, -1.0, epsilon = 1e-15);
        assert!(y.alpha()[1].im.abs() < 1e-15);

        // applying the order-2 element twice is the identity
        let z = ambiguity_apply(&y, &sig, &g).unwrap();
        for (a, b) in z.alpha().iter().zip(x.alpha()) {
            assert_relative_eq!(a.re, b.re, epsilon = 1e-14);
            assert!((a.im - b.im).abs() < 1e-14);
        }

        // r_n = m_n acts trivially mode by mode
        let g = AmbiguityElement::new(vec![1, 2]);
        let z = ambiguity_apply(&x, &sig, &g).unwrap();
        for (a, b) in z.alpha().iter().zip(x.alpha()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn fiber_rotate_examples() {
        let b = ReducedPoint::new(vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let r = fiber_rotate(&b, 0.0);
        assert_eq!(r.beta(), b.beta());

        let r = fiber_rotate(&b, FRAC_PI_2);
        assert!((r.beta()[0] - c(0.0, 1.0)).norm() < 1e-15);

        let r = fiber_rotate(&b, std::f64::consts::TAU);
        assert!((r.beta()[0] - b.beta()[0]).norm() < 1e-15);
    }

    #[test]
    fn ambiguity_group_order() {
        let sig = FrequencySignature::new(&[2, 6, 3], 1.0).unwrap();
        assert_eq!(sig.ambiguity_order().unwrap(), 36);
    }

    proptest! {
        /// The reduction is invariant under the whole ambiguity group.
        #[test]
        fn reduce_absorbs_ambiguity(
            parts in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..5),
            ms in proptest::collection::vec(1u64..7, 1..5),
            rs in proptest::collection::vec(-12i64..12, 1..5),
        ) {
            let n = parts.len().min(ms.len()).min(rs.len());
            let alpha: Vec<_> = parts[..n].iter().map(|&(re, im)| c(re, im)).collect();
            let sig = FrequencySignature::new(&ms[..n], 1.0).unwrap();
            let x = PhasePoint::new(alpha).unwrap();
            let g = AmbiguityElement::new(rs[..n].to_vec());
            let b0 = reduce(&x, &sig).unwrap();
            let b1 = reduce(&ambiguity_apply(&x, &sig, &g).unwrap(), &sig).unwrap();
            for (u, v) in b0.beta().iter().zip(b1.beta()) {
                prop_assert!((u - v).norm() < 1e-12, "residual {}", (u - v).norm());
            }
        }

        /// The reduction preserves the weighted action sum: sum I_n/m_n = sum |beta_n|^2.
        #[test]
        fn reduce_preserves_weighted_actions(
            parts in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..5),
            ms in proptest::collection::vec(1u64..7, 1..5),
        ) {
            let n = parts.len().min(ms.len());
            let alpha: Vec<_> = parts[..n].iter().map(|&(re, im)| c(re, im)).collect();
            let sig = FrequencySignature::new(&ms[..n], 1.0).unwrap();
            let x = PhasePoint::new(alpha).unwrap();
            let b = reduce(&x, &sig).unwrap();
            let lhs: f64 = (0..n).map(|i| x.action(i) / sig.divisor(i) as f64).sum();
            prop_assert!((lhs - b.norm_sqr()).abs() < 1e-12);
        }

        /// Rebuilding a point from either coordinate view reproduces it.
        #[test]
        fn views_round_trip(
            parts in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..5),
        ) {
            let alpha: Vec<_> = parts.iter().map(|&(re, im)| c(re, im)).collect();
            let x = PhasePoint::new(alpha).unwrap();
            let v = x.views();

            let from_qp = PhasePoint::from_cartesian(&v.q, &v.p).unwrap();
            for (a, b) in x.alpha().iter().zip(from_qp.alpha()) {
                prop_assert!((a - b).norm() < 1e-12);
            }

            if v.angles.iter().all(|a| a.is_some()) {
                let phis: Vec<f64> = v.angles.iter().map(|a| a.unwrap()).collect();
                let from_ia = PhasePoint::from_action_angle(&v.actions, &phis).unwrap();
                for (a, b) in x.alpha().iter().zip(from_ia.alpha()) {
                    prop_assert!((a - b).norm() < 1e-12);
                }
            }
        }
    }
}

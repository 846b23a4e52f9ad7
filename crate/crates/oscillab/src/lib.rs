//! Toolkit for classical commensurate harmonic oscillators.
//!
//! An *m-oscillator* is a set of `N` harmonic oscillators whose frequencies
//! are `omega / m_n` for positive integers `m_n`, so that every frequency
//! ratio is rational and every orbit is closed. Such systems carry far more
//! conserved quantities than a generic integrable system, and the interplay
//! between those invariants, the flows they generate, and the places where
//! the flows break down is subtle: the invariants close into a finite Lie
//! algebra everywhere, but the finite symmetry *group* only acts on a
//! reduced phase space, not on the original one.
//!
//! This crate provides the machinery to compute and probe all of that
//! numerically:
//!
//! * [`space`] — frequency signatures, phase points in their three
//!   coordinate systems, the many-to-one reduction map onto the reduced
//!   phase space, the discrete ambiguity group, and the circle action on
//!   fibers.
//! * [`invariants`] — energy, the polynomial invariants `K`, relative
//!   angles, and the sesquilinear invariant matrix with its rank-one /
//!   null-cone constraint.
//! * [`poisson`] — a numerical Poisson-bracket engine (central differences
//!   or exact gradients), iterated brackets, exponential-series flows, and
//!   batch verification of the bracket algebra at sampled points.
//! * [`flows`] — time evolution, the closed-form unitary flows on the
//!   reduced space, rotations in invariant space, adaptively integrated
//!   flows in the full phase space with singular-plane detection, Lorentz
//!   boosts on the invariant cone, and fiber-bundle sampling.
//! * [`classify`] — frequency-divisor classification, winding numbers and
//!   the period census, divisor subsystems with their own invariants, and a
//!   numerical demonstration that the combined invariant algebra of a
//!   non-canonical oscillator does not close.
//!
//! All types are immutable values and all operations are pure functions;
//! everything can be called concurrently without synchronization.

pub mod classify;
pub mod error;
pub mod flows;
pub mod invariants;
pub mod linalg;
pub mod poisson;
pub mod sampling;
pub mod space;

mod integrate;

pub use error::{Error, Result};
pub use invariants::{cone_residual, hamiltonian, k_invariant, rel_angles, InvariantSet, RelAngleSet};
pub use space::{
    ambiguity_apply, fiber_rotate, reduce, AmbiguityElement, FrequencySignature, PhasePoint,
    ReducedPoint,
};

/// Default numerical parameters, shared by the library and the CLI so that
/// every knob has a single source of truth.
pub mod defaults {
    /// Central-difference step for numerical partial derivatives.
    pub const BRACKET_H: f64 = 1e-5;
    /// Residual tolerance for bracket-relation checks at the default step.
    pub const BRACKET_TOL: f64 = 1e-5;
    /// Residual tolerance for bracket-relation checks with exact gradients.
    pub const EXACT_TOL: f64 = 1e-9;
    /// Maximum nesting depth for iterated brackets.
    pub const K_MAX: usize = 6;
    /// Action threshold below which a phase-space flow is declared singular.
    pub const EPS_SING: f64 = 1e-6;
    /// Absolute tolerance of the adaptive integrator.
    pub const ABS_TOL: f64 = 1e-10;
    /// Relative tolerance of the adaptive integrator.
    pub const REL_TOL: f64 = 1e-10;
    /// Accuracy of the bisection refinement of a singular-hit parameter.
    pub const TAU_REFINE: f64 = 1e-9;
    /// Seed used when none is supplied.
    pub const SEED: u64 = 0xC0FFEE;
    /// Relative least-squares residual above which the combined algebra of a
    /// divisor subsystem is reported as non-closing.
    pub const NONCLOSURE_THRESHOLD: f64 = 1e-3;
    /// Sample count for the non-closure regression.
    pub const NONCLOSURE_SAMPLES: usize = 200;
    /// Action bounds used when sampling random phase points away from the
    /// angle singularities.
    pub const SAMPLE_ACTION_RANGE: (f64, f64) = (0.1, 2.0);
}

/// Reduces an angle to the half-open interval `[0, 2*pi)`.
///
/// Every modular angle reduction in the crate goes through this helper so
/// that identities among reduced angles hold up to a single representation
/// epsilon.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut y = x % two_pi;
    if y < 0.0 {
        y += two_pi;
    }
    // x % TAU can return TAU itself after the negative shift when x is a
    // tiny negative number.
    if y >= two_pi {
        y -= two_pi;
    }
    y
}

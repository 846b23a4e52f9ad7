//! Numerical Poisson brackets and bracket-algebra verification.
//!
//! The bracket convention is `{f, g} = sum_n (df/dq_n dg/dp_n - df/dp_n dg/dq_n)`
//! with `{q_n, p_{n'}} = delta_{nn'}`; in the derived coordinate systems it
//! gives `{conj(alpha_n), alpha_{n'}} = i delta_{nn'}` and
//! `{I_n, phi_{n'}} = delta_{nn'}`. Partial derivatives come from exact
//! gradient callbacks when a function carries one, and from central
//! differences otherwise. Iterated brackets feed a truncated exponential
//! series that approximates the flow a generator induces on an observable,
//! which is how the closed-form flows elsewhere in this crate are
//! cross-checked against pure bracket arithmetic.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::defaults;
use crate::error::{Error, Result};
use crate::linalg::HermMatrix;
use crate::sampling;
use crate::space::{FrequencySignature, PhasePoint};

type EvalFn = dyn Fn(&PhasePoint) -> Complex64 + Send + Sync;
type GradFn = dyn Fn(&PhasePoint) -> Vec<Complex64> + Send + Sync;

/// A complex-valued phase-space function, optionally carrying an exact
/// gradient.
///
/// The gradient callback returns the `2N` partials ordered as
/// `(d/dq_1 ... d/dq_N, d/dp_1 ... d/dp_N)`.
#[derive(Clone)]
pub struct PhaseFunction {
    label: String,
    eval: Arc<EvalFn>,
    grad: Option<Arc<GradFn>>,
}

impl fmt::Debug for PhaseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseFunction")
            .field("label", &self.label)
            .field("exact_gradient", &self.grad.is_some())
            .finish()
    }
}

impl PhaseFunction {
    pub fn new(
        label: impl Into<String>,
        eval: impl Fn(&PhasePoint) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            eval: Arc::new(eval),
            grad: None,
        }
    }

    pub fn with_gradient(
        label: impl Into<String>,
        eval: impl Fn(&PhasePoint) -> Complex64 + Send + Sync + 'static,
        grad: impl Fn(&PhasePoint) -> Vec<Complex64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            eval: Arc::new(eval),
            grad: Some(Arc::new(grad)),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: &PhasePoint) -> Complex64 {
        (self.eval)(x)
    }

    pub fn has_exact_gradient(&self) -> bool {
        self.grad.is_some()
    }

    /// A copy with the exact gradient dropped, forcing finite differences.
    pub fn without_gradient(&self) -> Self {
        Self {
            label: self.label.clone(),
            eval: self.eval.clone(),
            grad: None,
        }
    }
}

/// The `2N` partial derivatives of `f` at `x`, exact when available and by
/// central differences with step `h` otherwise.
pub fn gradient(f: &PhaseFunction, x: &PhasePoint, h: f64) -> Result<Vec<Complex64>> {
    if let Some(g) = &f.grad {
        return Ok(g(x));
    }
    finite_gradient(f, x, h)
}

fn finite_gradient(f: &PhaseFunction, x: &PhasePoint, h: f64) -> Result<Vec<Complex64>> {
    let views = x.views();
    let dim = x.dim();
    let mut out = Vec::with_capacity(2 * dim);
    let mut q = views.q.clone();
    let mut p = views.p.clone();
    let probe = |q: &[f64], p: &[f64], coord: usize, offset: f64| -> Result<Complex64> {
        let y = PhasePoint::from_cartesian(q, p)?;
        let v = f.eval(&y);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::StencilFailure {
                label: f.label.clone(),
                coordinate: coord,
                offset,
            });
        }
        Ok(v)
    };
    for coord in 0..2 * dim {
        let (plus, minus) = if coord < dim {
            let orig = q[coord];
            q[coord] = orig + h;
            let plus = probe(&q, &p, coord, h);
            q[coord] = orig - h;
            let minus = probe(&q, &p, coord, -h);
            q[coord] = orig;
            (plus?, minus?)
        } else {
            let k = coord - dim;
            let orig = p[k];
            p[k] = orig + h;
            let plus = probe(&q, &p, coord, h);
            p[k] = orig - h;
            let minus = probe(&q, &p, coord, -h);
            p[k] = orig;
            (plus?, minus?)
        };
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Bracket of two gradient vectors, `sum_n (fq_n gp_n - fp_n gq_n)`.
fn bracket_of_gradients(gf: &[Complex64], gg: &[Complex64]) -> Complex64 {
    let dim = gf.len() / 2;
    (0..dim)
        .map(|n| gf[n] * gg[dim + n] - gf[dim + n] * gg[n])
        .sum()
}

/// The Poisson bracket `{f, g}` at `x`, with step `h` for any
/// finite-difference partials.
pub fn bracket(f: &PhaseFunction, g: &PhaseFunction, x: &PhasePoint, h: f64) -> Result<Complex64> {
    let gf = gradient(f, x, h)?;
    let gg = gradient(g, x, h)?;
    Ok(bracket_of_gradients(&gf, &gg))
}

/// Step used when differentiating a `level`-times nested bracket.
///
/// Each nesting level adds noise of order `err^(2/3)` of the level below,
/// and the optimal central-difference step grows accordingly; for the base
/// step `h` the level-`k` step is `h^((2/3)^(k-1))`.
fn level_step(h: f64, level: usize) -> f64 {
    h.powf((2.0f64 / 3.0).powi(level as i32 - 1))
}

/// The iterated bracket `{f, g}_k` with `{f, g}_0 = f` and
/// `{f, g}_{k+1} = {{f, g}_k, g}`.
///
/// Nested central differences lose accuracy quickly, so the depth is capped
/// at [`defaults::K_MAX`]; errors inside nested evaluations surface as
/// stencil failures of the outermost bracket.
pub fn iterated_bracket(
    f: &PhaseFunction,
    g: &PhaseFunction,
    k: usize,
    x: &PhasePoint,
    h: f64,
) -> Result<Complex64> {
    if k > defaults::K_MAX {
        return Err(Error::OrderLimit {
            requested: k,
            limit: defaults::K_MAX,
        });
    }
    iterated_unchecked(f, g, k, x, h)
}

fn iterated_unchecked(
    f: &PhaseFunction,
    g: &PhaseFunction,
    k: usize,
    x: &PhasePoint,
    h: f64,
) -> Result<Complex64> {
    if k == 0 {
        return Ok(f.eval(x));
    }
    let inner: PhaseFunction = if k == 1 {
        f.clone()
    } else {
        let (fc, gc) = (f.clone(), g.clone());
        let depth = k - 1;
        // nested evaluation failures become NaN and trip the outer stencil check
        PhaseFunction::new(format!("{{{},{}}}_{}", f.label, g.label, depth), move |y| {
            iterated_unchecked(&fc, &gc, depth, y, h)
                .unwrap_or(Complex64::new(f64::NAN, f64::NAN))
        })
    };
    bracket(&inner, g, x, level_step(h, k))
}

/// Truncated exponential series `sum_{k<=k_max} {f, g}_k tau^k / k!`.
///
/// This approximates the value of `f` transported along the flow of `g` for
/// a parameter `tau`; it is only meaningful for small `|tau|` (the
/// closed-form comparisons elsewhere use `|tau| <= 0.1`).
pub fn exp_series_flow(
    f: &PhaseFunction,
    g: &PhaseFunction,
    tau: f64,
    x: &PhasePoint,
    k_max: usize,
) -> Result<Complex64> {
    if k_max > defaults::K_MAX {
        return Err(Error::OrderLimit {
            requested: k_max,
            limit: defaults::K_MAX,
        });
    }
    let mut total = Complex64::new(0.0, 0.0);
    let mut weight = 1.0;
    for k in 0..=k_max {
        if k > 0 {
            weight *= tau / k as f64;
        }
        total += iterated_unchecked(f, g, k, x, defaults::BRACKET_H)? * weight;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Built-in phase functions with exact gradients
// ---------------------------------------------------------------------------

/// Ready-made phase functions for the standard observables and invariants.
///
/// All of them carry exact gradients, so brackets among them are free of
/// truncation error; call [`PhaseFunction::without_gradient`] to force the
/// finite-difference path.
pub mod builtins {
    use super::*;

    const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;
    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn zeros(dim: usize) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); 2 * dim]
    }

    /// The coordinate `q_n`.
    pub fn coord_q(n: usize) -> PhaseFunction {
        PhaseFunction::with_gradient(
            format!("q{}", n + 1),
            move |x| Complex64::new(SQRT2 * x.alpha()[n].re, 0.0),
            move |x| {
                let mut g = zeros(x.dim());
                g[n] = Complex64::new(1.0, 0.0);
                g
            },
        )
    }

    /// The momentum `p_n`.
    pub fn coord_p(n: usize) -> PhaseFunction {
        PhaseFunction::with_gradient(
            format!("p{}", n + 1),
            move |x| Complex64::new(SQRT2 * x.alpha()[n].im, 0.0),
            move |x| {
                let mut g = zeros(x.dim());
                g[x.dim() + n] = Complex64::new(1.0, 0.0);
                g
            },
        )
    }

    /// The complex amplitude `alpha_n`.
    pub fn alpha(n: usize) -> PhaseFunction {
        PhaseFunction::with_gradient(
            format!("alpha{}", n + 1),
            move |x| x.alpha()[n],
            move |x| {
                let mut g = zeros(x.dim());
                g[n] = Complex64::new(INV_SQRT2, 0.0);
                g[x.dim() + n] = Complex64::new(0.0, INV_SQRT2);
                g
            },
        )
    }

    /// The conjugate amplitude `conj(alpha_n)`.
    pub fn alpha_conj(n: usize) -> PhaseFunction {
        PhaseFunction::with_gradient(
            format!("conj_alpha{}", n + 1),
            move |x| x.alpha()[n].conj(),
            move |x| {
                let mut g = zeros(x.dim());
                g[n] = Complex64::new(INV_SQRT2, 0.0);
                g[x.dim() + n] = Complex64::new(0.0, -INV_SQRT2);
                g
            },
        )
    }

    /// The action `I_n = |alpha_n|^2`.
    pub fn action(n: usize) -> PhaseFunction {
        PhaseFunction::with_gradient(
            format!("I{}", n + 1),
            move |x| Complex64::new(x.action(n), 0.0),
            move |x| {
                let mut g = zeros(x.dim());
                let a = x.alpha()[n];
                g[n] = Complex64::new(SQRT2 * a.re, 0.0);
                g[x.dim() + n] = Complex64::new(SQRT2 * a.im, 0.0);
                g
            },
        )
    }

    /// The angle `phi_n` in `[0, 2 pi)`. Discontinuous across the cut at
    /// phase zero, and undefined (NaN) at zero action.
    pub fn angle(n: usize) -> PhaseFunction {
        PhaseFunction::with_gradient(
            format!("phi{}", n + 1),
            move |x| Complex64::new(x.angle(n).unwrap_or(f64::NAN), 0.0),
            move |x| {
                let mut g = zeros(x.dim());
                let a = x.alpha()[n];
                let i2 = 2.0 * a.norm_sqr();
                let (q, p) = (SQRT2 * a.re, SQRT2 * a.im);
                g[n] = Complex64::new(-p / i2, 0.0);
                g[x.dim() + n] = Complex64::new(q / i2, 0.0);
                g
            },
        )
    }

    /// The energy `omega * sum_n I_n / m_n`.
    pub fn hamiltonian(sig: &FrequencySignature) -> PhaseFunction {
        let sig_eval = sig.clone();
        let sig_grad = sig.clone();
        PhaseFunction::with_gradient(
            "H",
            move |x| {
                Complex64::new(
                    crate::invariants::hamiltonian(x, &sig_eval).unwrap_or(f64::NAN),
                    0.0,
                )
            },
            move |x| {
                let dim = x.dim();
                let mut g = zeros(dim);
                for n in 0..dim {
                    let a = x.alpha()[n];
                    let w = sig_grad.omega() / sig_grad.divisor(n) as f64;
                    g[n] = Complex64::new(w * SQRT2 * a.re, 0.0);
                    g[dim + n] = Complex64::new(w * SQRT2 * a.im, 0.0);
                }
                g
            },
        )
    }

    /// The polynomial invariant `K_{nn'} = alpha_n^{m_n} conj(alpha_{n'})^{m_{n'}}`.
    pub fn k_invariant(sig: &FrequencySignature, n: usize, nprime: usize) -> PhaseFunction {
        let (mn, mp) = (sig.divisor(n) as u32, sig.divisor(nprime) as u32);
        let eval_sig = sig.clone();
        PhaseFunction::with_gradient(
            format!("K{}{}", n + 1, nprime + 1),
            move |x| {
                crate::invariants::k_invariant(x, &eval_sig, n, nprime)
                    .unwrap_or(Complex64::new(f64::NAN, f64::NAN))
            },
            move |x| {
                let dim = x.dim();
                let mut g = zeros(dim);
                let a = x.alpha()[n];
                let bc = x.alpha()[nprime].conj();
                let apow = a.powu(mn);
                let bpow = bc.powu(mp);
                // d(alpha^m)/dq = m alpha^{m-1} / sqrt(2); d/dp adds a factor i
                let da = Complex64::new(mn as f64 * INV_SQRT2, 0.0) * a.powu(mn - 1) * bpow;
                g[n] += da;
                g[dim + n] += da * Complex64::new(0.0, 1.0);
                let db = Complex64::new(mp as f64 * INV_SQRT2, 0.0) * bc.powu(mp - 1) * apow;
                g[nprime] += db;
                g[dim + nprime] += db * Complex64::new(0.0, -1.0);
                g
            },
        )
    }

    /// Reduced amplitude with explicit phase exponent and action divisor,
    /// `sqrt(I_n / d) * exp(i e phi_n)`; the plain reduced variable is
    /// `e = d = m_n`. Exposed so divisor subsystems can build their own
    /// invariants with the same machinery.
    pub fn weighted_mode(n: usize, exponent: u64, divisor: u64) -> PhaseFunction {
        PhaseFunction::with_gradient(
            format!("beta{}[{exponent}/{divisor}]", n + 1),
            move |x| weighted_mode_value(x, n, exponent, divisor),
            move |x| weighted_mode_gradient(x, n, exponent, divisor),
        )
    }

    pub(crate) fn weighted_mode_value(
        x: &PhasePoint,
        n: usize,
        exponent: u64,
        divisor: u64,
    ) -> Complex64 {
        crate::space::reduce_mode_with(x.alpha()[n], exponent, divisor)
    }

    /// Gradient of [`weighted_mode`]: with `b = sqrt(I/d) e^{i e phi}`,
    /// `db/dq = b (q - i e p) / (2 I)` and `db/dp = b (p + i e q) / (2 I)`.
    fn weighted_mode_gradient(
        x: &PhasePoint,
        n: usize,
        exponent: u64,
        divisor: u64,
    ) -> Vec<Complex64> {
        let dim = x.dim();
        let mut g = vec![Complex64::new(0.0, 0.0); 2 * dim];
        let a = x.alpha()[n];
        let i2 = 2.0 * a.norm_sqr();
        let b = weighted_mode_value(x, n, exponent, divisor);
        let (q, p) = (SQRT2 * a.re, SQRT2 * a.im);
        let e = exponent as f64;
        g[n] = b * Complex64::new(q, -e * p) / i2;
        g[dim + n] = b * Complex64::new(p, e * q) / i2;
        g
    }

    /// The real part of a reduced amplitude.
    pub fn beta_re(sig: &FrequencySignature, n: usize) -> PhaseFunction {
        let m = sig.divisor(n);
        PhaseFunction::with_gradient(
            format!("Re_beta{}", n + 1),
            move |x| Complex64::new(weighted_mode_value(x, n, m, m).re, 0.0),
            move |x| {
                weighted_mode_gradient(x, n, m, m)
                    .into_iter()
                    .map(|d| Complex64::new(d.re, 0.0))
                    .collect()
            },
        )
    }

    /// The sesquilinear pair `conj(btilde_a) btilde_b` of two weighted
    /// modes; with the plain exponents these are the invariants `J_{ab}`.
    pub fn sesquilinear_pair(
        label: impl Into<String>,
        a: (usize, u64, u64),
        b: (usize, u64, u64),
    ) -> PhaseFunction {
        PhaseFunction::with_gradient(
            label.into(),
            move |x| {
                weighted_mode_value(x, a.0, a.1, a.2).conj() * weighted_mode_value(x, b.0, b.1, b.2)
            },
            move |x| {
                let va = weighted_mode_value(x, a.0, a.1, a.2);
                let vb = weighted_mode_value(x, b.0, b.1, b.2);
                let ga = weighted_mode_gradient(x, a.0, a.1, a.2);
                let gb = weighted_mode_gradient(x, b.0, b.1, b.2);
                ga.iter()
                    .zip(&gb)
                    .map(|(&da, &db)| da.conj() * vb + va.conj() * db)
                    .collect()
            },
        )
    }

    /// The invariant matrix entry `J_{nn'} = conj(beta_n) beta_{n'}` as a
    /// phase-space function.
    pub fn j_entry(sig: &FrequencySignature, n: usize, nprime: usize) -> PhaseFunction {
        let (mn, mp) = (sig.divisor(n), sig.divisor(nprime));
        sesquilinear_pair(
            format!("J{}{}", n + 1, nprime + 1),
            (n, mn, mn),
            (nprime, mp, mp),
        )
    }

    /// The quadratic form `G = sum_{ab} A_{ab} conj(beta_a) beta_b` of a
    /// hermitean matrix; these are the flow generators.
    pub fn hermitean_form(
        sig: &FrequencySignature,
        mat: &HermMatrix,
        label: impl Into<String>,
    ) -> PhaseFunction {
        let dim = sig.dim();
        assert_eq!(mat.dim(), dim, "generator matrix dimension mismatch");
        let ms: Vec<u64> = sig.divisors().to_vec();
        let ms2 = ms.clone();
        let mat_eval = mat.clone();
        let mat_grad = mat.clone();
        PhaseFunction::with_gradient(
            label,
            move |x| {
                let beta: Vec<Complex64> = (0..dim)
                    .map(|k| weighted_mode_value(x, k, ms[k], ms[k]))
                    .collect();
                let u = mat_eval.apply(&beta);
                let val: Complex64 = beta.iter().zip(&u).map(|(b, w)| b.conj() * w).sum();
                Complex64::new(val.re, 0.0)
            },
            move |x| {
                let beta: Vec<Complex64> = (0..dim)
                    .map(|k| weighted_mode_value(x, k, ms2[k], ms2[k]))
                    .collect();
                let u = mat_grad.apply(&beta);
                let mut g = vec![Complex64::new(0.0, 0.0); 2 * dim];
                // dG = sum_a 2 Re(conj(u_a) dbeta_a) for hermitean A
                for k in 0..dim {
                    let gk = weighted_mode_gradient(x, k, ms2[k], ms2[k]);
                    g[k] += Complex64::new(2.0 * (u[k].conj() * gk[k]).re, 0.0);
                    g[dim + k] += Complex64::new(2.0 * (u[k].conj() * gk[dim + k]).re, 0.0);
                }
                g
            },
        )
    }

    /// The four-vector component `J_nu`, `nu = 0..=3`, for two modes.
    pub fn j_component(sig: &FrequencySignature, nu: usize) -> PhaseFunction {
        assert_eq!(sig.dim(), 2, "the four-vector exists for two modes");
        let mut mat = HermMatrix::zeros(2);
        let half = Complex64::new(0.5, 0.0);
        match nu {
            0 => {
                mat.set(0, 0, half);
                mat.set(1, 1, half);
            }
            1 => {
                mat.set(0, 1, half);
                mat.set(1, 0, half);
            }
            2 => {
                mat.set(0, 1, Complex64::new(0.0, -0.5));
                mat.set(1, 0, Complex64::new(0.0, 0.5));
            }
            3 => {
                mat.set(0, 0, half);
                mat.set(1, 1, -half);
            }
            _ => panic!("four-vector index must be 0..=3"),
        }
        hermitean_form(sig, &mat, format!("J{nu}"))
    }
}

// ---------------------------------------------------------------------------
// Batch verification of the bracket algebra
// ---------------------------------------------------------------------------

/// Which family of bracket relations to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Brackets of actions with the polynomial invariants:
    /// `{I_n, K_{nn'}} = i m_n K_{nn'}`, `{I_{n'}, K_{nn'}} = -i m_{n'} K_{nn'}`,
    /// spectator actions commute.
    IK,
    /// The two-mode four-vector algebra: `{J_j, J_k} = eps_{jkl} J_l`,
    /// `{J_0, J_j} = 0`.
    Su2,
    /// The full sesquilinear algebra in any dimension:
    /// `{J_{nn'}, J_{kk'}} = i (delta_{nk'} J_{kn'} - delta_{n'k} J_{nk'})`.
    UN,
}

impl Relation {
    pub fn name(&self) -> &'static str {
        match self {
            Relation::IK => "IK",
            Relation::Su2 => "su2",
            Relation::UN => "uN",
        }
    }
}

/// Whether brackets use exact gradients or central differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    FiniteDifference,
    Exact,
}

/// Options for [`verify_algebra`].
#[derive(Debug, Clone)]
pub struct VerifyOpts {
    pub samples: usize,
    pub seed: u64,
    pub h: f64,
    pub tol: f64,
    pub gradient_mode: GradientMode,
    /// Sampled actions stay in this closed interval, away from the loci
    /// where angles and fractional powers are non-smooth.
    pub action_range: (f64, f64),
}

impl Default for VerifyOpts {
    fn default() -> Self {
        Self {
            samples: 100,
            seed: defaults::SEED,
            h: defaults::BRACKET_H,
            tol: defaults::BRACKET_TOL,
            gradient_mode: GradientMode::FiniteDifference,
            action_range: defaults::SAMPLE_ACTION_RANGE,
        }
    }
}

/// Result of verifying one bracket-relation family at sampled points.
#[derive(Debug, Clone, Serialize)]
pub struct AlgebraReport {
    pub relation: String,
    pub samples: usize,
    pub h: f64,
    pub tol: f64,
    pub gradients: GradientMode,
    pub max_residual: f64,
    /// Amplitudes of the worst sample as `[re, im]` pairs.
    pub worst_point: Vec<[f64; 2]>,
    /// Samples whose stencil evaluation failed entirely.
    pub failed_samples: usize,
    pub pass: bool,
}

fn strip_if_fd(f: PhaseFunction, mode: GradientMode) -> PhaseFunction {
    match mode {
        GradientMode::FiniteDifference => f.without_gradient(),
        GradientMode::Exact => f,
    }
}

/// Verifies a bracket-relation family at random points and reports the
/// worst residual.
///
/// Samples are evaluated independently (in parallel) and reduced by a
/// deterministic maximum, so the report does not depend on scheduling.
pub fn verify_algebra(
    sig: &FrequencySignature,
    relation: Relation,
    opts: &VerifyOpts,
) -> Result<AlgebraReport> {
    let dim = sig.dim();
    if relation == Relation::Su2 && dim != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: dim,
        });
    }
    if opts.samples == 0 {
        return Err(Error::Degenerate(
            "verification needs at least one sample".into(),
        ));
    }

    // Assemble the function family once; gradients of every function are
    // computed once per sample and each relation residual is a bilinear
    // combination of them.
    let funcs: Vec<PhaseFunction> = match relation {
        Relation::IK => {
            let mut v: Vec<PhaseFunction> = (0..dim).map(builtins::action).collect();
            for n in 0..dim {
                for np in 0..dim {
                    if n != np {
                        v.push(builtins::k_invariant(sig, n, np));
                    }
                }
            }
            v
        }
        Relation::Su2 => (0..4).map(|nu| builtins::j_component(sig, nu)).collect(),
        Relation::UN => {
            let mut v = Vec::with_capacity(dim * dim);
            for n in 0..dim {
                for np in 0..dim {
                    v.push(builtins::j_entry(sig, n, np));
                }
            }
            v
        }
    };
    let funcs: Vec<PhaseFunction> = funcs
        .into_iter()
        .map(|f| strip_if_fd(f, opts.gradient_mode))
        .collect();

    let per_sample = |idx: u64| -> Result<(f64, PhasePoint)> {
        let mut rng = sampling::rng_for(opts.seed, idx);
        let x =
            sampling::sample_phase_point(&mut rng, dim, opts.action_range.0, opts.action_range.1);
        let grads: Vec<Vec<Complex64>> = funcs
            .iter()
            .map(|f| gradient(f, &x, opts.h))
            .collect::<Result<_>>()?;
        let vals: Vec<Complex64> = funcs.iter().map(|f| f.eval(&x)).collect();
        let residual = match relation {
            Relation::IK => ik_residual(sig, &grads, &vals),
            Relation::Su2 => su2_residual(&grads, &vals),
            Relation::UN => un_residual(dim, &grads, &vals),
        };
        Ok((residual, x))
    };

    let outcomes: Vec<Result<(f64, PhasePoint)>> = (0..opts.samples as u64)
        .into_par_iter()
        .map(per_sample)
        .collect();

    let mut max_residual = -1.0f64;
    let mut worst: Option<PhasePoint> = None;
    let mut failed = 0usize;
    let mut last_err = None;
    for outcome in outcomes {
        match outcome {
            Ok((r, x)) => {
                if r > max_residual {
                    max_residual = r;
                    worst = Some(x);
                }
            }
            Err(e) => {
                failed += 1;
                last_err = Some(e);
            }
        }
    }
    if failed == opts.samples {
        return Err(last_err.expect("all samples failed"));
    }
    let worst = worst.expect("at least one sample succeeded");
    Ok(AlgebraReport {
        relation: relation.name().to_string(),
        samples: opts.samples,
        h: opts.h,
        tol: opts.tol,
        gradients: opts.gradient_mode,
        max_residual,
        worst_point: worst.alpha().iter().map(|a| [a.re, a.im]).collect(),
        failed_samples: failed,
        pass: max_residual < opts.tol && failed == 0,
    })
}

/// Residuals of `{I_n, K_{nn'}} = i m_n K`, `{I_{n'}, K_{nn'}} = -i m_{n'} K`,
/// `{I_a, K_{nn'}} = 0` for spectators, and `{I_a, I_b} = 0`.
fn ik_residual(sig: &FrequencySignature, grads: &[Vec<Complex64>], vals: &[Complex64]) -> f64 {
    let dim = sig.dim();
    let i_unit = Complex64::new(0.0, 1.0);
    let mut worst = 0.0f64;
    for a in 0..dim {
        for b in (a + 1)..dim {
            worst = worst.max(bracket_of_gradients(&grads[a], &grads[b]).norm());
        }
    }
    let mut kpos = dim;
    for n in 0..dim {
        for np in 0..dim {
            if n == np {
                continue;
            }
            let kval = vals[kpos];
            let kgrad = &grads[kpos];
            for a in 0..dim {
                let br = bracket_of_gradients(&grads[a], kgrad);
                let expect = if a == n {
                    i_unit * sig.divisor(n) as f64 * kval
                } else if a == np {
                    -i_unit * sig.divisor(np) as f64 * kval
                } else {
                    Complex64::new(0.0, 0.0)
                };
                worst = worst.max((br - expect).norm());
            }
            kpos += 1;
        }
    }
    worst
}

/// Residuals of `{J_j, J_k} = eps_{jkl} J_l` and `{J_0, J_j} = 0`.
fn su2_residual(grads: &[Vec<Complex64>], vals: &[Complex64]) -> f64 {
    let mut worst = 0.0f64;
    for j in 1..4 {
        worst = worst.max(bracket_of_gradients(&grads[0], &grads[j]).norm());
    }
    for (j, k, l) in [(1, 2, 3), (2, 3, 1), (3, 1, 2)] {
        let br = bracket_of_gradients(&grads[j], &grads[k]);
        worst = worst.max((br - vals[l]).norm());
    }
    worst
}

/// Residuals of `{J_{nn'}, J_{kk'}} = i (delta_{nk'} J_{kn'} - delta_{n'k} J_{nk'})`.
fn un_residual(dim: usize, grads: &[Vec<Complex64>], vals: &[Complex64]) -> f64 {
    let idx = |a: usize, b: usize| a * dim + b;
    let i_unit = Complex64::new(0.0, 1.0);
    let mut worst = 0.0f64;
    for n in 0..dim {
        for np in 0..dim {
            for k in 0..dim {
                for kp in 0..dim {
                    let br = bracket_of_gradients(&grads[idx(n, np)], &grads[idx(k, kp)]);
                    let mut expect = Complex64::new(0.0, 0.0);
                    if n == kp {
                        expect += i_unit * vals[idx(k, np)];
                    }
                    if np == k {
                        expect -= i_unit * vals[idx(n, kp)];
                    }
                    worst = worst.max((br - expect).norm());
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::reduce;
    use approx::assert_relative_eq;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_4;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sig12() -> FrequencySignature {
        FrequencySignature::new(&[1, 2], 1.0).unwrap()
    }

    fn ones() -> PhasePoint {
        PhasePoint::new(vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap()
    }

    #[test]
    fn canonical_pair_is_exact() {
        // central differences are exact on linear functions
        let f = builtins::coord_q(0).without_gradient();
        let g = builtins::coord_p(0).without_gradient();
        let x = PhasePoint::new(vec![c(0.3, -0.8), c(1.1, 0.4)]).unwrap();
        let br = bracket(&f, &g, &x, 1e-5).unwrap();
        assert_relative_eq!(br.re, 1.0, epsilon = 1e-10);
        assert!(br.im.abs() < 1e-10);
        // and the exact-gradient route agrees
        let br = bracket(&builtins::coord_q(0), &builtins::coord_p(0), &x, 1e-5).unwrap();
        assert_eq!(br, c(1.0, 0.0));
        // cross-mode pairs commute
        let br = bracket(&builtins::coord_q(0), &builtins::coord_p(1), &x, 1e-5).unwrap();
        assert_eq!(br, c(0.0, 0.0));
    }

    #[test]
    fn convention_anchors() {
        let mut rng = sampling::rng_for(99, 0);
        for _ in 0..20 {
            // keep angles off the branch cut so the fd path stays smooth
            let actions: Vec<f64> = (0..2).map(|_| rng.gen_range(0.3..1.5)).collect();
            let angles: Vec<f64> = (0..2).map(|_| rng.gen_range(0.2..6.0)).collect();
            let x = PhasePoint::from_action_angle(&actions, &angles).unwrap();

            // {I_n, phi_n} = 1
            let br = bracket(&builtins::action(0), &builtins::angle(0), &x, 1e-5).unwrap();
            assert!((br - c(1.0, 0.0)).norm() < 1e-10, "I-phi bracket {br}");
            let br = bracket(
                &builtins::action(0).without_gradient(),
                &builtins::angle(0).without_gradient(),
                &x,
                1e-6,
            )
            .unwrap();
            assert!((br - c(1.0, 0.0)).norm() < 1e-9, "fd I-phi bracket {br}");

            // {conj(alpha_n), alpha_n} = i
            let br = bracket(&builtins::alpha_conj(1), &builtins::alpha(1), &x, 1e-5).unwrap();
            assert!((br - c(0.0, 1.0)).norm() < 1e-12);

            // {I_1, I_2} = 0
            let br = bracket(&builtins::action(0), &builtins::action(1), &x, 1e-5).unwrap();
            assert!(br.norm() < 1e-12);
        }
    }

    #[test]
    fn bracket_antisymmetry_and_leibniz() {
        let sig = sig12();
        let f = builtins::j_component(&sig, 1).without_gradient();
        let g = builtins::j_component(&sig, 3).without_gradient();
        let mut rng = sampling::rng_for(7, 1);
        for _ in 0..10 {
            let x = sampling::sample_phase_point(&mut rng, 2, 0.2, 1.5);
            let fg = bracket(&f, &g, &x, 1e-5).unwrap();
            let gf = bracket(&g, &f, &x, 1e-5).unwrap();
            assert!((fg + gf).norm() < 1e-10);

            // {fg, h} = f {g, h} + g {f, h} with h = I_1
            let h = builtins::action(0).without_gradient();
            let (fc, gc) = (f.clone(), g.clone());
            let fg_prod = PhaseFunction::new("J1*J3", move |y| fc.eval(y) * gc.eval(y));
            let lhs = bracket(&fg_prod, &h, &x, 1e-5).unwrap();
            let rhs = f.eval(&x) * bracket(&g, &h, &x, 1e-5).unwrap()
                + g.eval(&x) * bracket(&f, &h, &x, 1e-5).unwrap();
            assert!(
                (lhs - rhs).norm() < 1e-8,
                "Leibniz defect {}",
                (lhs - rhs).norm()
            );
        }
    }

    #[test]
    fn action_k_bracket_example() {
        // at alpha = (1, 1) with divisors (1, 2): {I_1, K_21} = -i
        let sig = sig12();
        let x = ones();
        let f = builtins::action(0);
        let k21 = builtins::k_invariant(&sig, 1, 0);
        let br = bracket(&f, &k21, &x, 1e-5).unwrap();
        assert!((br - c(0.0, -1.0)).norm() < 1e-12, "bracket {br}");
        // finite differences agree to truncation error
        let br = bracket(&f.without_gradient(), &k21.without_gradient(), &x, 1e-5).unwrap();
        assert!((br - c(0.0, -1.0)).norm() < 1e-5);
    }

    #[test]
    fn angle_k_invariant_value() {
        let sig = sig12();
        let x = PhasePoint::new(vec![c(1.0, 0.0), Complex64::from_polar(1.0, FRAC_PI_4)]).unwrap();
        assert!((builtins::k_invariant(&sig, 1, 0).eval(&x) - c(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn gradients_match_finite_differences() {
        // exact gradients of every builtin agree with central differences
        let sig = FrequencySignature::new(&[2, 3], 1.3).unwrap();
        let x = PhasePoint::from_action_angle(&[0.7, 1.1], &[0.9, 2.3]).unwrap();
        let h = 1e-6;
        let mut mat = HermMatrix::zeros(2);
        mat.set(0, 0, c(0.4, 0.0));
        mat.set(1, 1, c(-0.2, 0.0));
        mat.set(0, 1, c(0.3, 0.5));
        mat.set(1, 0, c(0.3, -0.5));
        let funcs = vec![
            builtins::coord_q(1),
            builtins::coord_p(0),
            builtins::alpha(0),
            builtins::alpha_conj(1),
            builtins::action(1),
            builtins::angle(0),
            builtins::hamiltonian(&sig),
            builtins::k_invariant(&sig, 0, 1),
            builtins::weighted_mode(1, 3, 3),
            builtins::beta_re(&sig, 0),
            builtins::j_entry(&sig, 0, 1),
            builtins::hermitean_form(&sig, &mat, "G"),
        ];
        for f in funcs {
            let exact = gradient(&f, &x, h).unwrap();
            let fd = gradient(&f.without_gradient(), &x, h).unwrap();
            for (k, (e, d)) in exact.iter().zip(&fd).enumerate() {
                assert!(
                    (e - d).norm() < 1e-7,
                    "{}: partial {k} exact {e} vs fd {d}",
                    f.label()
                );
            }
        }
    }

    #[test]
    fn stencil_failure_reports_offset() {
        let f = PhaseFunction::new("bad", |x| {
            if x.alpha()[0].re > 1.0 {
                c(f64::NAN, 0.0)
            } else {
                c(x.alpha()[0].re, 0.0)
            }
        });
        let x = PhasePoint::from_cartesian(&[std::f64::consts::SQRT_2 - 1e-9], &[0.0]).unwrap();
        let err = gradient(&f, &x, 1e-3).unwrap_err();
        match err {
            Error::StencilFailure {
                coordinate, offset, ..
            } => {
                assert_eq!(coordinate, 0);
                assert!(offset > 0.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn iterated_bracket_harmonic_recursion() {
        // isotropic H: {q1, H}_1 = p1, {q1, H}_2 = -q1
        let sig = FrequencySignature::new(&[1, 1], 1.0).unwrap();
        let h_fn = builtins::hamiltonian(&sig);
        let q1 = builtins::coord_q(0);
        let x = PhasePoint::new(vec![c(0.4, -0.3), c(0.2, 0.9)]).unwrap();
        let views = x.views();

        let b0 = iterated_bracket(&q1, &h_fn, 0, &x, 1e-5).unwrap();
        assert_relative_eq!(b0.re, views.q[0], epsilon = 1e-14);

        let b1 = iterated_bracket(&q1, &h_fn, 1, &x, 1e-5).unwrap();
        assert_relative_eq!(b1.re, views.p[0], epsilon = 1e-12);

        let b2 = iterated_bracket(&q1, &h_fn, 2, &x, 1e-5).unwrap();
        assert!((b2.re + views.q[0]).abs() < 1e-6, "b2 = {b2}");

        // invariants have vanishing repeated bracket with H
        let i1 = builtins::action(0);
        for k in 1..=3 {
            let b = iterated_bracket(&i1, &h_fn, k, &x, 1e-5).unwrap();
            assert!(b.norm() < 1e-6, "k={k}: {b}");
        }

        assert!(matches!(
            iterated_bracket(&q1, &h_fn, 7, &x, 1e-5),
            Err(Error::OrderLimit { .. })
        ));
    }

    #[test]
    fn exp_series_matches_rotating_flow() {
        // transporting Re(beta_1) along the diagonal generator multiplies
        // beta_1 by e^{-i tau/2}
        let sig = sig12();
        let f = builtins::beta_re(&sig, 0);
        let g = builtins::j_component(&sig, 3);
        let x = PhasePoint::from_action_angle(&[0.8, 1.2], &[1.1, 2.7]).unwrap();
        let beta0 = reduce(&x, &sig).unwrap().beta()[0];
        let tau = 0.05;

        let series = exp_series_flow(&f, &g, tau, &x, 6).unwrap();
        let closed = (beta0 * Complex64::from_polar(1.0, -tau / 2.0)).re;
        assert!(
            (series.re - closed).abs() < 1e-8,
            "series {} vs closed {closed}",
            series.re
        );

        // tau = 0 returns the function value
        let series0 = exp_series_flow(&f, &g, 0.0, &x, 6).unwrap();
        assert_relative_eq!(series0.re, beta0.re, epsilon = 1e-14);

        // the energy is inert under every invariant flow
        let h_fn = builtins::hamiltonian(&sig);
        let series_h = exp_series_flow(&h_fn, &g, 0.08, &x, 4).unwrap();
        let e0 = h_fn.eval(&x).re;
        assert!((series_h.re - e0).abs() < 1e-7);
    }

    #[test]
    fn hamiltonian_commutes_with_invariants() {
        let sig = sig12();
        let h_fn = builtins::hamiltonian(&sig);
        let mut rng = sampling::rng_for(3, 0);
        for _ in 0..100 {
            let x = sampling::sample_phase_point(&mut rng, 2, 0.1, 2.0);
            for nu in 0..4 {
                let j = builtins::j_component(&sig, nu);
                let br = bracket(&h_fn, &j, &x, 1e-5).unwrap();
                assert!(br.norm() < 1e-8, "nu={nu}: {br}");
            }
            let k = builtins::k_invariant(&sig, 0, 1);
            let br = bracket(&h_fn, &k, &x, 1e-5).unwrap();
            assert!(br.norm() < 1e-8);
        }
    }

    #[test]
    fn reduced_variables_are_canonical() {
        let sig = FrequencySignature::new(&[2, 3, 5], 1.0).unwrap();
        let mut rng = sampling::rng_for(4, 0);
        for _ in 0..25 {
            let x = sampling::sample_phase_point(&mut rng, 3, 0.1, 2.0);
            for n in 0..3 {
                for np in 0..3 {
                    let m_n = sig.divisor(n);
                    let m_np = sig.divisor(np);
                    let bn = builtins::weighted_mode(n, m_n, m_n);
                    let bnp = builtins::weighted_mode(np, m_np, m_np);
                    let conj_bn = PhaseFunction::with_gradient(
                        "conj_beta",
                        {
                            let bn = bn.clone();
                            move |y| bn.eval(y).conj()
                        },
                        {
                            let bn = bn.clone();
                            move |y| {
                                gradient(&bn, y, 1e-6)
                                    .unwrap()
                                    .into_iter()
                                    .map(|d| d.conj())
                                    .collect()
                            }
                        },
                    );
                    let br = bracket(&conj_bn, &bnp, &x, 1e-5).unwrap();
                    let expect = if n == np { c(0.0, 1.0) } else { c(0.0, 0.0) };
                    assert!((br - expect).norm() < 1e-8, "({n},{np}): {br} vs {expect}");
                }
            }
        }
    }

    #[test]
    fn verify_su2_passes() {
        let sig = sig12();
        let report = verify_algebra(&sig, Relation::Su2, &VerifyOpts::default()).unwrap();
        assert!(report.pass, "max residual {}", report.max_residual);
        assert!(report.max_residual < 1e-5);
        assert_eq!(report.failed_samples, 0);

        let exact = verify_algebra(
            &sig,
            Relation::Su2,
            &VerifyOpts {
                gradient_mode: GradientMode::Exact,
                tol: defaults::EXACT_TOL,
                ..VerifyOpts::default()
            },
        )
        .unwrap();
        assert!(exact.pass, "exact max residual {}", exact.max_residual);
        assert!(exact.max_residual < 1e-9);
    }

    #[test]
    fn verify_un_passes() {
        // isotropic two-mode case: reduced variables coincide with the
        // amplitudes and the invariants are polynomial
        let iso = FrequencySignature::new(&[1, 1], 1.0).unwrap();
        let report = verify_algebra(&iso, Relation::UN, &VerifyOpts::default()).unwrap();
        assert!(report.pass, "max residual {}", report.max_residual);

        let sig = FrequencySignature::new(&[2, 3, 5], 1.0).unwrap();
        let report = verify_algebra(&sig, Relation::UN, &VerifyOpts::default()).unwrap();
        assert!(report.pass, "max residual {}", report.max_residual);
    }

    #[test]
    fn verify_ik_passes() {
        for m in [[1u64, 2], [3, 4]] {
            let sig = FrequencySignature::new(&m, 1.0).unwrap();
            let report = verify_algebra(&sig, Relation::IK, &VerifyOpts::default()).unwrap();
            assert!(report.pass, "m={m:?}: max residual {}", report.max_residual);
        }
    }

    #[test]
    fn verify_su2_needs_two_modes() {
        let sig = FrequencySignature::new(&[2, 3, 5], 1.0).unwrap();
        assert!(matches!(
            verify_algebra(&sig, Relation::Su2, &VerifyOpts::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn reports_are_deterministic() {
        let sig = sig12();
        let a = verify_algebra(&sig, Relation::Su2, &VerifyOpts::default()).unwrap();
        let b = verify_algebra(&sig, Relation::Su2, &VerifyOpts::default()).unwrap();
        assert_eq!(a.max_residual, b.max_residual);
        assert_eq!(a.worst_point, b.worst_point);
    }
}

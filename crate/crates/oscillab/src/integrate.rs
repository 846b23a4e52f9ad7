//! Adaptive Dormand-Prince 5(4) integration with event detection.
//!
//! Internal to the crate: the flow machinery needs an embedded pair with
//! error-based step control, a record of every accepted step, and the
//! ability to stop at the first parameter where a scalar event function
//! crosses below zero, refined to high accuracy on the dense output. The
//! state is a flat real vector; callers pack complex amplitudes as they
//! see fit.

/// Options for [`integrate`].
#[derive(Debug, Clone)]
pub(crate) struct IntegrateOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
    pub h_init: Option<f64>,
    /// Accuracy of the event-parameter refinement.
    pub refine_tol: f64,
}

impl Default for IntegrateOpts {
    fn default() -> Self {
        Self {
            abs_tol: crate::defaults::ABS_TOL,
            rel_tol: crate::defaults::REL_TOL,
            max_steps: 1_000_000,
            h_init: None,
            refine_tol: crate::defaults::TAU_REFINE,
        }
    }
}

/// Why the integration stopped.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Stop {
    /// Reached the end of the parameter interval.
    Completed,
    /// The event function crossed below zero at `t`.
    Event { t: f64, y: Vec<f64> },
    /// The error control drove the step size below representable size,
    /// which the flow layer treats as an unreachable/singular point.
    StepUnderflow { t: f64 },
    /// Gave up after the step budget; should not happen for the smooth
    /// fields in this crate.
    MaxSteps { t: f64 },
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    /// `(t, y)` at the initial point and after every accepted step; when an
    /// event stops the integration, the last sample is the refined event
    /// point.
    pub samples: Vec<(f64, Vec<f64>)>,
    pub accepted: usize,
    pub rejected: usize,
    pub stop: Stop,
}

const STAGES: usize = 7;

// Dormand-Prince coefficients.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
// Difference between the 5th-order and the embedded 4th-order weights.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Integrates `dy/dt = f(t, y)` from `t = 0` to `t_end >= 0`.
///
/// When `event` is given, integration stops at the first accepted step whose
/// endpoint has `event(t, y) <= 0`; the crossing parameter is then refined
/// by bisection on cubic dense output.
pub(crate) fn integrate(
    f: &dyn Fn(f64, &[f64]) -> Vec<f64>,
    y0: &[f64],
    t_end: f64,
    opts: &IntegrateOpts,
    event: Option<&dyn Fn(f64, &[f64]) -> f64>,
) -> Solution {
    let dim = y0.len();
    let mut samples = vec![(0.0, y0.to_vec())];
    let mut accepted = 0usize;
    let mut rejected = 0usize;

    if let Some(g) = event {
        if g(0.0, y0) <= 0.0 {
            return Solution {
                samples,
                accepted,
                rejected,
                stop: Stop::Event {
                    t: 0.0,
                    y: y0.to_vec(),
                },
            };
        }
    }
    if t_end <= 0.0 {
        return Solution {
            samples,
            accepted,
            rejected,
            stop: Stop::Completed,
        };
    }

    let mut t = 0.0f64;
    let mut y = y0.to_vec();
    let mut dy = f(t, &y);
    let norm0: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rate0: f64 = dy.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut h = opts
        .h_init
        .unwrap_or_else(|| (1e-2 * (norm0 + 1.0) / (rate0 + 1.0)).min(t_end / 10.0).max(1e-8));

    let mut k = vec![vec![0.0f64; dim]; STAGES];
    let mut steps = 0usize;
    loop {
        if steps >= opts.max_steps {
            return Solution {
                samples,
                accepted,
                rejected,
                stop: Stop::MaxSteps { t },
            };
        }
        steps += 1;
        if h < 1e-13 * t.abs().max(1.0) {
            return Solution {
                samples,
                accepted,
                rejected,
                stop: Stop::StepUnderflow { t },
            };
        }
        let h_this = h.min(t_end - t);

        k[0].clone_from(&dy);
        let mut y_stage = vec![0.0f64; dim];
        for s in 0..6 {
            for (i, ys) in y_stage.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s + 1) {
                    acc += A[s][j] * kj[i];
                }
                *ys = y[i] + h_this * acc;
            }
            k[s + 1] = f(t + C[s] * h_this, &y_stage);
        }
        // stage 7 evaluated at t + h is both the last stage and the FSAL
        // derivative of the next step; y_stage now holds the 5th-order result
        let y_new = y_stage;
        let dy_new = k[6].clone();

        let mut err_sq = 0.0f64;
        for i in 0..dim {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            e *= h_this;
            let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / dim as f64).sqrt();

        if err <= 1.0 {
            let t_new = t + h_this;
            accepted += 1;

            if let Some(g) = event {
                if g(t_new, &y_new) <= 0.0 {
                    let (t_star, y_star) = refine_event(
                        g,
                        t,
                        &y,
                        &dy,
                        t_new,
                        &y_new,
                        &dy_new,
                        opts.refine_tol,
                    );
                    samples.push((t_star, y_star.clone()));
                    return Solution {
                        samples,
                        accepted,
                        rejected,
                        stop: Stop::Event {
                            t: t_star,
                            y: y_star,
                        },
                    };
                }
            }

            t = t_new;
            y = y_new;
            dy = dy_new;
            samples.push((t, y.clone()));
            if t >= t_end - 1e-14 * t_end.max(1.0) {
                return Solution {
                    samples,
                    accepted,
                    rejected,
                    stop: Stop::Completed,
                };
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = h_this * factor;
        } else {
            rejected += 1;
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 1.0)
            } else {
                0.1
            };
            h = h_this * factor;
        }
    }
}

/// Cubic Hermite interpolation on one accepted step.
fn hermite(
    theta: f64,
    h: f64,
    y0: &[f64],
    f0: &[f64],
    y1: &[f64],
    f1: &[f64],
) -> Vec<f64> {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let c0 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let c1 = (t3 - 2.0 * t2 + theta) * h;
    let c2 = -2.0 * t3 + 3.0 * t2;
    let c3 = (t3 - t2) * h;
    (0..y0.len())
        .map(|i| c0 * y0[i] + c1 * f0[i] + c2 * y1[i] + c3 * f1[i])
        .collect()
}

/// Bisects for the earliest parameter in `(t0, t1]` where the event function
/// is non-positive, on the cubic dense output of the bracketing step.
#[allow(clippy::too_many_arguments)]
fn refine_event(
    g: &dyn Fn(f64, &[f64]) -> f64,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    t1: f64,
    y1: &[f64],
    f1: &[f64],
    tol: f64,
) -> (f64, Vec<f64>) {
    let h = t1 - t0;
    let mut lo = 0.0f64; // g > 0 here
    let mut hi = 1.0f64; // g <= 0 here
    while (hi - lo) * h.abs() > tol {
        let mid = 0.5 * (lo + hi);
        let y_mid = hermite(mid, h, y0, f0, y1, f1);
        if g(t0 + mid * h, &y_mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let y_star = hermite(hi, h, y0, f0, y1, f1);
    (t0 + hi * h, y_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_accuracy() {
        // y'' = -y integrated over many cycles against the closed form
        let f = |_t: f64, y: &[f64]| vec![y[1], -y[0]];
        let t_end = 20.0 * std::f64::consts::PI;
        let sol = integrate(&f, &[1.0, 0.0], t_end, &IntegrateOpts::default(), None);
        assert_eq!(sol.stop, Stop::Completed);
        let (t, y) = sol.samples.last().unwrap();
        assert!((t - t_end).abs() < 1e-9);
        assert!((y[0] - t_end.cos()).abs() < 1e-7, "y0 err {}", y[0] - t_end.cos());
        assert!((y[1] + t_end.sin()).abs() < 1e-7);
        // tolerances actually bite: a coarse run is visibly worse
        let coarse = integrate(
            &f,
            &[1.0, 0.0],
            t_end,
            &IntegrateOpts {
                abs_tol: 1e-4,
                rel_tol: 1e-4,
                ..IntegrateOpts::default()
            },
            None,
        );
        assert!(coarse.accepted < sol.accepted);
    }

    #[test]
    fn event_is_refined() {
        // linear decay crosses the threshold exactly at t = 1
        let f = |_t: f64, _y: &[f64]| vec![-1.0];
        let g = |_t: f64, y: &[f64]| y[0];
        let sol = integrate(&f, &[1.0], 10.0, &IntegrateOpts::default(), Some(&g));
        match sol.stop {
            Stop::Event { t, .. } => assert!((t - 1.0).abs() < 1e-9, "t* = {t}"),
            other => panic!("expected event, got {other:?}"),
        }
    }

    #[test]
    fn event_at_start_is_immediate() {
        let f = |_t: f64, _y: &[f64]| vec![1.0];
        let g = |_t: f64, y: &[f64]| y[0];
        let sol = integrate(&f, &[-0.5], 1.0, &IntegrateOpts::default(), Some(&g));
        assert!(matches!(sol.stop, Stop::Event { t, .. } if t == 0.0));
    }

    #[test]
    fn quadratic_touchdown_event() {
        // y(t) = (1 - t)^2 reaches the threshold smoothly at t = 1
        let f = |t: f64, _y: &[f64]| vec![-2.0 * (1.0 - t)];
        let g = |_t: f64, y: &[f64]| y[0] - 1e-6;
        let sol = integrate(&f, &[1.0], 2.0, &IntegrateOpts::default(), Some(&g));
        match sol.stop {
            Stop::Event { t, y } => {
                assert!((y[0] - 1e-6).abs() < 1e-8, "event value {}", y[0]);
                assert!((t - (1.0 - 1e-3)).abs() < 1e-6, "t* = {t}");
            }
            other => panic!("expected event, got {other:?}"),
        }
    }
}

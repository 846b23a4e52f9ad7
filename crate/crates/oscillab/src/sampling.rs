//! Deterministic random sampling of phase-space and reduced-space points.
//!
//! Sample streams are keyed by `(seed, index)` so that batch evaluations can
//! be fanned out across threads and still produce the same points in the
//! same order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::space::{PhasePoint, ReducedPoint};

/// A generator for the given seed and per-sample stream index.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A phase point with every action drawn uniformly from `[lo, hi]` and a
/// uniform angle, keeping it away from the loci where angles degenerate.
pub fn sample_phase_point(rng: &mut impl Rng, dim: usize, lo: f64, hi: f64) -> PhasePoint {
    let actions: Vec<f64> = (0..dim).map(|_| rng.gen_range(lo..=hi)).collect();
    let angles: Vec<f64> = (0..dim)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    PhasePoint::from_action_angle(&actions, &angles).expect("sampled actions are positive")
}

/// A reduced point drawn the same way as [`sample_phase_point`].
pub fn sample_reduced_point(rng: &mut impl Rng, dim: usize, lo: f64, hi: f64) -> ReducedPoint {
    let beta = (0..dim)
        .map(|_| {
            let r = rng.gen_range(lo..=hi).sqrt();
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            Complex64::from_polar(r, phi)
        })
        .collect();
    ReducedPoint::new(beta).expect("sampled amplitudes are finite")
}

/// A uniform point on the unit 2-sphere, by normalizing a Gaussian triple.
pub fn sample_unit_vector3(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// A uniform point on the sphere `sum |beta_n|^2 = radius_sqr` in the
/// reduced space, by normalizing a complex Gaussian vector.
pub fn sample_reduced_sphere(rng: &mut impl Rng, dim: usize, radius_sqr: f64) -> ReducedPoint {
    loop {
        let raw: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm_sqr: f64 = raw.iter().map(|z| z.norm_sqr()).sum();
        if norm_sqr > 1e-24 {
            let scale = (radius_sqr / norm_sqr).sqrt();
            return ReducedPoint::new(raw.into_iter().map(|z| z * scale).collect())
                .expect("scaled Gaussian vector is finite");
        }
    }
}

//! Randomized update decisions shared by the adaptive and hybrid loops.
//!
//! Every decision consumes a fixed number of uniforms from the run's RNG so
//! two runs with the same seed make identical choices. Exposed so the
//! sampling schemes can be exercised with a frozen metric.

use rand::Rng;

/// `Z ~ Bernoulli(p)` from exactly one uniform draw. `p >= 1` always
/// succeeds and `p <= 0` never does.
#[inline]
pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    let u: f64 = rng.random();
    u < p
}

/// Adaptive sampling for one triplet: accept with probability `|l'|` and
/// return the step weight `tau = sign(l')` on acceptance.
pub fn adaptive_decision<R: Rng + ?Sized>(deriv: f64, rng: &mut R) -> Option<f64> {
    if bernoulli(rng, deriv.abs()) {
        Some(deriv.signum())
    } else {
        None
    }
}

/// Sampling probability from one uniformly chosen batch member.
///
/// The index draw happens before the Bernoulli draw. A single-element batch
/// has nothing to choose and consumes no randomness.
pub fn random_member_gamma<R: Rng + ?Sized>(derivs: &[f64], rng: &mut R) -> f64 {
    let s = if derivs.len() > 1 {
        rng.random_range(0..derivs.len())
    } else {
        0
    };
    derivs[s].abs()
}

/// Sampling probability from the batch gradient norm relative to `w`,
/// clipped to `[0, 1]`.
pub fn gradient_norm_gamma(grad_norm: f64, w: f64) -> f64 {
    (grad_norm / w).clamp(0.0, 1.0)
}

/// Accept with probability `gamma`; on acceptance return `tau = 1/gamma`.
/// Accepted draws with `gamma <= floor` are discarded.
pub fn hybrid_decision<R: Rng + ?Sized>(gamma: f64, floor: f64, rng: &mut R) -> Option<f64> {
    let z = bernoulli(rng, gamma.max(0.0));
    if z && gamma > floor {
        Some(1.0 / gamma)
    } else {
        None
    }
}

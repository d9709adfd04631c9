//! Closed-form single-spin solutions used for timescale matching and as
//! regression anchors for the dense solvers.

use crate::error::{Error, Result};

/// Classical single-spin density ⟨n_c(t)⟩ = κ + (n0 - κ) e^{-λt}.
pub fn classical_density(t: f64, lambda: f64, kappa: f64, n0: f64) -> f64 {
    kappa + (n0 - kappa) * (-lambda * t).exp()
}

/// The two quantum relaxation timescales of the unconstrained single spin,
/// (τ_q, τ'_q) = (2/λ, 1/(λ sin²θ)).
///
/// θ = 0 and θ = π are rejected: there the jump operator is Hermitian and the
/// completely mixed state becomes a second stationary state, so no finite
/// second timescale exists.
pub fn quantum_timescales(theta: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidSpec(format!("lambda must be > 0, got {lambda}")));
    }
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(Error::InvalidSpec(format!("theta must lie in [0, pi], got {theta}")));
    }
    let s = theta.sin();
    if s == 0.0 || theta == 0.0 || theta == std::f64::consts::PI {
        return Err(Error::DegenerateTimescales { theta });
    }
    Ok((2.0 / lambda, 1.0 / (lambda * s * s)))
}

/// Classical excluded-volume single-spin density in rescaled time,
/// ⟨n_c(t)⟩ = x²/(1+x²) [1 - e^{-tλ}], from the all-down initial state.
pub fn rydberg_classical_density(t: f64, x: f64, lambda: f64) -> f64 {
    let stationary = x * x / (1.0 + x * x);
    stationary * (1.0 - (-lambda * t).exp())
}

/// Effective-model single-spin density in rescaled time,
/// ⟨n_q(t)⟩ = x²/(1+x²) [1 + (1+x²)/(1-x²) e^{-t} - 2/(1-x²) e^{-t(1+x²)/2}],
/// from the all-down initial state.
///
/// At x = 1 the prefactors diverge but the limit exists,
/// n_q = (1/2)[1 - (1+t) e^{-t}]; for |1-x²| < 1e-4 a series in u = 1-x²
/// replaces the direct formula, which would lose all precision there.
pub fn rydberg_quantum_density(t: f64, x: f64) -> f64 {
    debug_assert!(t >= 0.0 && x > 0.0);
    let x2 = x * x;
    let stationary = x2 / (1.0 + x2);
    let u = 1.0 - x2;
    if u.abs() < 1e-4 {
        // bracket = 1 - e^{-t} (1 + t + Σ_{m≥2} 2 (t/2)^m u^{m-1} / m!)
        let half_t = 0.5 * t;
        let mut series = 1.0 + t;
        let mut power = half_t * half_t / 2.0; // (t/2)^m / m! at m = 2
        let mut u_pow = u; // u^{m-1}
        for m in 2..=6u32 {
            series += 2.0 * power * u_pow;
            power *= half_t / (m + 1) as f64;
            u_pow *= u;
        }
        stationary * (1.0 - (-t).exp() * series)
    } else {
        let fast = -(t * (1.0 + x2) / 2.0);
        stationary * (1.0 + (1.0 + x2) / u * (-t).exp() - 2.0 / u * fast.exp())
    }
}

/// Large-x limit form x²/(1+x²)(1 - e^{-t}) of the quantum density.
pub fn rydberg_quantum_density_limit(t: f64, x: f64) -> f64 {
    rydberg_classical_density(t, x, 1.0)
}

/// The classical bare rate that matches the quantum and classical
/// excluded-volume densities at short times, in rescaled units: λ = 1.
pub fn timescale_match_lambda() -> f64 {
    1.0
}

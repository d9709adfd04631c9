//! Quantum-jump Monte Carlo: no-jump propagation of exp(-G t/2) punctuated
//! by channel jumps at uniform norm-threshold crossings.
//!
//! Two no-jump engines back the same trajectory loop:
//!
//! * a spectral propagator (dense eigendecomposition of G, exact norm decay
//!   as a sum of exponentials, Newton/bisection crossing solve) whenever the
//!   state space fits the dense cap — every production model here does;
//! * an adaptive second-order contraction stepper with bisection refinement
//!   at the crossing, for state spaces beyond the cap.

use super::{EffectiveGenerator, JumpEvent, QuantumTrajectory, TrajectorySamples};
use crate::error::{Error, Result};
use crate::rng::{trajectory_rng, uniform_open01, TrajectorySeed};
use crate::spectral::{from_basis_c64, to_basis_c64, HermitianSpectrum, SymmetricSpectrum};
use crate::spin_space::{PureState, C64};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::sync::Arc;

/// Channel weights below this total flag the state as numerically dark.
const DARK_TOTAL_WEIGHT: f64 = 1e-18;

#[derive(Clone, Copy, Debug)]
pub struct StepControl {
    /// Crossing refinement: |‖ψ‖² - r| ≤ crossing_rtol · r.
    pub crossing_rtol: f64,
    /// Local relative norm error target per step (stepper path only).
    pub step_rtol: f64,
    /// Largest dimension handled by the spectral propagator.
    pub spectral_cap: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            crossing_rtol: 1e-10,
            step_rtol: 1e-8,
            spectral_cap: crate::spin_space::ORACLE_CAP,
        }
    }
}

enum GeneratorSpectrum {
    Real(SymmetricSpectrum),
    Complex(HermitianSpectrum),
}

impl GeneratorSpectrum {
    fn values(&self) -> &DVector<f64> {
        match self {
            Self::Real(s) => s.values(),
            Self::Complex(s) => s.values(),
        }
    }

    fn to_coeffs(&self, psi: &[C64]) -> Vec<C64> {
        match self {
            Self::Real(s) => to_basis_c64(s, psi),
            Self::Complex(s) => s.to_basis(psi),
        }
    }

    fn from_coeffs(&self, c: &[C64]) -> Vec<C64> {
        match self {
            Self::Real(s) => from_basis_c64(s, c),
            Self::Complex(s) => s.from_basis(c),
        }
    }
}

pub struct SpectralPropagator {
    spectrum: GeneratorSpectrum,
}

pub struct StepperPropagator {
    generator: EffectiveGenerator,
    rate_scale: f64,
}

/// No-jump evolution engine for exp(-G t/2).
pub enum NoJumpPropagator {
    Spectral(SpectralPropagator),
    Stepper(StepperPropagator),
}

pub(crate) enum SegmentOutcome {
    /// Norm crossed r at the returned relative time; `psi` holds the
    /// unnormalized state there.
    Jump { t_rel: f64 },
    /// Reached dt_max without a crossing.
    End,
}

impl NoJumpPropagator {
    pub fn build(generator: &EffectiveGenerator, ctrl: &StepControl) -> Result<Self> {
        if generator.dim() <= ctrl.spectral_cap {
            let dense = generator.dense()?;
            let dim = dense.nrows();
            let scale = dense.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
            let max_im = dense.iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
            let spectrum = if max_im <= 1e-12 * scale.max(1.0) {
                let mut sym = DMatrix::<f64>::zeros(dim, dim);
                for i in 0..dim {
                    for j in 0..dim {
                        sym[(i, j)] = 0.5 * (dense[(i, j)].re + dense[(j, i)].re);
                    }
                }
                GeneratorSpectrum::Real(SymmetricSpectrum::new(&sym, 1e-9 * scale.max(1.0))?)
            } else {
                let herm = (&dense + dense.adjoint()) * C64::new(0.5, 0.0);
                GeneratorSpectrum::Complex(HermitianSpectrum::new(&herm, 1e-9 * scale.max(1.0))?)
            };
            // G is PSD; reject genuinely negative modes, clamp roundoff.
            let g_max = spectrum.values().iter().fold(0.0f64, |m, &v| m.max(v));
            let g_min = spectrum.values().iter().fold(f64::INFINITY, |m, &v| m.min(v));
            if g_min < -1e-9 * g_max.max(1.0) {
                return Err(Error::InvalidSpec(format!(
                    "effective generator is not PSD: min eigenvalue {g_min:.3e}"
                )));
            }
            let spectrum = match spectrum {
                GeneratorSpectrum::Real(s) => {
                    let clamped = s.values().map(|v| v.max(0.0));
                    GeneratorSpectrum::Real(SymmetricSpectrum::from_parts(
                        clamped,
                        s.vectors().clone(),
                    ))
                }
                GeneratorSpectrum::Complex(s) => GeneratorSpectrum::Complex(s.with_clamped_values()),
            };
            Ok(Self::Spectral(SpectralPropagator { spectrum }))
        } else {
            Ok(Self::Stepper(StepperPropagator {
                generator: generator.clone(),
                rate_scale: generator.spectral_radius_estimate().max(1e-12),
            }))
        }
    }

    /// Evolve one no-jump segment from the normalized state in `psi`.
    ///
    /// `sample_offsets` are strictly increasing relative times ≤ dt_max; the
    /// callback receives (local offset index, unnormalized amplitudes,
    /// squared norm) for every offset not later than the crossing. Returns
    /// the outcome and how many offsets were consumed.
    pub(crate) fn run_segment(
        &self,
        psi: &mut Vec<C64>,
        r: f64,
        dt_max: f64,
        sample_offsets: &[f64],
        sample: &mut dyn FnMut(usize, &[C64], f64),
        ctrl: &StepControl,
    ) -> Result<(SegmentOutcome, usize)> {
        match self {
            Self::Spectral(p) => p.run_segment(psi, r, dt_max, sample_offsets, sample, ctrl),
            Self::Stepper(p) => p.run_segment(psi, r, dt_max, sample_offsets, sample, ctrl),
        }
    }
}

impl SpectralPropagator {
    fn run_segment(
        &self,
        psi: &mut Vec<C64>,
        r: f64,
        dt_max: f64,
        sample_offsets: &[f64],
        sample: &mut dyn FnMut(usize, &[C64], f64),
        ctrl: &StepControl,
    ) -> Result<(SegmentOutcome, usize)> {
        let coeffs = self.spectrum.to_coeffs(psi);
        let weights: Vec<f64> = coeffs.iter().map(|c| c.norm_sqr()).collect();
        let values = self.spectrum.values();

        let crossing = solve_crossing(&weights, values.as_slice(), r, dt_max, ctrl.crossing_rtol);
        let t_end = crossing.unwrap_or(dt_max);

        let mut consumed = 0;
        for (i, &off) in sample_offsets.iter().enumerate() {
            if off > t_end {
                break;
            }
            let amps = self.reconstruct(&coeffs, off);
            let norm_sq = norm_sq_at(&weights, values.as_slice(), off);
            sample(i, &amps, norm_sq);
            consumed = i + 1;
        }

        *psi = self.reconstruct(&coeffs, t_end);
        match crossing {
            Some(t_rel) => Ok((SegmentOutcome::Jump { t_rel }, consumed)),
            None => Ok((SegmentOutcome::End, consumed)),
        }
    }

    fn reconstruct(&self, coeffs: &[C64], tau: f64) -> Vec<C64> {
        let values = self.spectrum.values();
        let scaled: Vec<C64> = coeffs
            .iter()
            .zip(values.iter())
            .map(|(&c, &g)| c * (-0.5 * g * tau).exp())
            .collect();
        self.spectrum.from_coeffs(&scaled)
    }
}

fn norm_sq_at(weights: &[f64], values: &[f64], tau: f64) -> f64 {
    weights
        .iter()
        .zip(values)
        .map(|(&w, &g)| w * (-g * tau).exp())
        .sum()
}

fn norm_and_slope(weights: &[f64], values: &[f64], tau: f64) -> (f64, f64) {
    let mut s = 0.0;
    let mut ds = 0.0;
    for (&w, &g) in weights.iter().zip(values) {
        let e = w * (-g * tau).exp();
        s += e;
        ds -= g * e;
    }
    (s, ds)
}

/// Solve Σ w_i e^{-g_i τ} = r on [0, dt_max]. The norm is decreasing and
/// convex, so Newton from the left converges monotonically from below;
/// bisection backs it up. Returns None when no crossing occurs by dt_max.
fn solve_crossing(
    weights: &[f64],
    values: &[f64],
    r: f64,
    dt_max: f64,
    rtol: f64,
) -> Option<f64> {
    if norm_sq_at(weights, values, dt_max) > r {
        return None;
    }
    let tol = rtol * r;
    let mut t = 0.0f64;
    for _ in 0..200 {
        let (s, ds) = norm_and_slope(weights, values, t);
        if (s - r).abs() <= tol {
            return Some(t);
        }
        if s < r || ds >= 0.0 {
            break; // overshot or flat: bisection cleans up
        }
        let t_next = t + (s - r) / (-ds);
        if !(t_next > t) || t_next > dt_max {
            break;
        }
        t = t_next;
    }
    // Safeguarded bisection on [t, dt_max].
    let (mut lo, mut hi) = (t, dt_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s = norm_sq_at(weights, values, mid);
        if (s - r).abs() <= tol || (hi - lo) <= f64::EPSILON * hi.max(1.0) {
            return Some(mid);
        }
        if s > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Scratch buffers for the contraction stepper.
struct StepperBuffers {
    scratch: Vec<C64>,
    g1: Vec<C64>,
    g2: Vec<C64>,
    g3: Vec<C64>,
    trial: Vec<C64>,
}

impl StepperBuffers {
    fn new(dim: usize) -> Self {
        Self {
            scratch: vec![C64::ZERO; dim],
            g1: vec![C64::ZERO; dim],
            g2: vec![C64::ZERO; dim],
            g3: vec![C64::ZERO; dim],
            trial: vec![C64::ZERO; dim],
        }
    }
}

impl StepperPropagator {
    /// Second-order step exp(-G h/2) ψ ≈ ψ - (h/2)Gψ + (h²/8)G²ψ, with the
    /// third-order term as the local error estimate. Writes into
    /// `bufs.trial` and returns the estimate.
    fn taylor_step(&self, psi: &[C64], h: f64, bufs: &mut StepperBuffers) -> f64 {
        self.generator.apply(psi, &mut bufs.scratch, &mut bufs.g1);
        self.generator.apply(&bufs.g1, &mut bufs.scratch, &mut bufs.g2);
        self.generator.apply(&bufs.g2, &mut bufs.scratch, &mut bufs.g3);
        let half = 0.5 * h;
        for i in 0..psi.len() {
            bufs.trial[i] = psi[i] - half * bufs.g1[i] + (half * half / 2.0) * bufs.g2[i];
        }
        bufs.g3.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt() * half.powi(3) / 6.0
    }

    /// Fixed-resolution propagation over `tau` used inside the crossing
    /// bisection; several substeps push the step error well below the
    /// crossing tolerance.
    fn propagate_fixed(&self, start: &[C64], tau: f64, out: &mut Vec<C64>, bufs: &mut StepperBuffers) {
        const SUBSTEPS: usize = 8;
        out.clear();
        out.extend_from_slice(start);
        let h = tau / SUBSTEPS as f64;
        for _ in 0..SUBSTEPS {
            self.taylor_step(out, h, bufs);
            std::mem::swap(out, &mut bufs.trial);
        }
    }

    fn run_segment(
        &self,
        psi: &mut Vec<C64>,
        r: f64,
        dt_max: f64,
        sample_offsets: &[f64],
        sample: &mut dyn FnMut(usize, &[C64], f64),
        ctrl: &StepControl,
    ) -> Result<(SegmentOutcome, usize)> {
        let dim = psi.len();
        let mut bufs = StepperBuffers::new(dim);
        let mut work = vec![C64::ZERO; dim];
        let mut t = 0.0f64;
        let mut s_prev: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        let mut h = (0.5 / self.rate_scale).min(dt_max);
        let h_cap = 100.0 / self.rate_scale;
        let mut oi = 0usize;

        while t < dt_max * (1.0 - 1e-15) {
            let target = sample_offsets
                .get(oi)
                .copied()
                .unwrap_or(dt_max)
                .min(dt_max)
                .max(t);
            let mut h_step = h.min((target - t).max(h * 1e-6)).min(dt_max - t);

            let mut accepted = false;
            for _attempt in 0..80 {
                let err = self.taylor_step(psi, h_step, &mut bufs);
                let norm = bufs.trial.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                let tol = ctrl.step_rtol * norm.max(1e-300);
                if err <= tol {
                    accepted = true;
                    let grow = if err > 0.0 {
                        (0.9 * (tol / err).powf(1.0 / 3.0)).clamp(0.3, 5.0)
                    } else {
                        5.0
                    };
                    h = (h_step * grow).min(h_cap);
                    break;
                }
                h_step *= (0.5 * (tol / err).powf(1.0 / 3.0)).clamp(0.1, 0.5);
                h = h_step;
                if h_step < 1e-15 * dt_max.max(1.0) {
                    return Err(Error::StepUnderflow {
                        t,
                        detail: "no-jump contraction step collapsed".into(),
                    });
                }
            }
            if !accepted {
                return Err(Error::StepUnderflow {
                    t,
                    detail: "no-jump step rejected 80 times".into(),
                });
            }

            let s: f64 = bufs.trial.iter().map(|a| a.norm_sqr()).sum();
            if s > s_prev * (1.0 + 1e-9) {
                return Err(Error::Integration(format!(
                    "no-jump norm grew from {s_prev} to {s} at t = {t}"
                )));
            }

            if s < r {
                // Crossing inside (t, t + h_step]: bisect with a fixed
                // sub-stepped propagator from the pre-step state.
                let tol = ctrl.crossing_rtol.max(1e-12) * r;
                let (mut lo, mut hi) = (0.0f64, h_step);
                let mut sigma = hi;
                for _ in 0..200 {
                    sigma = 0.5 * (lo + hi);
                    self.propagate_fixed(psi, sigma, &mut work, &mut bufs);
                    let s_mid: f64 = work.iter().map(|a| a.norm_sqr()).sum();
                    if (s_mid - r).abs() <= tol || (hi - lo) <= f64::EPSILON * h_step {
                        break;
                    }
                    if s_mid > r {
                        lo = sigma;
                    } else {
                        hi = sigma;
                    }
                }
                self.propagate_fixed(psi, sigma, &mut work, &mut bufs);
                std::mem::swap(psi, &mut work);
                return Ok((SegmentOutcome::Jump { t_rel: t + sigma }, oi));
            }

            std::mem::swap(psi, &mut bufs.trial);
            t += h_step;
            s_prev = s;

            if oi < sample_offsets.len() && t >= sample_offsets[oi] * (1.0 - 1e-14) {
                sample(oi, psi, s);
                oi += 1;
            }
        }
        Ok((SegmentOutcome::End, oi))
    }
}

/// Run one quantum-jump trajectory on the output grid (the grid's last point
/// is t_max). Draw order per segment: the norm threshold r, then — at a
/// crossing — the channel selector.
pub fn qjmc_trajectory(
    ops: &[crate::spin_space::JumpOperator],
    init: &PureState,
    grid: &[f64],
    seed: TrajectorySeed,
    ctrl: &StepControl,
) -> Result<QuantumTrajectory> {
    let generator = EffectiveGenerator::new(ops.to_vec(), init.layout())?;
    let propagator = NoJumpPropagator::build(&generator, ctrl)?;
    qjmc_trajectory_with_propagator(
        &generator,
        &propagator,
        &Arc::new(init.clone()),
        grid,
        seed,
        ctrl,
    )
}

/// Trajectory loop against a prebuilt propagator (the ensemble runner shares
/// one eigendecomposition across trajectories).
pub fn qjmc_trajectory_with_propagator(
    generator: &EffectiveGenerator,
    propagator: &NoJumpPropagator,
    init: &Arc<PureState>,
    grid: &[f64],
    seed: TrajectorySeed,
    ctrl: &StepControl,
) -> Result<QuantumTrajectory> {
    if !init.is_normalized() {
        return Err(Error::Unnormalized {
            squared_norm: init.squared_norm(),
        });
    }
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSpec("grid must be strictly increasing".into()));
    }
    let layout = generator.layout();
    if init.layout() != layout {
        return Err(Error::DimensionMismatch {
            state_dim: init.dim(),
            expected: layout.dim(),
        });
    }
    let t_max = *grid.last().unwrap();
    let n_sites = layout.n_sites;
    let dim = layout.dim();
    let mut rng = trajectory_rng(seed);
    let mut samples = TrajectorySamples::with_grid(grid, n_sites);
    let mut site_buf = vec![0.0; n_sites];

    let mut psi: Vec<C64> = init.amplitudes().to_vec();
    let mut gi = 0usize;
    while gi < grid.len() && grid[gi] <= 0.0 {
        samples.push_state(&psi, layout, 1.0, &mut site_buf);
        gi += 1;
    }

    let mut t = 0.0f64;
    let mut events = Vec::new();
    let mut converged_dark = false;
    let mut channel_buf = vec![C64::ZERO; dim];
    let mut weights = vec![0.0f64; generator.ops().len()];

    while t < t_max && gi <= grid.len() {
        let r = uniform_open01(&mut rng);
        let dt_max = t_max - t;
        let offsets: Vec<f64> = grid[gi..].iter().map(|&g| g - t).collect();
        let (outcome, consumed) = propagator.run_segment(
            &mut psi,
            r,
            dt_max,
            &offsets,
            &mut |_, amps, norm_sq| samples.push_state(amps, layout, norm_sq, &mut site_buf),
            ctrl,
        )?;
        gi += consumed;
        match outcome {
            SegmentOutcome::End => break,
            SegmentOutcome::Jump { t_rel } => {
                t += t_rel;
                let norm_sq: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
                if norm_sq <= 0.0 {
                    return Err(Error::StepUnderflow {
                        t,
                        detail: "state annihilated at crossing".into(),
                    });
                }
                let inv = 1.0 / norm_sq.sqrt();
                for a in &mut psi {
                    *a *= inv;
                }

                let mut total = 0.0;
                for (op, w) in generator.ops().iter().zip(weights.iter_mut()) {
                    channel_buf.fill(C64::ZERO);
                    op.accumulate(layout, &psi, &mut channel_buf);
                    *w = channel_buf.iter().map(|a| a.norm_sqr()).sum();
                    total += *w;
                }
                if total <= DARK_TOTAL_WEIGHT {
                    converged_dark = true;
                    while gi < grid.len() {
                        samples.push_state(&psi, layout, 1.0, &mut site_buf);
                        gi += 1;
                    }
                    break;
                }
                debug_assert!(
                    (weights.iter().map(|w| w / total).sum::<f64>() - 1.0).abs() < 1e-12
                );
                let mut pick = rng.random::<f64>() * total;
                let mut channel = weights.len() - 1;
                for (k, &w) in weights.iter().enumerate() {
                    pick -= w;
                    if pick < 0.0 {
                        channel = k;
                        break;
                    }
                }
                channel_buf.fill(C64::ZERO);
                generator.ops()[channel].accumulate(layout, &psi, &mut channel_buf);
                let jump_norm: f64 = channel_buf.iter().map(|a| a.norm_sqr()).sum();
                if jump_norm <= 0.0 {
                    return Err(Error::StepUnderflow {
                        t,
                        detail: format!("selected channel {channel} annihilated the state"),
                    });
                }
                let inv = 1.0 / jump_norm.sqrt();
                for (p, b) in psi.iter_mut().zip(&channel_buf) {
                    *p = b * inv;
                }
                events.push(JumpEvent { time: t, channel });
            }
        }
    }
    debug_assert_eq!(gi, grid.len(), "all grid points must be sampled");

    Ok(QuantumTrajectory {
        seed,
        initial: Arc::clone(init),
        events,
        samples,
        converged_dark,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_zoo::{quantum_jump_operators, ClassicalKcmSpec, QuantumKcmSpec};
    use crate::observables::rho_mean_occupation;
    use crate::quantum_engine::{lindblad_solve_dense, quantum_ensemble, LindbladOptions};
    use crate::spin_space::{Boundary, ConstraintKind, DensityMatrix, SpinConfiguration};

    fn east_spec(n: usize, theta: f64, kappa: f64) -> QuantumKcmSpec {
        QuantumKcmSpec::new(
            ClassicalKcmSpec::new(1.0, kappa, ConstraintKind::East, n, Boundary::Periodic)
                .unwrap(),
            theta,
        )
        .unwrap()
    }

    #[test]
    fn dark_state_trajectory_never_jumps() {
        let spec = east_spec(4, std::f64::consts::FRAC_PI_2, 0.2);
        let ops = quantum_jump_operators(&spec);
        let init = spec.stationary_state();
        let grid: Vec<f64> = crate::grid::TimeGrid::log(0.1, 100.0, 15).unwrap().times();
        let traj = qjmc_trajectory(
            &ops,
            &init,
            &grid,
            TrajectorySeed::new(5, 0),
            &StepControl::default(),
        )
        .unwrap();
        assert!(traj.events.is_empty());
        for &d in &traj.samples.density {
            assert!((d - 0.2).abs() < 1e-10, "density drifted to {d}");
        }
        for &sx in &traj.samples.sigma_x {
            assert!((sx - 2.0 * (0.2f64 * 0.8).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn trajectory_is_deterministic_given_seed() {
        let spec = east_spec(4, std::f64::consts::FRAC_PI_4, 0.3);
        let ops = quantum_jump_operators(&spec);
        let init = crate::spin_space::PureState::basis_state(&SpinConfiguration::all_up(4));
        let grid: Vec<f64> = crate::grid::TimeGrid::log(0.1, 50.0, 11).unwrap().times();
        let seed = TrajectorySeed::new(42, 7);
        let a = qjmc_trajectory(&ops, &init, &grid, seed, &StepControl::default()).unwrap();
        let b = qjmc_trajectory(&ops, &init, &grid, seed, &StepControl::default()).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.samples.density, b.samples.density);
        assert!(!a.events.is_empty());
        assert!(a.events.windows(2).all(|w| w[0].time < w[1].time));
        assert!(a.events.iter().all(|ev| ev.channel < 4));
    }

    #[test]
    fn single_spin_ensemble_matches_dense_lindblad() {
        let kappa = 1.0 / 101.0;
        let spec = QuantumKcmSpec::new(
            ClassicalKcmSpec::new(
                1.0,
                kappa,
                ConstraintKind::Unconstrained,
                1,
                Boundary::Periodic,
            )
            .unwrap(),
            std::f64::consts::FRAC_PI_4,
        )
        .unwrap();
        let ops = quantum_jump_operators(&spec);
        let init = crate::spin_space::PureState::basis_state(&SpinConfiguration::all_up(1));
        let grid: Vec<f64> = crate::grid::TimeGrid::log(0.1, 50.0, 20).unwrap().times();
        let ens = quantum_ensemble(
            &ops,
            &init,
            &grid,
            10_000,
            2024,
            &StepControl::default(),
            false,
        )
        .unwrap();

        let rho0 = DensityMatrix::from_pure(&init);
        let dense = lindblad_solve_dense(&ops, &rho0, &grid, &LindbladOptions::default()).unwrap();
        let stderr = ens.density.stderr.as_ref().unwrap();
        let mut bad = 0;
        for (gi, rho) in dense.iter().enumerate() {
            let exact = rho_mean_occupation(rho);
            let se = stderr[gi].max(1e-9);
            let z = (ens.density.mean[gi] - exact).abs() / se;
            if z > 3.0 {
                bad += 1;
            }
            assert!(z < 5.0, "far outlier at grid {gi}: z = {z}");
        }
        assert!(bad <= 1, "{bad} of 20 grid points beyond 3 sigma");
    }

    #[test]
    fn stepper_agrees_with_spectral_propagator() {
        let spec = east_spec(4, 0.9, 0.3);
        let ops = quantum_jump_operators(&spec);
        let layout = spec.classical.layout();
        let generator = EffectiveGenerator::new(ops, layout).unwrap();
        let ctrl = StepControl::default();
        let spectral = NoJumpPropagator::build(&generator, &ctrl).unwrap();
        let forced_stepper = StepControl {
            spectral_cap: 0,
            step_rtol: 1e-10,
            ..ctrl
        };
        let stepper = NoJumpPropagator::build(&generator, &forced_stepper).unwrap();
        assert!(matches!(spectral, NoJumpPropagator::Spectral(_)));
        assert!(matches!(stepper, NoJumpPropagator::Stepper(_)));

        let init = crate::spin_space::PureState::basis_state(&SpinConfiguration::all_up(4));
        let offsets = [0.2, 1.0, 3.0];

        // pure contraction (r too small to cross): sampled states agree
        let run = |prop: &NoJumpPropagator| {
            let mut psi: Vec<C64> = init.amplitudes().to_vec();
            let mut sampled: Vec<(Vec<C64>, f64)> = Vec::new();
            let (outcome, consumed) = prop
                .run_segment(
                    &mut psi,
                    1e-15,
                    3.0,
                    &offsets,
                    &mut |_, amps, ns| sampled.push((amps.to_vec(), ns)),
                    &forced_stepper,
                )
                .unwrap();
            assert!(matches!(outcome, SegmentOutcome::End));
            assert_eq!(consumed, 3);
            sampled
        };
        let a = run(&spectral);
        let b = run(&stepper);
        for ((sa, na), (sb, nb)) in a.iter().zip(&b) {
            // per-step tolerance accumulates over the walk
            assert!((na - nb).abs() < 1e-5 * na.max(1e-12), "{na} vs {nb}");
            for (x, y) in sa.iter().zip(sb) {
                assert!((x - y).norm() < 1e-5);
            }
        }

        // crossing times agree
        let cross = |prop: &NoJumpPropagator| -> f64 {
            let mut psi: Vec<C64> = init.amplitudes().to_vec();
            match prop
                .run_segment(&mut psi, 0.5, 50.0, &[], &mut |_, _, _| {}, &forced_stepper)
                .unwrap()
            {
                (SegmentOutcome::Jump { t_rel }, _) => {
                    let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
                    assert!((norm - 0.5).abs() < 1e-5);
                    t_rel
                }
                _ => panic!("expected a crossing"),
            }
        };
        let ta = cross(&spectral);
        let tb = cross(&stepper);
        assert!((ta - tb).abs() < 1e-5 * ta, "{ta} vs {tb}");
    }

    #[test]
    fn ensemble_reduction_is_thread_invariant() {
        let spec = east_spec(3, std::f64::consts::FRAC_PI_2, 0.25);
        let ops = quantum_jump_operators(&spec);
        let init = crate::spin_space::PureState::basis_state(&SpinConfiguration::all_up(3));
        let grid = [0.5, 2.0, 10.0];
        let a = quantum_ensemble(&ops, &init, &grid, 48, 3, &StepControl::default(), false)
            .unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool
            .install(|| {
                quantum_ensemble(&ops, &init, &grid, 48, 3, &StepControl::default(), false)
            })
            .unwrap();
        assert_eq!(a.density.mean, b.density.mean);
        assert_eq!(a.sigma_x.mean, b.sigma_x.mean);
    }

    #[test]
    fn stationary_sigma_x_reached_in_ensemble() {
        // The unconstrained chain has ⊗|S⟩ as its only dark state, so the
        // ensemble must land on σˣ = 2 sqrt(κ(1-κ)) exactly. (Constrained
        // models also park weight on the all-down dark configuration, which
        // depresses the stationary coherence; see the acceptance suite.)
        let kappa = 0.25;
        let spec = QuantumKcmSpec::new(
            ClassicalKcmSpec::new(1.0, kappa, ConstraintKind::Unconstrained, 3, Boundary::Periodic)
                .unwrap(),
            std::f64::consts::FRAC_PI_2,
        )
        .unwrap();
        let ops = quantum_jump_operators(&spec);
        let init = crate::spin_space::PureState::basis_state(&SpinConfiguration::all_up(3));
        let grid = [1.0, 10.0, 200.0];
        let ens = quantum_ensemble(&ops, &init, &grid, 400, 11, &StepControl::default(), false)
            .unwrap();
        let target = 2.0 * (kappa * (1.0 - kappa)).sqrt();
        let last = *ens.sigma_x.mean.last().unwrap();
        let se = ens.sigma_x.stderr.as_ref().unwrap().last().unwrap().max(1e-4);
        assert!(
            (last - target).abs() < 4.0 * se,
            "sigma_x {last} vs stationary {target} (se {se})"
        );
    }
}

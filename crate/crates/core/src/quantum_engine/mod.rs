//! Quantum-jump Monte Carlo unraveling of the purely dissipative Lindblad
//! equation, plus dense Lindblad oracles (two-level effective and
//! three-level EIT).

mod lindblad;
mod qjmc;
mod waiting;

pub use lindblad::{lindblad_solve_dense, three_level_lindblad, LindbladOptions};
pub use qjmc::{
    qjmc_trajectory, qjmc_trajectory_with_propagator, NoJumpPropagator, StepControl,
};
pub use waiting::{inter_jump_waits, waiting_time_distribution, WaitingTimeHistogram};

use crate::error::{Error, Result};
use crate::observables::{raw_mean_occupation, raw_mean_sigma_x, raw_site_occupations};
use crate::rng::TrajectorySeed;
use crate::spin_space::{BasisLayout, JumpOperator, PureState, C64, ORACLE_CAP};
use crate::stats::{reduce_rows, SeriesStats};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::sync::Arc;

/// The PSD generator G = Σ_k J_k†J_k of the no-jump evolution
/// (H_eff = -i G / 2; the dynamics is purely dissipative, so G carries all
/// of it). Composable: applications run through the jump channels, dense
/// form only at oracle scale.
#[derive(Clone, Debug)]
pub struct EffectiveGenerator {
    ops: Arc<Vec<JumpOperator>>,
    layout: BasisLayout,
}

impl EffectiveGenerator {
    pub fn new(ops: Vec<JumpOperator>, layout: BasisLayout) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::InvalidSpec("at least one jump operator required".into()));
        }
        for op in &ops {
            op.validate(layout)?;
        }
        Ok(Self {
            ops: Arc::new(ops),
            layout,
        })
    }

    pub fn ops(&self) -> &[JumpOperator] {
        &self.ops
    }

    pub fn layout(&self) -> BasisLayout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// out = G · input (out is overwritten; scratch holds J·input per channel).
    pub fn apply(&self, input: &[C64], scratch: &mut [C64], out: &mut [C64]) {
        out.fill(C64::ZERO);
        for op in self.ops.iter() {
            scratch.fill(C64::ZERO);
            op.accumulate(self.layout, input, scratch);
            op.accumulate_dagger(self.layout, scratch, out);
        }
    }

    /// ⟨ψ|G|ψ⟩ / ⟨ψ|ψ⟩ = Σ_k ‖J_k ψ‖² / ‖ψ‖², the total jump rate.
    pub fn expectation(&self, state: &PureState) -> f64 {
        let mut scratch = vec![C64::ZERO; self.dim()];
        let mut total = 0.0;
        for op in self.ops.iter() {
            scratch.fill(C64::ZERO);
            op.accumulate(self.layout, state.amplitudes(), &mut scratch);
            total += scratch.iter().map(|a| a.norm_sqr()).sum::<f64>();
        }
        total / state.squared_norm()
    }

    /// Dense G at oracle scale, assembled column by column through the
    /// application kernels.
    pub fn dense(&self) -> Result<DMatrix<C64>> {
        let dim = self.dim();
        if dim > ORACLE_CAP {
            return Err(Error::OracleCapExceeded {
                size: dim,
                cap: ORACLE_CAP,
            });
        }
        let mut g = DMatrix::<C64>::zeros(dim, dim);
        let mut e = vec![C64::ZERO; dim];
        let mut scratch = vec![C64::ZERO; dim];
        let mut col = vec![C64::ZERO; dim];
        for j in 0..dim {
            e[j] = C64::ONE;
            self.apply(&e, &mut scratch, &mut col);
            for (i, &v) in col.iter().enumerate() {
                g[(i, j)] = v;
            }
            e[j] = C64::ZERO;
        }
        Ok(g)
    }

    /// Crude spectral-radius estimate of G by power iteration, used for
    /// explicit-integrator stability caps.
    pub fn spectral_radius_estimate(&self) -> f64 {
        let dim = self.dim();
        let mut v: Vec<C64> = (0..dim)
            .map(|i| C64::new(((i * 2654435761) % 1000) as f64 / 1000.0 + 0.1, 0.0))
            .collect();
        let mut scratch = vec![C64::ZERO; dim];
        let mut out = vec![C64::ZERO; dim];
        let mut estimate = 0.0;
        for _ in 0..25 {
            let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            for a in &mut v {
                *a /= norm;
            }
            self.apply(&v, &mut scratch, &mut out);
            estimate = out.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            std::mem::swap(&mut v, &mut out);
        }
        estimate
    }
}

/// One quantum jump: absolute time and channel index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: usize,
}

/// Observables sampled along one trajectory on the output grid,
/// in normalized trajectory states.
#[derive(Clone, Debug)]
pub struct TrajectorySamples {
    pub times: Vec<f64>,
    pub density: Vec<f64>,
    pub sigma_x: Vec<f64>,
    /// `site_density[site][grid index]`.
    pub site_density: Vec<Vec<f64>>,
}

impl TrajectorySamples {
    fn with_grid(times: &[f64], n_sites: usize) -> Self {
        Self {
            times: times.to_vec(),
            density: Vec::with_capacity(times.len()),
            sigma_x: Vec::with_capacity(times.len()),
            site_density: vec![Vec::with_capacity(times.len()); n_sites],
        }
    }

    fn push_state(&mut self, amps: &[C64], layout: BasisLayout, norm_sq: f64, site_buf: &mut [f64]) {
        self.density.push(raw_mean_occupation(amps, layout, norm_sq));
        self.sigma_x.push(raw_mean_sigma_x(amps, layout, norm_sq));
        raw_site_occupations(amps, layout, norm_sq, site_buf);
        for (site, &v) in site_buf.iter().enumerate() {
            self.site_density[site].push(v);
        }
    }
}

/// A seeded quantum-jump trajectory record.
#[derive(Clone, Debug)]
pub struct QuantumTrajectory {
    pub seed: TrajectorySeed,
    pub initial: Arc<PureState>,
    pub events: Vec<JumpEvent>,
    pub samples: TrajectorySamples,
    /// Set when a norm crossing fired but every channel weight was
    /// numerically zero; the state is then held fixed (it is dark).
    pub converged_dark: bool,
}

/// Ensemble statistics of a quantum-jump Monte Carlo run.
#[derive(Clone, Debug)]
pub struct QuantumEnsemble {
    pub grid: Vec<f64>,
    pub density: SeriesStats,
    pub sigma_x: SeriesStats,
    pub site_density: Vec<SeriesStats>,
    pub n_trajectories: usize,
    pub n_converged_dark: usize,
    pub trajectories: Option<Vec<QuantumTrajectory>>,
}

/// Run `n_traj` trajectories on streams `0..n_traj` of `master_seed`,
/// in parallel, reduced in trajectory-index order (equal-weight averages of
/// normalized-state expectations).
pub fn quantum_ensemble(
    ops: &[JumpOperator],
    init: &PureState,
    grid: &[f64],
    n_traj: usize,
    master_seed: u64,
    ctrl: &StepControl,
    keep_trajectories: bool,
) -> Result<QuantumEnsemble> {
    if n_traj == 0 {
        return Err(Error::InvalidSpec("n_traj must be at least 1".into()));
    }
    let generator = EffectiveGenerator::new(ops.to_vec(), init.layout())?;
    let propagator = NoJumpPropagator::build(&generator, ctrl)?;
    let init = Arc::new(init.clone());
    let trajectories: Vec<QuantumTrajectory> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            qjmc_trajectory_with_propagator(
                &generator,
                &propagator,
                &init,
                grid,
                TrajectorySeed::new(master_seed, i as u64),
                ctrl,
            )
        })
        .collect::<Result<_>>()?;

    let n_sites = init.n_sites();
    let density_rows: Vec<Vec<f64>> = trajectories.iter().map(|t| t.samples.density.clone()).collect();
    let sigma_rows: Vec<Vec<f64>> = trajectories.iter().map(|t| t.samples.sigma_x.clone()).collect();
    let site_stats: Vec<SeriesStats> = (0..n_sites)
        .map(|site| {
            let rows: Vec<Vec<f64>> = trajectories
                .iter()
                .map(|t| t.samples.site_density[site].clone())
                .collect();
            reduce_rows(&rows)
        })
        .collect();
    let n_converged_dark = trajectories.iter().filter(|t| t.converged_dark).count();
    Ok(QuantumEnsemble {
        grid: grid.to_vec(),
        density: reduce_rows(&density_rows),
        sigma_x: reduce_rows(&sigma_rows),
        site_density: site_stats,
        n_trajectories: n_traj,
        n_converged_dark,
        trajectories: keep_trajectories.then_some(trajectories),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_zoo::{
        quantum_jump_operators, ClassicalKcmSpec, QuantumKcmSpec,
    };
    use crate::spin_space::{Boundary, ConstraintKind};

    fn east_generator(n: usize) -> EffectiveGenerator {
        let spec = QuantumKcmSpec::new(
            ClassicalKcmSpec::new(1.0, 0.3, ConstraintKind::East, n, Boundary::Periodic).unwrap(),
            1.2,
        )
        .unwrap();
        let ops = quantum_jump_operators(&spec);
        EffectiveGenerator::new(ops, spec.classical.layout()).unwrap()
    }

    #[test]
    fn generator_is_psd_on_random_states() {
        let generator = east_generator(4);
        let dim = generator.dim();
        let mut rng_state = 123456789u64;
        let mut next = move || {
            rng_state = rng_state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((rng_state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for _ in 0..50 {
            let amps: Vec<C64> = (0..dim).map(|_| C64::new(next(), next())).collect();
            let state = PureState::from_amplitudes(amps, generator.layout())
                .unwrap()
                .normalized()
                .unwrap();
            assert!(generator.expectation(&state) >= -1e-12);
        }
    }

    #[test]
    fn dense_generator_matches_operator_products() {
        let generator = east_generator(3);
        let layout = generator.layout();
        let g = generator.dense().unwrap();
        let mut expected = DMatrix::<C64>::zeros(8, 8);
        for op in generator.ops() {
            let d = op.dense(layout).unwrap();
            expected += d.adjoint() * &d;
        }
        let dev = (&g - &expected).iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        assert!(dev < 1e-13, "deviation {dev}");
    }

    #[test]
    fn spectral_radius_estimate_is_close() {
        let generator = east_generator(4);
        let g = generator.dense().unwrap();
        let herm = DMatrix::<f64>::from_fn(16, 16, |i, j| g[(i, j)].re);
        let exact = herm
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        let est = generator.spectral_radius_estimate();
        assert!(est <= exact * 1.0001);
        assert!(est >= exact * 0.5, "estimate {est} vs exact {exact}");
    }
}

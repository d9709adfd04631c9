//! Classical dynamics: exact master-operator integration at oracle scale and
//! continuous-time Monte Carlo (Gillespie) trajectories with seeded,
//! reproducible parallel ensembles.

use crate::error::{Error, Result};
use crate::model_zoo::{
    classical_transitions, ClassicalKcmSpec, FlipDirection, RateTable,
};
use crate::ode::{integrate_to_times, OdeOptions};
use crate::rng::{trajectory_rng, uniform_open01, TrajectorySeed};
use crate::spectral::SymmetricSpectrum;
use crate::spin_space::SpinConfiguration;
use crate::stats::{reduce_rows, SeriesStats};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

/// Dense classical master operator W: off-diagonal entries are transition
/// rates, diagonal entries the negated escape rates, so every column sums to
/// zero.
#[derive(Clone, Debug)]
pub struct ClassicalMasterOperator {
    matrix: DMatrix<f64>,
}

impl ClassicalMasterOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn from_rate_table(table: &RateTable) -> Self {
        let n = table.n_states();
        let mut matrix = DMatrix::zeros(n, n);
        for from in 0..n {
            matrix[(from, from)] = -table.escape_rate(from);
            for to in 0..n {
                if to != from {
                    matrix[(to, from)] += table.rate(from, to);
                }
            }
        }
        Self { matrix }
    }

    /// Maximum column-sum magnitude; zero up to roundoff for a stochastic
    /// generator.
    pub fn column_defect(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|c| (0..n).map(|r| self.matrix[(r, c)]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

/// Assemble W for a KCM over the full configuration basis (2^N states).
pub fn build_master_operator(spec: &ClassicalKcmSpec) -> Result<ClassicalMasterOperator> {
    let table = RateTable::from_classical(spec)?;
    let w = ClassicalMasterOperator::from_rate_table(&table);
    let defect = w.column_defect();
    if defect > 1e-13 * spec.lambda * spec.n_sites as f64 {
        return Err(Error::Integration(format!(
            "master operator columns sum to {defect:.3e}, not zero"
        )));
    }
    Ok(w)
}

/// Integrate dP/dt = W P with the adaptive embedded scheme and return the
/// distribution at each requested time. Outputs are validated to stay
/// nonnegative within -1e-9 and normalized within 1e-9.
pub fn evolve_distribution(
    w: &ClassicalMasterOperator,
    p0: &[f64],
    times: &[f64],
) -> Result<Vec<DVector<f64>>> {
    validate_distribution(p0, w.dim())?;
    let y0 = DVector::from_column_slice(p0);
    // Explicit stepping is stability-limited by the largest escape rate.
    let max_escape = (0..w.dim())
        .map(|i| -w.matrix[(i, i)])
        .fold(0.0f64, f64::max);
    let opts = OdeOptions {
        rtol: 1e-8,
        atol: 1e-10,
        dt_max: (max_escape > 0.0).then(|| 2.0 / max_escape),
        ..OdeOptions::default()
    };
    let mut outputs = Vec::with_capacity(times.len());
    integrate_to_times(
        |y: &DVector<f64>, dy: &mut DVector<f64>| dy.gemv(1.0, &w.matrix, y, 0.0),
        &y0,
        times,
        &opts,
        |_, y| outputs.push(y.clone()),
    )?;
    for p in &outputs {
        check_output_distribution(p)?;
    }
    Ok(outputs)
}

/// Exact propagation through the detailed-balance similarity transform:
/// P(t) = D exp(-H t) D⁻¹ P(0) with D = diag(sqrt(p_eq)) and H the symmetric
/// Hermitian form. Preferred for stiff late-time runs; cost is one
/// eigendecomposition regardless of the time span.
pub fn evolve_distribution_spectral(
    w: &ClassicalMasterOperator,
    p_eq: &[f64],
    p0: &[f64],
    times: &[f64],
) -> Result<Vec<DVector<f64>>> {
    let n = w.dim();
    validate_distribution(p0, n)?;
    if p_eq.len() != n {
        return Err(Error::DimensionMismatch {
            state_dim: p_eq.len(),
            expected: n,
        });
    }
    // H = -D^{-1} W D, symmetric under detailed balance.
    let mut h = DMatrix::zeros(n, n);
    for c in 0..n {
        for r in 0..n {
            h[(r, c)] = -w.matrix[(r, c)] * (p_eq[c] / p_eq[r]).sqrt();
        }
    }
    let spectrum = SymmetricSpectrum::new(&h, 1e-8)?;
    let q0 = DVector::from_iterator(n, p0.iter().zip(p_eq).map(|(&p, &eq)| p / eq.sqrt()));
    let mut outputs = Vec::with_capacity(times.len());
    for &t in times {
        let q = spectrum.propagate(&q0, -t);
        let p = DVector::from_iterator(n, q.iter().zip(p_eq).map(|(&q, &eq)| q * eq.sqrt()));
        outputs.push(p);
    }
    Ok(outputs)
}

fn validate_distribution(p: &[f64], dim: usize) -> Result<()> {
    if p.len() != dim {
        return Err(Error::DimensionMismatch {
            state_dim: p.len(),
            expected: dim,
        });
    }
    if p.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidSpec("initial distribution has negative entries".into()));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidSpec(format!(
            "initial distribution sums to {sum}, not 1"
        )));
    }
    Ok(())
}

fn check_output_distribution(p: &DVector<f64>) -> Result<()> {
    let min = p.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if min < -1e-9 {
        return Err(Error::Integration(format!(
            "distribution went negative: min entry {min:.3e}"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Integration(format!(
            "probability leaked: sum = {sum:.12}"
        )));
    }
    Ok(())
}

/// One recorded flip event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicalEvent {
    pub time: f64,
    pub site: usize,
    pub direction: FlipDirection,
}

/// A seeded continuous-time Monte Carlo trajectory.
#[derive(Clone, Debug)]
pub struct ClassicalTrajectory {
    pub seed: TrajectorySeed,
    pub initial: SpinConfiguration,
    pub events: Vec<ClassicalEvent>,
    pub t_max: f64,
    /// Whether the walk entered a configuration with zero escape rate before
    /// `t_max` and froze there.
    pub halted: bool,
}

impl ClassicalTrajectory {
    /// Configuration at time `t` (events strictly after `t` ignored).
    pub fn configuration_at(&self, t: f64) -> SpinConfiguration {
        let mut config = self.initial.clone();
        for ev in &self.events {
            if ev.time > t {
                break;
            }
            let level = match ev.direction {
                FlipDirection::Up => 1,
                FlipDirection::Down => 0,
            };
            config.set_level(ev.site, level);
        }
        config
    }

    /// Per-site occupations sampled on a time grid by event replay:
    /// `out[site][grid index]`.
    pub fn site_occupation_series(&self, grid: &[f64]) -> Vec<Vec<f64>> {
        let n = self.initial.n_sites();
        let mut out = vec![vec![0.0; grid.len()]; n];
        let mut config = self.initial.clone();
        let mut ev_idx = 0;
        for (gi, &t) in grid.iter().enumerate() {
            while ev_idx < self.events.len() && self.events[ev_idx].time <= t {
                let ev = self.events[ev_idx];
                config.set_level(
                    ev.site,
                    match ev.direction {
                        FlipDirection::Up => 1,
                        FlipDirection::Down => 0,
                    },
                );
                ev_idx += 1;
            }
            for (site, row) in out.iter_mut().enumerate() {
                row[gi] = config.occupation(site);
            }
        }
        out
    }
}

/// Gillespie direct method: exponential waiting time at the total escape
/// rate, channel chosen proportionally to its rate. Deterministic for a
/// given seed; a configuration with zero escape rate halts the walk.
///
/// Draw order per step: first the waiting time, then the channel.
pub fn gillespie_trajectory(
    spec: &ClassicalKcmSpec,
    init: &SpinConfiguration,
    t_max: f64,
    seed: TrajectorySeed,
) -> Result<ClassicalTrajectory> {
    if t_max <= 0.0 {
        return Err(Error::InvalidSpec(format!("t_max must be > 0, got {t_max}")));
    }
    if init.n_sites() != spec.n_sites || init.local_dim() != 2 {
        return Err(Error::DimensionMismatch {
            state_dim: init.n_sites(),
            expected: spec.n_sites,
        });
    }
    let mut rng = trajectory_rng(seed);
    let mut config = init.clone();
    let mut t = 0.0;
    let mut events = Vec::new();
    let mut halted = false;
    loop {
        let transitions = classical_transitions(spec, &config)?;
        let total: f64 = transitions.iter().map(|tr| tr.rate).sum();
        if total <= 0.0 {
            halted = true;
            break;
        }
        t += -uniform_open01(&mut rng).ln() / total;
        if t > t_max {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut chosen = transitions.len() - 1;
        for (i, tr) in transitions.iter().enumerate() {
            target -= tr.rate;
            if target < 0.0 {
                chosen = i;
                break;
            }
        }
        let tr = transitions[chosen];
        config.set_level(
            tr.site,
            match tr.direction {
                FlipDirection::Up => 1,
                FlipDirection::Down => 0,
            },
        );
        events.push(ClassicalEvent {
            time: t,
            site: tr.site,
            direction: tr.direction,
        });
    }
    Ok(ClassicalTrajectory {
        seed,
        initial: init.clone(),
        events,
        t_max,
        halted,
    })
}

/// Ensemble statistics of a classical Monte Carlo run.
#[derive(Clone, Debug)]
pub struct ClassicalEnsemble {
    pub grid: Vec<f64>,
    pub density: SeriesStats,
    pub site_density: Vec<SeriesStats>,
    pub n_trajectories: usize,
    pub n_halted: usize,
    /// Full records, kept only on request.
    pub trajectories: Option<Vec<ClassicalTrajectory>>,
}

/// Run `n_traj` independent trajectories (streams `0..n_traj` of
/// `master_seed`) in parallel and reduce in trajectory-index order.
pub fn classical_ensemble(
    spec: &ClassicalKcmSpec,
    init: &SpinConfiguration,
    grid: &[f64],
    n_traj: usize,
    master_seed: u64,
    keep_trajectories: bool,
) -> Result<ClassicalEnsemble> {
    if n_traj == 0 {
        return Err(Error::InvalidSpec("n_traj must be at least 1".into()));
    }
    let t_max = grid.last().copied().unwrap_or(0.0);
    let trajectories: Vec<ClassicalTrajectory> = (0..n_traj)
        .into_par_iter()
        .map(|i| gillespie_trajectory(spec, init, t_max, TrajectorySeed::new(master_seed, i as u64)))
        .collect::<Result<_>>()?;

    let n_sites = spec.n_sites;
    let mut density_rows = Vec::with_capacity(n_traj);
    let mut site_rows: Vec<Vec<Vec<f64>>> = (0..n_sites).map(|_| Vec::with_capacity(n_traj)).collect();
    for traj in &trajectories {
        let per_site = traj.site_occupation_series(grid);
        let mut density = vec![0.0; grid.len()];
        for row in &per_site {
            for (d, v) in density.iter_mut().zip(row) {
                *d += v;
            }
        }
        for d in &mut density {
            *d /= n_sites as f64;
        }
        density_rows.push(density);
        for (site, row) in per_site.into_iter().enumerate() {
            site_rows[site].push(row);
        }
    }
    let n_halted = trajectories.iter().filter(|t| t.halted).count();
    Ok(ClassicalEnsemble {
        grid: grid.to_vec(),
        density: reduce_rows(&density_rows),
        site_density: site_rows.iter().map(|rows| reduce_rows(rows)).collect(),
        n_trajectories: n_traj,
        n_halted,
        trajectories: keep_trajectories.then_some(trajectories),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_zoo::classical_equilibrium;
    use crate::spin_space::{Boundary, ConstraintKind};
    use approx::assert_abs_diff_eq;

    fn single_spin_spec(kappa: f64) -> ClassicalKcmSpec {
        ClassicalKcmSpec::new(1.0, kappa, ConstraintKind::Unconstrained, 1, Boundary::Periodic)
            .unwrap()
    }

    #[test]
    fn master_operator_single_spin() {
        let w = build_master_operator(&single_spin_spec(0.3)).unwrap();
        let m = w.matrix();
        assert_abs_diff_eq!(m[(0, 0)], -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 0)], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 1)], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 1)], -0.7, epsilon = 1e-15);
    }

    #[test]
    fn east_absorbing_column_is_zero() {
        let spec =
            ClassicalKcmSpec::new(1.0, 0.4, ConstraintKind::East, 2, Boundary::Periodic).unwrap();
        let w = build_master_operator(&spec).unwrap();
        let empty = SpinConfiguration::all_down(2, 2).ordinal();
        for r in 0..4 {
            assert_eq!(w.matrix()[(r, empty)], 0.0);
        }
    }

    #[test]
    fn equilibrium_is_stationary_for_fa() {
        let spec =
            ClassicalKcmSpec::new(1.0, 0.3, ConstraintKind::Fa, 4, Boundary::Periodic).unwrap();
        let w = build_master_operator(&spec).unwrap();
        let p_eq = classical_equilibrium(&spec).unwrap();
        let p = DVector::from_column_slice(&p_eq);
        let residual = w.matrix() * p;
        // stationarity holds on the ergodic sector; the all-down column is
        // absorbing but also receives no flux, so W p_eq = 0 entirely
        for v in residual.iter() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn evolve_matches_single_spin_analytic() {
        let kappa = 0.3;
        let spec = single_spin_spec(kappa);
        let w = build_master_operator(&spec).unwrap();
        let times = [0.0, 0.2, 1.0, 3.0, 8.0];
        let out = evolve_distribution(&w, &[0.0, 1.0], &times).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let expected = crate::reference_solutions::classical_density(t, 1.0, kappa, 1.0);
            assert_abs_diff_eq!(out[i][1], expected, epsilon = 1e-8);
        }
        // t = 0 returns p0 exactly
        assert_eq!(out[0][0], 0.0);
        assert_eq!(out[0][1], 1.0);
    }

    #[test]
    fn spectral_path_agrees_with_adaptive_integration() {
        let spec =
            ClassicalKcmSpec::new(1.0, 0.2, ConstraintKind::East, 3, Boundary::Periodic).unwrap();
        let w = build_master_operator(&spec).unwrap();
        let p_eq = classical_equilibrium(&spec).unwrap();
        let mut p0 = vec![0.0; 8];
        p0[SpinConfiguration::all_up(3).ordinal()] = 1.0;
        let times = [0.0, 0.5, 2.0, 10.0, 50.0];
        let a = evolve_distribution(&w, &p0, &times).unwrap();
        let b = evolve_distribution_spectral(&w, &p_eq, &p0, &times).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            for (x, y) in pa.iter().zip(pb.iter()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn east_relaxes_to_equilibrium_on_reachable_sector() {
        let spec =
            ClassicalKcmSpec::new(1.0, 0.25, ConstraintKind::East, 3, Boundary::Periodic).unwrap();
        let w = build_master_operator(&spec).unwrap();
        let p_eq = classical_equilibrium(&spec).unwrap();
        let mut p0 = vec![0.0; 8];
        p0[SpinConfiguration::all_up(3).ordinal()] = 1.0;
        let out = evolve_distribution_spectral(&w, &p_eq, &p0, &[2000.0]).unwrap();
        // all-down is unreachable from all-up; equilibrium is p_eq
        // conditioned on the reachable sector
        let empty = SpinConfiguration::all_down(3, 2).ordinal();
        let sector_weight: f64 = (0..8).filter(|&i| i != empty).map(|i| p_eq[i]).sum();
        for i in 0..8 {
            let expected = if i == empty { 0.0 } else { p_eq[i] / sector_weight };
            assert_abs_diff_eq!(out[0][i], expected, epsilon = 1e-6);
        }
    }

    #[test]
    fn gillespie_is_deterministic_given_seed() {
        let spec =
            ClassicalKcmSpec::new(1.0, 0.3, ConstraintKind::Fa, 5, Boundary::Periodic).unwrap();
        let init = SpinConfiguration::all_up(5);
        let seed = TrajectorySeed::new(11, 4);
        let a = gillespie_trajectory(&spec, &init, 50.0, seed).unwrap();
        let b = gillespie_trajectory(&spec, &init, 50.0, seed).unwrap();
        assert_eq!(a.events, b.events);
        assert!(!a.events.is_empty());
        assert!(a.events.windows(2).all(|w| w[0].time < w[1].time));
    }

    #[test]
    fn gillespie_events_respect_constraints() {
        let spec =
            ClassicalKcmSpec::new(1.0, 0.4, ConstraintKind::East, 6, Boundary::Periodic).unwrap();
        let init = SpinConfiguration::all_up(6);
        let traj = gillespie_trajectory(&spec, &init, 30.0, TrajectorySeed::new(3, 0)).unwrap();
        let constraint = spec.constraint_spec();
        let mut config = init.clone();
        for ev in &traj.events {
            assert!(
                constraint.permits_config(&config, ev.site),
                "event at site {} not permitted by pre-configuration {config}",
                ev.site
            );
            config.set_level(
                ev.site,
                match ev.direction {
                    FlipDirection::Up => 1,
                    FlipDirection::Down => 0,
                },
            );
        }
    }

    #[test]
    fn east_from_empty_halts_immediately() {
        let spec =
            ClassicalKcmSpec::new(1.0, 0.3, ConstraintKind::East, 4, Boundary::Periodic).unwrap();
        let init = SpinConfiguration::all_down(4, 2);
        let traj = gillespie_trajectory(&spec, &init, 10.0, TrajectorySeed::new(0, 0)).unwrap();
        assert!(traj.events.is_empty());
        assert!(traj.halted);
    }

    #[test]
    fn first_up_flip_time_has_exponential_mean() {
        // single spin from 0: first Up event at rate lambda*kappa
        let kappa = 0.23;
        let spec = single_spin_spec(kappa);
        let init = SpinConfiguration::all_down(1, 2);
        let n = 4000;
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..n {
            let traj =
                gillespie_trajectory(&spec, &init, 1e4, TrajectorySeed::new(99, i)).unwrap();
            if let Some(first) = traj.events.first() {
                assert_eq!(first.direction, FlipDirection::Up);
                sum += first.time;
                count += 1;
            }
        }
        assert_eq!(count, n);
        let mean = sum / n as f64;
        let expected = 1.0 / kappa;
        let stderr = expected / (n as f64).sqrt();
        assert!(
            (mean - expected).abs() < 3.0 * stderr,
            "mean {mean}, expected {expected} ± {stderr}"
        );
    }

    #[test]
    fn ensemble_matches_exact_evolution() {
        // East N=6 from all-up: Gillespie ensemble density within 3 standard
        // errors of the exact master-equation density at every grid time.
        let spec = ClassicalKcmSpec::new(1.0, 0.35, ConstraintKind::East, 6, Boundary::Periodic)
            .unwrap();
        let init = SpinConfiguration::all_up(6);
        let grid: Vec<f64> = crate::grid::TimeGrid::log(0.1, 50.0, 12).unwrap().times();
        let ens = classical_ensemble(&spec, &init, &grid, 3000, 7, false).unwrap();

        let w = build_master_operator(&spec).unwrap();
        let mut p0 = vec![0.0; w.dim()];
        p0[init.ordinal()] = 1.0;
        let exact = evolve_distribution(&w, &p0, &grid).unwrap();
        let layout = spec.layout();
        for (gi, p) in exact.iter().enumerate() {
            let mut n_exact = 0.0;
            for (ord, &w) in p.iter().enumerate() {
                n_exact += w
                    * (0..6)
                        .filter(|&k| layout.level(ord, k) == 1)
                        .count() as f64;
            }
            n_exact /= 6.0;
            let se = ens.density.stderr.as_ref().unwrap()[gi].max(1e-6);
            let z = (ens.density.mean[gi] - n_exact).abs() / se;
            assert!(z < 4.0, "grid {gi}: z = {z}");
        }
    }

    #[test]
    fn ensemble_single_trajectory_has_no_stderr() {
        let spec = single_spin_spec(0.3);
        let init = SpinConfiguration::all_down(1, 2);
        let ens = classical_ensemble(&spec, &init, &[0.5, 1.0], 1, 5, false).unwrap();
        assert!(ens.density.stderr.is_none());
    }

    #[test]
    fn ensemble_reduction_is_thread_invariant() {
        let spec =
            ClassicalKcmSpec::new(1.0, 0.3, ConstraintKind::Fa, 4, Boundary::Periodic).unwrap();
        let init = SpinConfiguration::all_up(4);
        let grid = [0.5, 2.0, 8.0];
        let a = classical_ensemble(&spec, &init, &grid, 64, 17, false).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| classical_ensemble(&spec, &init, &grid, 64, 17, false)).unwrap();
        assert_eq!(a.density.mean, b.density.mean);
        assert_eq!(a.density.stderr, b.density.stderr);
    }
}

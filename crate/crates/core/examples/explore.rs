use qkcm::model_zoo::*;
use qkcm::quantum_engine::*;
use qkcm::spin_space::*;
use qkcm::observables::*;
use qkcm::grid::TimeGrid;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("dense4");
    let kappa = 1.0 / 101.0;
    match which {
        "dense4" => {
            // dense Lindblad East/FA N=4 to late times: stationary n, sigma_x
            for kind in [ConstraintKind::East, ConstraintKind::Fa] {
                let spec = QuantumKcmSpec::new(
                    ClassicalKcmSpec::new(1.0, kappa, kind, 4, Boundary::Periodic).unwrap(),
                    std::f64::consts::FRAC_PI_2,
                ).unwrap();
                let ops = quantum_jump_operators(&spec);
                let rho0 = DensityMatrix::from_pure(&PureState::basis_state(&SpinConfiguration::all_up(4)));
                let times = [1e2, 1e3, 1e4, 3e4];
                let t0 = Instant::now();
                let out = lindblad_solve_dense(&ops, &rho0, &times, &LindbladOptions::default()).unwrap();
                for (i, rho) in out.iter().enumerate() {
                    println!("{kind:?} N=4 t={:.0e}: n={:.6} sigma_x={:.6} (ideal n={:.6} sx={:.6})",
                        times[i], rho_mean_occupation(rho), rho_mean_sigma_x(rho),
                        kappa, 2.0*(kappa*(1.0-kappa)).sqrt());
                }
                println!("  dense solve took {:?}", t0.elapsed());
            }
        }
        traj => {
            // trajectory ensembles: "east10", "fa10", "east6", "east10p20"
            let (kind, n, theta, t_max, n_traj) = match traj {
                "east6" => (ConstraintKind::East, 6, std::f64::consts::FRAC_PI_2, 1e6, 400),
                "east10" => (ConstraintKind::East, 10, std::f64::consts::FRAC_PI_2, 1e7, 200),
                "east10p20" => (ConstraintKind::East, 10, std::f64::consts::PI/20.0, 1e6, 50),
                "fa10" => (ConstraintKind::Fa, 10, std::f64::consts::FRAC_PI_2, 1e7, 200),
                _ => panic!("unknown"),
            };
            let spec = QuantumKcmSpec::new(
                ClassicalKcmSpec::new(1.0, kappa, kind, n, Boundary::Periodic).unwrap(),
                theta,
            ).unwrap();
            let ops = quantum_jump_operators(&spec);
            let init = PureState::basis_state(&SpinConfiguration::all_up(n));
            let grid = TimeGrid::log(0.1, t_max, 57).unwrap().times();
            let t0 = Instant::now();
            let ens = quantum_ensemble(&ops, &init, &grid, n_traj, 12345, &StepControl::default(), true).unwrap();
            let elapsed = t0.elapsed();
            let trajs = ens.trajectories.as_ref().unwrap();
            let total_jumps: usize = trajs.iter().map(|t| t.events.len()).sum();
            let max_jumps = trajs.iter().map(|t| t.events.len()).max().unwrap();
            println!("# {traj}: {n_traj} trajectories in {elapsed:?}; jumps avg {:.1} max {max_jumps}",
                total_jumps as f64 / n_traj as f64);
            println!("# ideal: n={:.6} sx={:.6}", kappa, 2.0*(kappa*(1.0-kappa)).sqrt());
            println!("t,n,n_se,sx,sx_se");
            for (i, &t) in grid.iter().enumerate() {
                println!("{:.4e},{:.6},{:.2e},{:.6},{:.2e}", t,
                    ens.density.mean[i], ens.density.stderr.as_ref().unwrap()[i],
                    ens.sigma_x.mean[i], ens.sigma_x.stderr.as_ref().unwrap()[i]);
            }
        }
    }
}

use qkcm::model_zoo::*;
use qkcm::quantum_engine::*;
use qkcm::spin_space::*;
use qkcm::observables::*;
use nalgebra::DMatrix;

fn main() {
    let kappa = 1.0 / 101.0;
    let spec = QuantumKcmSpec::new(
        ClassicalKcmSpec::new(1.0, kappa, ConstraintKind::Fa, 4, Boundary::Periodic).unwrap(),
        std::f64::consts::FRAC_PI_2,
    ).unwrap();
    let ops = quantum_jump_operators(&spec);
    let layout = spec.classical.layout();
    let gen = EffectiveGenerator::new(ops.clone(), layout).unwrap();
    let g = gen.dense().unwrap();
    let sym = DMatrix::<f64>::from_fn(16, 16, |i,j| g[(i,j)].re);
    let eig = sym.symmetric_eigen();
    let exact: f64 = eig.eigenvalues.iter().fold(0.0f64, |m,&v| m.max(v.abs()));
    let est = gen.spectral_radius_estimate();
    println!("FA N=4: exact radius {exact}, power estimate {est}");
    // count dark dimension for East and FA at N=2..5
    for kind in [ConstraintKind::East, ConstraintKind::Fa] {
        for n in 2..=5usize {
            let spec = QuantumKcmSpec::new(
                ClassicalKcmSpec::new(1.0, kappa, kind, n, Boundary::Periodic).unwrap(),
                std::f64::consts::FRAC_PI_2,
            ).unwrap();
            let ops = quantum_jump_operators(&spec);
            let layout = spec.classical.layout();
            let gen = EffectiveGenerator::new(ops, layout).unwrap();
            let g = gen.dense().unwrap();
            let dim = layout.dim();
            let sym = DMatrix::<f64>::from_fn(dim, dim, |i,j| g[(i,j)].re);
            let eig = sym.symmetric_eigen();
            let zero_count = eig.eigenvalues.iter().filter(|&&v| v.abs() < 1e-10).count();
            let gmax: f64 = eig.eigenvalues.iter().fold(0.0f64, |m,&v| m.max(v));
            println!("{kind:?} N={n}: dark dimension {zero_count} of {dim}, g_max {gmax:.4}");
        }
    }
    // FA dense with explicit small dt_max via tighter options: watch trace growth
    let rho0 = DensityMatrix::from_pure(&PureState::basis_state(&SpinConfiguration::all_up(4)));
    for times in [[1e2], [1e3], [3e3]] {
        match lindblad_solve_dense(&ops, &rho0, &times, &LindbladOptions::default()) {
            Ok(out) => println!("FA t={:.0e}: n={:.6} sx={:.6} trace={:.3e}", times[0],
                rho_mean_occupation(&out[0]), rho_mean_sigma_x(&out[0]), (out[0].trace() - C64::ONE).norm()),
            Err(e) => println!("FA t={:.0e}: ERROR {e}", times[0]),
        }
    }
}

use qkcm::model_zoo::*;
use qkcm::quantum_engine::*;
use qkcm::spin_space::*;
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

    // direct RHS trace probe: build dense JρJ† − ½{J†J,ρ} from dense ops
    let rho0 = DensityMatrix::from_pure(&PureState::basis_state(&SpinConfiguration::all_up(4)));
    let dim = 16;
    let mut rhs_dense = DMatrix::<C64>::zeros(dim, dim);
    for op in gen.ops() {
        let j = op.dense(layout).unwrap();
        let jr = &j * rho0.matrix();
        let jrjt = &jr * j.adjoint();
        let k = j.adjoint() * &j;
        let kr = &k * rho0.matrix();
        let rk = rho0.matrix() * &k;
        rhs_dense += jrjt - (kr + rk) * C64::new(0.5, 0.0);
    }
    let tr: C64 = rhs_dense.diagonal().iter().sum();
    println!("dense-route Tr(RHS(rho0)) = {:.3e}", tr.norm());

    // trace drift profile over time
    let times = [100.0, 300.0, 600.0, 1000.0, 1500.0, 2000.0, 2500.0, 3000.0];
    match lindblad_solve_dense(&ops, &rho0, &times, &LindbladOptions::default()) {
        Ok(out) => for (i, r) in out.iter().enumerate() {
            println!("t={}: trace err {:.3e}", times[i], (r.trace() - C64::ONE).norm());
        },
        Err(e) => println!("ERROR: {e}"),
    }
}

//! Model constructors: classical rates and quantum jump operators for the
//! unconstrained, East, Fredrickson–Andersen, excluded-volume and Rydberg-EIT
//! chains, plus the generic detailed-balance jump-operator construction and
//! its Hermitian-form oracle.
//!
//! Conventions shared by every model:
//!
//! * classical flips: J_up = sqrt(λκ) f_k σ_k⁺, J_down = sqrt(λ(1-κ)) f_k σ_k⁻;
//! * quantum channels: J_k = sqrt(λ) U_k |B_k⟩⟨B_k| f_k with
//!   |B_k⟩ = sqrt(κ)|0⟩ - sqrt(1-κ)|1⟩ and U_k = exp(iθσ_k^y);
//! * the stationary product state ⊗|S_k⟩, |S_k⟩ = sqrt(1-κ)|0⟩ + sqrt(κ)|1⟩,
//!   is orthogonal to |B_k⟩ and is annihilated by every J_k.

use crate::error::{Error, Result};
use crate::spin_space::{
    Boundary, ConstraintKind, ConstraintSpec, JumpOperator, LocalAction, LocalOperator, PureState,
    SpinConfiguration, C64, ORACLE_CAP,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Classical kinetically constrained model: single-spin-flip rates λκ f_k
/// (up) and λ(1-κ) f_k (down) on an N-site chain.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ClassicalKcmSpec {
    /// Bare jump rate (1/time).
    pub lambda: f64,
    /// Equilibrium occupation, strictly inside (0, 1).
    pub kappa: f64,
    pub constraint: ConstraintKind,
    pub n_sites: usize,
    pub boundary: Boundary,
}

impl ClassicalKcmSpec {
    pub fn new(
        lambda: f64,
        kappa: f64,
        constraint: ConstraintKind,
        n_sites: usize,
        boundary: Boundary,
    ) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidSpec(format!("lambda must be > 0, got {lambda}")));
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "kappa must lie strictly inside (0,1), got {kappa}"
            )));
        }
        crate::spin_space::BasisLayout::new(n_sites, 2)?;
        Ok(Self {
            lambda,
            kappa,
            constraint,
            n_sites,
            boundary,
        })
    }

    /// Build from the occupation ratio r = κ/(1-κ), the parametrisation the
    /// figures quote (κ = r/(1+r)).
    pub fn with_kappa_ratio(
        lambda: f64,
        ratio: f64,
        constraint: ConstraintKind,
        n_sites: usize,
        boundary: Boundary,
    ) -> Result<Self> {
        if !(ratio > 0.0) {
            return Err(Error::InvalidSpec(format!("kappa ratio must be > 0, got {ratio}")));
        }
        Self::new(lambda, ratio / (1.0 + ratio), constraint, n_sites, boundary)
    }

    pub fn constraint_spec(&self) -> ConstraintSpec {
        ConstraintSpec::new(self.constraint, self.boundary)
    }

    pub fn layout(&self) -> crate::spin_space::BasisLayout {
        crate::spin_space::BasisLayout {
            n_sites: self.n_sites,
            local_dim: 2,
        }
    }
}

/// Quantum KCM: same (λ, κ, f_k) as the classical model plus the rotation
/// angle θ of the free unitary U_k = exp(iθσ_k^y).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuantumKcmSpec {
    #[serde(flatten)]
    pub classical: ClassicalKcmSpec,
    /// Rotation angle in [0, π].
    pub theta: f64,
}

impl QuantumKcmSpec {
    pub fn new(classical: ClassicalKcmSpec, theta: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::PI).contains(&theta) {
            return Err(Error::InvalidSpec(format!(
                "theta must lie in [0, pi], got {theta}"
            )));
        }
        Ok(Self { classical, theta })
    }

    /// U = exp(iθσ^y) as a real rotation matrix.
    pub fn unitary(&self) -> [[C64; 2]; 2] {
        rotation_y(self.theta)
    }

    pub fn stationary_state(&self) -> PureState {
        stationary_product_state(self.classical.kappa, self.classical.n_sites)
    }
}

/// exp(iθσ^y) = [[cosθ, sinθ], [-sinθ, cosθ]].
pub fn rotation_y(theta: f64) -> [[C64; 2]; 2] {
    let c = C64::new(theta.cos(), 0.0);
    let s = C64::new(theta.sin(), 0.0);
    [[c, s], [-s, c]]
}

/// |B⟩ = sqrt(κ)|0⟩ - sqrt(1-κ)|1⟩.
pub fn b_state(kappa: f64) -> [C64; 2] {
    [
        C64::new(kappa.sqrt(), 0.0),
        C64::new(-(1.0 - kappa).sqrt(), 0.0),
    ]
}

/// |S⟩ = sqrt(1-κ)|0⟩ + sqrt(κ)|1⟩, the single-site stationary state.
pub fn s_state(kappa: f64) -> [C64; 2] {
    [
        C64::new((1.0 - kappa).sqrt(), 0.0),
        C64::new(kappa.sqrt(), 0.0),
    ]
}

/// Rydberg lattice gas under EIT conditions. The effective two-level layer
/// (levels g, r) is parametrised by x = Ω_p/Ω_c alone, in time units of
/// γ/(4Ω_c²); the full three-level layer carries the raw frequencies.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RydbergSpec {
    /// Drive ratio x = Ω_p/Ω_c.
    pub x: f64,
    pub n_sites: usize,
    pub boundary: Boundary,
    pub three_level: Option<ThreeLevelParams>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ThreeLevelParams {
    /// Control Rabi frequency Ω_c (couples p–r).
    pub omega_c: f64,
    /// Probe Rabi frequency Ω_p (couples g–p).
    pub omega_p: f64,
    /// Decay rate γ of the intermediate level p.
    pub gamma: f64,
    /// Nearest-neighbour rr interaction strength V.
    pub v: f64,
}

impl RydbergSpec {
    pub fn effective(x: f64, n_sites: usize, boundary: Boundary) -> Result<Self> {
        if !(x > 0.0) {
            return Err(Error::InvalidSpec(format!("x must be > 0, got {x}")));
        }
        crate::spin_space::BasisLayout::new(n_sites, 2)?;
        Ok(Self {
            x,
            n_sites,
            boundary,
            three_level: None,
        })
    }

    pub fn with_three_level(
        n_sites: usize,
        boundary: Boundary,
        params: ThreeLevelParams,
    ) -> Result<Self> {
        if !(params.omega_c > 0.0 && params.omega_p > 0.0 && params.gamma > 0.0 && params.v >= 0.0)
        {
            return Err(Error::InvalidSpec(
                "three-level parameters must be positive".into(),
            ));
        }
        let x = params.omega_p / params.omega_c;
        let mut spec = Self::effective(x, n_sites, boundary)?;
        spec.three_level = Some(params);
        Ok(spec)
    }

    /// Occupation κ = x²/(1+x²) of the small-x KCM reduction.
    pub fn small_x_kappa(&self) -> f64 {
        self.x * self.x / (1.0 + self.x * self.x)
    }

    /// Product stationary state of the small-x reduced model.
    pub fn small_x_stationary_state(&self) -> PureState {
        stationary_product_state(self.small_x_kappa(), self.n_sites)
    }

    /// Rescaled time unit: one effective time unit equals γ/(4Ω_c²) raw time.
    pub fn time_rescale(&self) -> Option<f64> {
        self.three_level
            .map(|p| p.gamma / (4.0 * p.omega_c * p.omega_c))
    }
}

/// Direction of a classical spin flip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipDirection {
    Up,
    Down,
}

/// One allowed classical transition out of a configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicalTransition {
    pub site: usize,
    pub direction: FlipDirection,
    pub rate: f64,
}

/// Enumerate the allowed single-spin-flip transitions out of `config` with
/// their rates λκ f_k (up from n_k = 0) and λ(1-κ) f_k (down from n_k = 1).
pub fn classical_transitions(
    spec: &ClassicalKcmSpec,
    config: &SpinConfiguration,
) -> Result<Vec<ClassicalTransition>> {
    if config.n_sites() != spec.n_sites || config.local_dim() != 2 {
        return Err(Error::DimensionMismatch {
            state_dim: config.n_sites(),
            expected: spec.n_sites,
        });
    }
    let constraint = spec.constraint_spec();
    let mut out = Vec::new();
    for site in 0..spec.n_sites {
        if !constraint.permits_config(config, site) {
            continue;
        }
        let (direction, rate) = if config.is_excited(site) {
            (FlipDirection::Down, spec.lambda * (1.0 - spec.kappa))
        } else {
            (FlipDirection::Up, spec.lambda * spec.kappa)
        };
        if rate > 0.0 {
            out.push(ClassicalTransition { site, direction, rate });
        }
    }
    Ok(out)
}

/// One non-classical jump operator per site,
/// J_k = sqrt(λ) U_k |B_k⟩⟨B_k| f_k.
pub fn quantum_jump_operators(spec: &QuantumKcmSpec) -> Vec<JumpOperator> {
    quantum_jump_operators_with_unitary(&spec.classical, &spec.unitary())
}

/// Same construction with an arbitrary single-site unitary in place of the
/// y-rotation.
pub fn quantum_jump_operators_with_unitary(
    spec: &ClassicalKcmSpec,
    unitary: &[[C64; 2]; 2],
) -> Vec<JumpOperator> {
    let b = b_state(spec.kappa);
    let ub = [
        unitary[0][0] * b[0] + unitary[0][1] * b[1],
        unitary[1][0] * b[0] + unitary[1][1] * b[1],
    ];
    let action = LocalAction::outer(&ub, &b);
    let prefactor = C64::new(spec.lambda.sqrt(), 0.0);
    (0..spec.n_sites)
        .map(|site| {
            JumpOperator::single(LocalOperator::new(
                site,
                action,
                spec.constraint_spec(),
                prefactor,
            ))
        })
        .collect()
}

/// Effective Rydberg jump operators J_k = x p_k - p_{k-1} σ_k⁻ p_{k+1}
/// in rescaled time units (two-level sites g, r).
pub fn rydberg_jump_operators(spec: &RydbergSpec) -> Vec<JumpOperator> {
    let excluded = ConstraintSpec::new(ConstraintKind::ExcludedVolume, spec.boundary);
    (0..spec.n_sites)
        .map(|site| {
            JumpOperator::new(vec![
                LocalOperator::unconstrained(
                    site,
                    LocalAction::ground_projector(2),
                    C64::new(spec.x, 0.0),
                ),
                LocalOperator::new(site, LocalAction::sigma_minus(), excluded, -C64::ONE),
            ])
        })
        .collect()
}

/// ⊗_k (sqrt(1-κ)|0⟩ + sqrt(κ)|1⟩), normalized.
pub fn stationary_product_state(kappa: f64, n_sites: usize) -> PureState {
    let factor: Vec<C64> = s_state(kappa).to_vec();
    PureState::product_state(&vec![factor; n_sites], 2)
        .expect("product state construction cannot fail for valid kappa")
}

/// Product Bernoulli equilibrium p_eq(C) = Π_k κ^{n_k}(1-κ)^{1-n_k},
/// verified against [`classical_transitions`] for detailed balance.
pub fn classical_equilibrium(spec: &ClassicalKcmSpec) -> Result<Vec<f64>> {
    let layout = spec.layout();
    let dim = layout.dim();
    if dim > ORACLE_CAP {
        return Err(Error::OracleCapExceeded {
            size: dim,
            cap: ORACLE_CAP,
        });
    }
    let mut p = Vec::with_capacity(dim);
    for ordinal in 0..dim {
        let ones = ordinal.count_ones() as i32;
        let zeros = spec.n_sites as i32 - ones;
        p.push(spec.kappa.powi(ones) * (1.0 - spec.kappa).powi(zeros));
    }
    let table = RateTable::from_classical(spec)?;
    table.check_detailed_balance(&p, 1e-12)?;
    Ok(p)
}

/// Ground state Σ_C sqrt(p_eq(C)) |C⟩ of the Hermitian form; the dark state
/// of every generic jump operator.
pub fn detailed_balance_ground_state(p_eq: &[f64]) -> Vec<f64> {
    p_eq.iter().map(|&p| p.sqrt()).collect()
}

/// Full transition-rate table W_{C→C'} over configuration ordinals
/// (oracle scale only).
#[derive(Clone, Debug)]
pub struct RateTable {
    n_states: usize,
    rates: Vec<f64>,
}

impl RateTable {
    pub fn new(n_states: usize) -> Self {
        Self {
            n_states,
            rates: vec![0.0; n_states * n_states],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[from * self.n_states + to]
    }

    pub fn set_rate(&mut self, from: usize, to: usize, rate: f64) {
        debug_assert_ne!(from, to);
        self.rates[from * self.n_states + to] = rate;
    }

    /// Escape rate R_C = Σ_{C'} W_{C→C'}.
    pub fn escape_rate(&self, from: usize) -> f64 {
        self.rates[from * self.n_states..(from + 1) * self.n_states]
            .iter()
            .sum()
    }

    /// Enumerate all rates of a classical KCM over the full basis.
    pub fn from_classical(spec: &ClassicalKcmSpec) -> Result<Self> {
        let layout = spec.layout();
        let dim = layout.dim();
        if dim > ORACLE_CAP {
            return Err(Error::OracleCapExceeded {
                size: dim,
                cap: ORACLE_CAP,
            });
        }
        let mut table = Self::new(dim);
        let mut config = SpinConfiguration::all_down(spec.n_sites, 2);
        for ordinal in 0..dim {
            config.decode_from(ordinal);
            for tr in classical_transitions(spec, &config)? {
                let target = ordinal ^ (1 << tr.site);
                table.set_rate(ordinal, target, tr.rate);
            }
        }
        Ok(table)
    }

    /// Verify p_eq(C) W_{C→C'} = p_eq(C') W_{C'→C} for every pair.
    pub fn check_detailed_balance(&self, p_eq: &[f64], tol: f64) -> Result<()> {
        for from in 0..self.n_states {
            for to in (from + 1)..self.n_states {
                let flux_fwd = p_eq[from] * self.rate(from, to);
                let flux_bwd = p_eq[to] * self.rate(to, from);
                let residual = (flux_fwd - flux_bwd).abs();
                if residual > tol * (1.0 + flux_fwd.abs() + flux_bwd.abs()) {
                    return Err(Error::DetailedBalanceViolation { from, to, residual });
                }
            }
        }
        Ok(())
    }
}

/// Dense jump operator J_μ = |ψ⟩ (sqrt(W_{C→C'}) ⟨C| - sqrt(W_{C'→C}) ⟨C'|)
/// for one ordered pair μ = (C, C').
#[derive(Clone, Debug)]
pub struct GenericJumpOperator {
    psi: Vec<C64>,
    pub from: usize,
    pub to: usize,
    sqrt_w_forward: f64,
    sqrt_w_backward: f64,
}

impl GenericJumpOperator {
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let coeff = self.sqrt_w_forward * v[self.from] - self.sqrt_w_backward * v[self.to];
        self.psi.iter().map(|&p| p * coeff).collect()
    }

    pub fn apply_real(&self, v: &[f64]) -> Vec<C64> {
        let coeff = self.sqrt_w_forward * v[self.from] - self.sqrt_w_backward * v[self.to];
        self.psi.iter().map(|&p| p * coeff).collect()
    }

    pub fn dense(&self) -> DMatrix<C64> {
        let n = self.psi.len();
        let mut m = DMatrix::zeros(n, n);
        for (row, &p) in self.psi.iter().enumerate() {
            m[(row, self.from)] += p * self.sqrt_w_forward;
            m[(row, self.to)] -= p * self.sqrt_w_backward;
        }
        m
    }

    /// Add J_μ†J_μ (real for real rates, ψ-independent for normalized ψ)
    /// scaled by `weight` into `acc`.
    pub fn accumulate_jtj(&self, acc: &mut DMatrix<f64>, weight: f64) {
        let wf = self.sqrt_w_forward * self.sqrt_w_forward;
        let wb = self.sqrt_w_backward * self.sqrt_w_backward;
        let cross = self.sqrt_w_forward * self.sqrt_w_backward;
        let norm: f64 = self.psi.iter().map(|p| p.norm_sqr()).sum();
        acc[(self.from, self.from)] += weight * norm * wf;
        acc[(self.to, self.to)] += weight * norm * wb;
        acc[(self.from, self.to)] -= weight * norm * cross;
        acc[(self.to, self.from)] -= weight * norm * cross;
    }
}

/// Build one dense jump operator per ordered pair (C, C') with
/// W_{C→C'} > 0, after checking detailed balance of the rate table against
/// `p_eq` (within 1e-10). Zero-rate pairs emit nothing.
pub fn generic_jump_operators(
    rates: &RateTable,
    p_eq: &[f64],
    psi: &PureState,
) -> Result<Vec<GenericJumpOperator>> {
    if psi.dim() != rates.n_states() {
        return Err(Error::DimensionMismatch {
            state_dim: psi.dim(),
            expected: rates.n_states(),
        });
    }
    if !psi.is_normalized() {
        return Err(Error::Unnormalized {
            squared_norm: psi.squared_norm(),
        });
    }
    rates.check_detailed_balance(p_eq, 1e-10)?;
    let mut out = Vec::new();
    for from in 0..rates.n_states() {
        for to in 0..rates.n_states() {
            if from == to {
                continue;
            }
            let w_fwd = rates.rate(from, to);
            if w_fwd <= 0.0 {
                continue;
            }
            out.push(GenericJumpOperator {
                psi: psi.amplitudes().to_vec(),
                from,
                to,
                sqrt_w_forward: w_fwd.sqrt(),
                sqrt_w_backward: rates.rate(to, from).sqrt(),
            });
        }
    }
    Ok(out)
}

/// Hermitian form ℍ = -P⁻¹ W P of the master operator, with
/// P = diag(sqrt(p_eq)).
///
/// Also assembles (1/2) Σ_μ J_μ†J_μ over ordered pairs from
/// [`generic_jump_operators`] and verifies elementwise agreement below 1e-10;
/// the two routes constitute independent oracles of each other.
pub fn hermitian_form(rates: &RateTable, p_eq: &[f64]) -> Result<DMatrix<f64>> {
    let n = rates.n_states();
    if p_eq.len() != n {
        return Err(Error::DimensionMismatch {
            state_dim: p_eq.len(),
            expected: n,
        });
    }
    rates.check_detailed_balance(p_eq, 1e-10)?;

    // Similarity-transform route.
    let mut h = DMatrix::<f64>::zeros(n, n);
    for from in 0..n {
        h[(from, from)] = rates.escape_rate(from);
        for to in 0..n {
            if to == from {
                continue;
            }
            let w = rates.rate(from, to);
            if w > 0.0 {
                h[(to, from)] = -w * (p_eq[from] / p_eq[to]).sqrt();
            }
        }
    }
    let mut sym_dev = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            sym_dev = sym_dev.max((h[(i, j)] - h[(j, i)]).abs());
        }
    }
    if sym_dev > 1e-10 {
        return Err(Error::NotHermitian { deviation: sym_dev });
    }

    // Jump-operator route: (1/2) Σ over ordered pairs.
    let layout = crate::spin_space::BasisLayout {
        n_sites: 1,
        local_dim: 2,
    };
    let psi = if n == 2 {
        PureState::basis_state(&SpinConfiguration::from_ordinal(0, layout))
    } else {
        // any normalized reference state; J†J does not depend on it
        let mut amps = vec![C64::ZERO; n];
        amps[0] = C64::ONE;
        PureState::from_amplitudes(amps, dense_layout_for(n)?)?
    };
    let ops = generic_jump_operators(rates, p_eq, &psi)?;
    let mut h_jump = DMatrix::<f64>::zeros(n, n);
    for op in &ops {
        op.accumulate_jtj(&mut h_jump, 0.5);
    }
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((h[(i, j)] - h_jump[(i, j)]).abs());
        }
    }
    if dev > 1e-10 {
        return Err(Error::HermitianFormMismatch { deviation: dev });
    }
    Ok(h)
}

/// Smallest two-level layout whose dimension is at least `n`; the state is
/// only a carrier for generic-operator amplitudes.
fn dense_layout_for(n: usize) -> Result<crate::spin_space::BasisLayout> {
    let mut sites = 1;
    while (1usize << sites) < n {
        sites += 1;
    }
    if (1usize << sites) != n {
        return Err(Error::InvalidSpec(format!(
            "generic state space of size {n} is not a power of two"
        )));
    }
    crate::spin_space::BasisLayout::new(sites, 2)
}

//! Simulation of open quantum spin chains under purely dissipative dynamics
//! defined by kinetically constrained jump operators, contrasted against
//! classical rate-equation dynamics with the same stationary diagonal
//! observables.
//!
//! The crate is organised around a few layers:
//!
//! * [`spin_space`] — state vectors and density matrices over the full
//!   many-body configuration basis, plus on-the-fly application of
//!   site-local constrained operators.
//! * [`model_zoo`] — constructors for the classical and quantum models
//!   (unconstrained, East, Fredrickson–Andersen, excluded volume, Rydberg
//!   EIT) and the generic detailed-balance jump-operator construction with
//!   its Hermitian-form oracle.
//! * [`classical_engine`] — continuous-time Markov-chain simulation
//!   (Gillespie) and exact master-operator integration at oracle scale.
//! * [`quantum_engine`] — quantum-jump Monte Carlo unraveling and dense
//!   Lindblad solvers (two-level effective and three-level EIT).
//! * [`analysis`] — observable time series, relaxation-time extraction and
//!   classical-vs-quantum comparison reports.
//! * [`reference_solutions`] — closed-form single-spin solutions used as
//!   regression anchors.
//!
//! All stochastic runs are reproducible: trajectories are seeded from a
//! master seed plus a per-trajectory stream index, so ensembles are bitwise
//! independent of thread scheduling.

pub mod analysis;
pub mod classical_engine;
pub mod error;
pub mod grid;
pub mod model_zoo;
pub mod observables;
pub mod ode;
pub mod quantum_engine;
pub mod reference_solutions;
pub mod rng;
pub mod spectral;
pub mod spin_space;
pub mod stats;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use rng::TrajectorySeed;
pub use spin_space::{
    Boundary, ConstraintKind, ConstraintSpec, DensityMatrix, JumpOperator, LocalAction,
    LocalOperator, PureState, SpinConfiguration, C64, ORACLE_CAP,
};

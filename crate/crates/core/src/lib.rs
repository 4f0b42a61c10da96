//! Slack-free penalty formulations for inequality-constrained binary
//! programs, solved with a simulated variational quantum eigensolver.
//!
//! * [`model`]: constrained programs, Multiple Knapsack instances, brute-force oracle
//! * [`ising`]: spin encoding, support eigenvalue tables, penalty builders
//! * [`sim`]: ansatz simulation (dense statevector and exact chain form)
//! * [`vqe`]: loss, gradients, L-BFGS and multi-trial runs
//! * [`paulidecomp`]: Walsh-Hadamard decomposition of diagonals into Z strings
//! * [`bench`]: batteries, metrics and reports

pub mod bench;
pub mod error;
pub mod ising;
pub mod model;
pub mod paulidecomp;
pub mod sim;
pub mod vqe;

pub use error::{Error, Result};
pub use ising::{ConstraintHamiltonian, DiagonalProblem, PenaltySpec};
pub use model::{Bitstring, ConstrainedProgram, LinearConstraint, MkpInstance, Rational, Solution};

pub use vqe::{OptimizerConfig, VqeOutcome};

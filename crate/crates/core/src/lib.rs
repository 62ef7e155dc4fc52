//! Simulation and closed-form analysis of an (n,n)-threshold sequential
//! quantum secret sharing protocol over phase-damping and amplitude-damping
//! channels, with weak-measurement / reverse-measurement protection.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`] dense complex matrices, pure states and density matrices.
//! * [`channels`] Kraus channels and the selective weak-measurement operators.
//! * [`protocol`] the sharing state machine with exact branch enumeration.
//! * [`analysis`] closed-form fidelities, success probabilities and averages.
//! * [`optimizer`] numeric maximisation used to check the closed-form optima.
//! * [`quadrature`] Gauss-Legendre rules used for averaging over the secret.
//! * [`validation`] oracle-equivalence suites comparing formulas to the simulator.
//! * [`par`] data-parallel helpers with a sequential fallback.
//!
//! Qubit ordering: register index 0 is the most significant bit of a basis
//! label. In the three-party protocol index 0 is the secret qubit sent to
//! Charlie, index 1 is the dealer's retained qubit and index 2 is Bob's.

pub mod analysis;
pub mod channels;
pub mod linalg;
pub mod optimizer;
pub mod par;
pub mod protocol;
pub mod quadrature;
pub mod tolerance;
pub mod validation;

pub use linalg::{ComplexMatrix, DensityMatrix, LinalgError, PureState};
pub use num_complex::Complex64;

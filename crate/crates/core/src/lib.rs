//! Query-counted statevector simulation of amplified amplitude estimation
//! (AAE) and the estimators built on it: projector-sum expectation values
//! with prior knowledge, fermionic one-body observables and energy
//! differences by Newton-Cotes integration of energy gradients.

pub mod error;
pub mod estimation;
pub mod fermion;
pub mod oracles;
pub mod quadrature;
pub mod random;
pub mod statevector;
pub mod toys;

pub use error::{Error, Result};
pub use num_complex::Complex64;

//! Classical statevector emulation of first-quantized real-space grid
//! chemistry, propagated with the split-operator QFT method.
//!
//! Register values use two's complement by default: qubit `q` is bit `q` of
//! the amplitude index, each particle owns `d` sub-registers of `n_r` qubits,
//! and ancillas sit above the particle registers.

pub mod arith;
pub mod aso;
pub mod error;
pub mod expm;
pub mod gates;
pub mod grid;
pub mod hamiltonian;
pub mod io;
pub mod layout;
pub mod observables;
pub mod phase;
pub mod prep;
pub mod propagator;
pub mod qft;
pub mod reduce;
pub mod resources;
pub mod scenario;
pub mod state;

pub use error::{Error, Result};
pub use grid::{AnalyticState, SimulationBox};
pub use hamiltonian::HamiltonianSpec;
pub use layout::{get_reg_val, Convention, RegisterLayout, Span};
pub use propagator::{Propagator, SoStepPlan};
pub use state::{Basis, MeasurementRecord, StateVector, C64};

//! Stochastic recovery modeling of interdependent systems-of-systems.
//!
//! * [`recovery`]: parametric recovery functions of individual systems.
//! * [`sos`]: subset state space, competing-clocks Monte Carlo, exact
//!   enumeration, and functionality assembly `I^T R(t) F`.
//! * [`renewal`]: semi-Markov kernels and the Markov-renewal equation,
//!   solved by time marching or estimated by simulation.
//! * [`operator`]: a DeepONet surrogate mapping system recovery functions to
//!   the SoS recovery curve.
//! * [`pipeline`]: dataset generation, training and evaluation experiments.

pub mod error;
pub mod grid;
pub mod io;
mod mc;
pub mod operator;
pub mod pipeline;
pub mod recovery;
pub mod renewal;
pub mod rng;
pub mod sos;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use recovery::{GeneratorConfig, RecoveryFunction, RecoveryFunctionSet};
pub use sos::{FunctionalityVector, InitialStateVector, RecoveryCurve, StateSpace};

//! Finite-time control of discrete-time positive linear systems through
//! geometric programming.
//!
//! * [`posy`]: monomial and posynomial algebra with log-space evaluation.
//! * [`system`]: the parametrized positive system, its propagation and
//!   reverse-mode sensitivities.
//! * [`gp`]: geometric programs, their log transform and a barrier solver.
//! * [`ftc`]: budget- and performance-constrained finite-time control
//!   problems and a finite-time stability certifier.
//! * [`pdm`]: the product-development resource allocation case study.

pub mod dual;
pub mod error;
pub mod ftc;
pub mod gp;
pub mod pdm;
pub mod posy;
pub mod random;
pub mod system;

pub use error::{Error, Result};
pub use ftc::{FtcSolution, FtsMode, FtsSpec, PerformanceSpec, ProblemKind};
pub use gp::{GeometricProgram, SolveReport, SolveStatus, SolverOptions};
pub use posy::{Monomial, Posynomial, VarId, VariableRegistry};
pub use system::{Gain, SystemModel, Trajectory};

//! Receding-horizon control with runtime suboptimality certification.
//!
//! The crate drives a plain receding-horizon loop, with no terminal costs
//! or terminal constraints, and certifies a user-chosen performance bound at
//! runtime by monitoring relaxed Lyapunov inequalities. When a one-step
//! decrease cannot be certified, the loop stays open for several controls;
//! two update conditions then allow re-closing it early without giving up
//! the certificate. This is what makes short prediction horizons usable.
//!
//! Module map:
//! - [`dynamics`]: sampled-data systems (RK4 under zero-order hold with an
//!   integral stage cost) and the built-in benchmarks.
//! - [`ocp`]: the finite-horizon problem, solved by direct single shooting.
//! - [`suboptimality`]: the certification inequalities and the control
//!   splice.
//! - [`mpc_loop`]: closed-loop drivers and execution logging.
//! - [`alpha_table`]: a priori degrees for exponentially controllable
//!   systems and the minimal-horizon search.
//!
//! Everything numeric is generic over the scalar type via [`Scalar`]
//! (`f32` or `f64`); the aliases below fix `f64`, which is what the
//! benchmarks and the CLI use.

pub mod alpha_table;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod mpc_loop;
pub mod ocp;
pub mod optimize;
pub mod scalar;
pub mod suboptimality;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` instantiations of the main types.
pub type ControlSystem = dynamics::ControlSystem<f64>;
pub type SyncGenParams = dynamics::SyncGenParams<f64>;
pub type OcpSolution = ocp::OcpSolution<f64>;
pub type SolveOptions = ocp::SolveOptions<f64>;
pub type AlphaCheck = suboptimality::AlphaCheck<f64>;
pub type SpliceResult = suboptimality::SpliceResult<f64>;
pub type ExecutionLog = mpc_loop::ExecutionLog<f64>;
pub type EventRecord = mpc_loop::EventRecord<f64>;
pub type RunOptions = mpc_loop::RunOptions<f64>;
pub type ExpoControllability = alpha_table::ExpoControllability<f64>;

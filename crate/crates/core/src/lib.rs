//! Simulation and analysis of the double-well SDE with degenerate additive
//! noise,
//!
//! ```text
//! dX = (1 - |X|^2) X dt + sigma E dW,   X in R^d, W in R^n, n <= d,
//! ```
//!
//! where `E` injects the noise into the first `n` coordinates.
//!
//! The crate computes the top Lyapunov exponent by radial quadrature of the
//! invariant-measure integral ([`quadrature`]) and by Monte Carlo tangent
//! dynamics ([`lyapunov`]), locates the critical noise strength for `n = 1`,
//! and measures synchronization of common-noise ensembles ([`sync`]).
//!
//! Numerical code is generic over [`Real`] (`f32`, `f64`); the `*64` aliases
//! below fix the scalar to `f64`.

// `!(a < b)` guards reject NaN; coefficient tables keep their published digits.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision, clippy::inconsistent_digit_grouping, clippy::unusual_byte_groupings)]

pub mod error;
pub mod integrator;
pub mod lyapunov;
pub mod model;
pub mod noise;
pub mod quadrature;
pub mod scalar;
pub mod stats;
pub mod sync;

pub use error::{Error, Result};
pub use integrator::{ControlSpec, Scheme, SolverConfig, Trajectory};
pub use lyapunov::{LyapunovEstimate, McSpec, Method, TangentVec};
pub use model::{StateVec, SystemParams};
pub use noise::IncrementSource;
pub use quadrature::{Accuracy, QuadratureResult, SigmaStarResult};
pub use scalar::Real;
pub use sync::{EnsembleSpec, Sampling, SyncReport, Verdict, VerdictRule};

pub type SystemParams64 = SystemParams<f64>;
pub type StateVec64 = StateVec<f64>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type ControlSpec64 = ControlSpec<f64>;
pub type TangentVec64 = TangentVec<f64>;
pub type McSpec64 = McSpec<f64>;
pub type LyapunovEstimate64 = LyapunovEstimate<f64>;
pub type QuadratureResult64 = QuadratureResult<f64>;
pub type SigmaStarResult64 = SigmaStarResult<f64>;
pub type EnsembleSpec64 = EnsembleSpec<f64>;
pub type SyncReport64 = SyncReport<f64>;

pub type SystemParams32 = SystemParams<f32>;
pub type StateVec32 = StateVec<f32>;
pub type SolverConfig32 = SolverConfig<f32>;

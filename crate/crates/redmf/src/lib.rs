//! Mean-field fluid model of N TCP Reno flows sharing one bottleneck router.
//!
//! The library treats the per-flow congestion window as a density `p(t, w)`
//! on `(0, w_max)` plus an atom `M(t)` at the cap, coupled to a single queue
//! through a delayed loss signal. It provides:
//!
//! - [`steady`]: the closed-form fixed-point window distribution for a
//!   constant loss probability, built from a piecewise-Gaussian series on
//!   dyadic intervals, normalized through erf integrals.
//! - [`equilibrium`]: the network equilibrium (queue, loss, RTT, mean window)
//!   for a RED-controlled bottleneck, by scalar bisection on the queue.
//! - [`stability`]: the linearized characteristic quadratic around that
//!   equilibrium, explicit roots, closed-formula sufficient conditions, and
//!   a RED tuning rule.
//! - [`sim`]: a time-domain integrator of the full delayed closed loop
//!   (transport PDE, cap-mass ODE, queue ODE, RTT history) for RED
//!   (instantaneous or EWMA-averaged) and drop-tail routers.
//! - [`oracle`]: an independent per-flow Monte Carlo chain used to
//!   cross-validate the analytic distribution and moments.
//! - [`scenario`]: plain-text `key = value` scenario files describing a
//!   router configuration.
//!
//! All numerical code is generic over the scalar type through [`Scalar`];
//! `f64` is the intended precision and the aliases at the crate root fix it.
//! `f32` works for the low-exponent regime but overflows the steady-state
//! normalization once `k·w_max²/2` exceeds ~85, and its quadrature noise is
//! well above the documented tolerances; it is exercised in tests only as a
//! smoke check.

pub mod equilibrium;
pub mod math;
pub mod model;
pub mod oracle;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod stability;
pub mod steady;

pub use scalar::Scalar;

/// Library error type.
///
/// `InvalidParameter` and `ScenarioParse` are caller mistakes (CLI exit 2);
/// `Numeric` means a computation could not be completed at the requested
/// precision or range (CLI exit 1).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("scenario parse error at line {line}: {msg}")]
    ScenarioParse { line: usize, msg: String },
    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// `f64` aliases for the main domain types.
pub type NetworkParams64 = model::NetworkParams<f64>;
pub type RedConfig64 = model::RedConfig<f64>;
pub type LossModel64 = model::LossModel<f64>;
pub type WindowDistribution64 = model::WindowDistribution<f64>;
pub type SteadyState64 = steady::SteadyState<f64>;
pub type EquilibriumState64 = equilibrium::EquilibriumState<f64>;
pub type StabilityReport64 = stability::StabilityReport<f64>;
pub type Scenario64 = scenario::Scenario<f64>;
pub type Simulator64 = sim::Simulator<f64>;
pub type OracleResult64 = oracle::OracleResult<f64>;

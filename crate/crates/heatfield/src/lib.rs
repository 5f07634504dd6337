//! Simulation laboratory for a passive tracer in a heat-evolved Gaussian
//! velocity field.
//!
//! The model: a random potential solves the heat equation from two-sided
//! Brownian initial data, and the velocity field `u = -∂x(potential)` is a
//! centered Gaussian field with covariance `E[u(t,x) u(s,y)] = P_{t+s}(x-y)`,
//! where `P_t` is the Gaussian heat kernel. A passive tracer follows
//! `dX/dt = u(t, X)` from `X(0) = 0`. The crate provides:
//!
//! * [`environment`] — sampled periodic realizations of `u`, evaluable with
//!   spatial derivatives at any `(t, x)`, plus exact covariance oracles;
//! * [`tracer`] — adaptive ODE integration of the tracer and the short-time
//!   functional `∫_0^θ u(s,0) ds`;
//! * [`zeros`] — location, classification and continuation of the zeros of
//!   `u(t,·)`, annihilation events, and the frontier processes `L`, `R` and
//!   the trapping process `Z`;
//! * [`cadlag`] — right-continuous paths with jumps and the oscillation
//!   functionals used to diagnose Skorokhod M1 convergence;
//! * [`stats`] — deterministic parallel Monte Carlo harness, exponent fits,
//!   Kolmogorov–Smirnov tests, tail fits and histogram diagnostics;
//! * [`rough_env`] — the stationary rough (stochastic-heat-equation)
//!   environment, its regularization, the slow tracer `S^λ` and the
//!   sub-diffusive/diffusive crossover;
//! * [`experiments`] — the canned experiment drivers behind the CLI
//!   subcommands and the acceptance suites.
//!
//! All randomness flows from explicit 64-bit seeds; every ensemble result is
//! independent of the worker count.

pub mod cadlag;
pub mod environment;
pub mod experiments;
pub mod rough_env;
pub mod stats;
pub mod tracer;
pub mod zeros;

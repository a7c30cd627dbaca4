//! Stochastic root finding with multiplicative step-size adaptation.
//!
//! The iteration `x_t = x_{t-1} - gamma_{t-1} y_t` searches for a zero of a
//! scalar function observed only through noisy measurements
//! `y_t = phi(x_{t-1}) + xi_t`. The step size grows by a factor `u` (capped
//! at `gbar`) whenever two consecutive measurements agree in sign and shrinks
//! by `d` otherwise. Whether the iteration converges is governed by the
//! balance threshold `kappa = ln(1/d) / ln(u/d)` against the sign-agreement
//! probabilities of the noise; for symmetric continuous noise the boundary is
//! simply `u d = 1`. When it converges it does so geometrically, to a point
//! near (not necessarily at) a zero; pushing `d` toward `1/u` trades
//! convergence speed for limit precision.
//!
//! The crate provides:
//!
//! * [`noise`] — zero-mean noise models with CDF access and the crossing
//!   probabilities `k`, `k_plus`, `k_minus` plus a Monte Carlo oracle;
//! * [`problem`] — built-in target functions and the A2-A6 assumption checks;
//! * [`stepsize`] — the multiplicative rule, Kesten's rule, and deterministic
//!   schedules as explicit state machines, with `kappa`, `lambda`, and the
//!   predicted log-step drift;
//! * [`engine`] — trajectory simulation, seeded ensembles, and finite-horizon
//!   outcome classification;
//! * [`analysis`] — theoretical classification, limit-set membership,
//!   geometric rate fits, phase diagrams, and the precision/rate tradeoff;
//! * [`cli`] + [`config`] + [`artifact`] — the `stepadapt` experiment driver
//!   with deterministic CSV/JSON artifacts.

pub mod analysis;
pub mod artifact;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod noise;
pub mod problem;
pub mod rng;
pub mod stepsize;

pub use error::{Error, Result};

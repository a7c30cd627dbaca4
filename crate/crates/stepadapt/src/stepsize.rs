//! Step-size rules as explicit state machines, plus the threshold quantities
//! that predict their behavior.
//!
//! The multiplicative rule grows the step by `u` (capped at `gbar`) when two
//! consecutive measurements agree in sign and shrinks it by `d` otherwise.
//! Kesten's rule walks down a fixed schedule, advancing one index per sign
//! change. Deterministic and constant schedules ignore the signs entirely.

use crate::error::{Error, Result};

/// Sign of the product of two consecutive measurements. A zero product takes
/// the shrink branch, matching the `y_{t-1} y_t <= 0` case of the rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignProduct {
    Positive,
    NonPositive,
}

impl SignProduct {
    #[inline]
    pub fn of(y_prev: f64, y_next: f64) -> Self {
        if y_prev * y_next > 0.0 {
            SignProduct::Positive
        } else {
            SignProduct::NonPositive
        }
    }
}

/// Which rule drives the step size.
#[derive(Debug, Clone, PartialEq)]
pub enum StepRuleConfig {
    /// `gamma <- min(u * gamma, gbar)` on sign agreement, `gamma <- d * gamma`
    /// otherwise; requires `0 < d < 1 < u`.
    Multiplicative { u: f64, d: f64, gbar: f64 },
    /// `gamma_t = c / (s_t + 1)` where `s_t` counts sign changes.
    Kesten { c: f64 },
    /// `gamma_t = c / (t + 1)` regardless of signs.
    Deterministic { c: f64 },
    /// Fixed `gamma = g`.
    Constant { g: f64 },
}

impl StepRuleConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepRuleConfig::Multiplicative { u, d, gbar } => {
                if !(d.is_finite() && u.is_finite() && 0.0 < d && d < 1.0 && 1.0 < u) {
                    return Err(Error::InvalidConfig(format!(
                        "multiplicative rule requires 0 < d < 1 < u, got u={u}, d={d}"
                    )));
                }
                if !(gbar.is_finite() && gbar > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "gbar must be > 0, got {gbar}"
                    )));
                }
                Ok(())
            }
            StepRuleConfig::Kesten { c } | StepRuleConfig::Deterministic { c } => {
                if !(c.is_finite() && c > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "schedule scale c must be > 0, got {c}"
                    )));
                }
                Ok(())
            }
            StepRuleConfig::Constant { g } => {
                if !(g.is_finite() && g > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "constant step g must be > 0, got {g}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Largest step size the rule can ever produce; plays the role of `gbar`
    /// in the assumption checks for every variant.
    pub fn max_step(&self) -> f64 {
        match *self {
            StepRuleConfig::Multiplicative { gbar, .. } => gbar,
            StepRuleConfig::Kesten { c } | StepRuleConfig::Deterministic { c } => c,
            StepRuleConfig::Constant { g } => g,
        }
    }

    fn schedule(c: f64, m: u64) -> f64 {
        c / (m as f64 + 1.0)
    }

    /// Step size used for the very first update `x_1 = x_0 - gamma_0 y_1`.
    /// Schedule-driven rules ignore the requested value.
    pub fn initial_gamma0(&self, requested: f64) -> Result<f64> {
        match *self {
            StepRuleConfig::Multiplicative { gbar, .. } => {
                if !(requested > 0.0 && requested <= gbar) {
                    return Err(Error::InvalidConfig(format!(
                        "gamma0 must satisfy 0 < gamma0 <= gbar = {gbar}, got {requested}"
                    )));
                }
                Ok(requested)
            }
            StepRuleConfig::Kesten { c } | StepRuleConfig::Deterministic { c } => {
                Ok(Self::schedule(c, 0))
            }
            StepRuleConfig::Constant { g } => Ok(g),
        }
    }

    /// State positioned at `t = 1` with `gamma_1` active. Schedule-driven
    /// rules start at schedule index 1 and ignore the requested gammas.
    pub fn init_state(&self, gamma0: f64, gamma1: f64) -> Result<StepRuleState> {
        self.validate()?;
        match *self {
            StepRuleConfig::Multiplicative { gbar, .. } => {
                for (name, g) in [("gamma0", gamma0), ("gamma1", gamma1)] {
                    if !(g > 0.0 && g <= gbar) {
                        return Err(Error::InvalidConfig(format!(
                            "{name} must satisfy 0 < {name} <= gbar = {gbar}, got {g}"
                        )));
                    }
                }
                Ok(StepRuleState {
                    gamma: gamma1,
                    s: 0,
                    t: 1,
                })
            }
            StepRuleConfig::Kesten { c } => Ok(StepRuleState {
                gamma: Self::schedule(c, 1),
                s: 1,
                t: 1,
            }),
            StepRuleConfig::Deterministic { c } => Ok(StepRuleState {
                gamma: Self::schedule(c, 1),
                s: 0,
                t: 1,
            }),
            StepRuleConfig::Constant { g } => Ok(StepRuleState {
                gamma: g,
                s: 0,
                t: 1,
            }),
        }
    }

    /// Advance the state by one step given the sign of `y_{t-1} y_t`. Pure:
    /// identical inputs yield identical outputs.
    pub fn update(&self, state: &StepRuleState, sign: SignProduct) -> StepRuleState {
        let t = state.t + 1;
        match *self {
            StepRuleConfig::Multiplicative { u, d, gbar } => {
                let gamma = match sign {
                    SignProduct::Positive => (u * state.gamma).min(gbar),
                    SignProduct::NonPositive => d * state.gamma,
                };
                StepRuleState {
                    gamma,
                    s: state.s,
                    t,
                }
            }
            StepRuleConfig::Kesten { c } => {
                let s = match sign {
                    SignProduct::Positive => state.s,
                    SignProduct::NonPositive => state.s + 1,
                };
                StepRuleState {
                    gamma: Self::schedule(c, s),
                    s,
                    t,
                }
            }
            StepRuleConfig::Deterministic { c } => StepRuleState {
                gamma: Self::schedule(c, t),
                s: state.s,
                t,
            },
            StepRuleConfig::Constant { g } => StepRuleState {
                gamma: g,
                s: state.s,
                t,
            },
        }
    }
}

/// Current step size plus the counters that drive it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRuleState {
    /// Active step size `gamma_t`.
    pub gamma: f64,
    /// Kesten's sign-change counter `s_t` (unused by other rules).
    pub s: u64,
    /// Step index `t`.
    pub t: u64,
}

/// The balance threshold `ln(1/d) / ln(u/d)`: the sign-agreement probability
/// at which the expected change of `ln gamma` is exactly zero.
pub fn kappa(u: f64, d: f64) -> Result<f64> {
    check_ud(u, d)?;
    Ok((1.0 / d).ln() / (u / d).ln())
}

/// `ln u / (-ln d)`; satisfies `1 / (1 + lambda) = kappa(u, d)`.
pub fn lambda_of(u: f64, d: f64) -> Result<f64> {
    check_ud(u, d)?;
    Ok(u.ln() / -d.ln())
}

fn check_ud(u: f64, d: f64) -> Result<()> {
    if !(u.is_finite() && d.is_finite() && 0.0 < d && d < 1.0 && 1.0 < u) {
        return Err(Error::InvalidConfig(format!(
            "require 0 < d < 1 < u, got u={u}, d={d}"
        )));
    }
    Ok(())
}

/// Expected per-step change of `ln gamma` when sign agreement happens with
/// probability `k`: `k ln u + (1 - k) ln d`. Zero exactly at `k = kappa`.
///
/// Panics if `k` is outside `[0, 1]`.
pub fn predicted_drift(u: f64, d: f64, k: f64) -> f64 {
    assert!((0.0..=1.0).contains(&k), "k must be a probability, got {k}");
    k * u.ln() + (1.0 - k) * d.ln()
}

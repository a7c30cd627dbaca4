//! The measurement-driven recursion `x_t = x_{t-1} - gamma_{t-1} y_t` with
//! `y_t = phi(x_{t-1}) + xi_t`, trajectory recording, seeded ensembles, and
//! finite-horizon outcome classification.
//!
//! Indexing: `y_1` uses `gamma_0` inside `x_1 = x_0 - gamma_0 y_1`; the first
//! sign comparison is `y_1 y_2`, which produces `gamma_2`. `gamma_1` is an
//! initial condition.

use crate::analysis;
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::problem::TargetFunction;
use crate::rng::{child_seed, RandomState};
use crate::stepsize::{SignProduct, StepRuleConfig, StepRuleState};
use rayon::prelude::*;
use std::collections::VecDeque;

/// Recorded steps used for the per-seed geometric rate fit.
pub const RATE_FIT_WINDOW: u64 = 2000;
/// `gamma < SMALL_GAMMA_FRAC * max_step` marks the step size as "small" for
/// the steps-to-small-gamma statistic.
pub const SMALL_GAMMA_FRAC: f64 = 1e-4;

/// Finite-horizon surrogate thresholds for almost-sure convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct StopCriteria {
    /// Trailing window length over which stability is required.
    pub conv_window: u64,
    /// Bound on the oscillation of `x` over the window.
    pub conv_tol: f64,
    /// The window maximum of `gamma` must drop below
    /// `gamma_tail_tol * max(gamma over the run)`; scale-free in `gbar`.
    pub gamma_tail_tol: f64,
    /// `|x|` beyond this aborts the run as a blowup.
    pub blowup_bound: f64,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria {
            conv_window: 200,
            conv_tol: 1e-6,
            gamma_tail_tol: 1e-8,
            blowup_bound: 1e6,
        }
    }
}

impl StopCriteria {
    pub fn validate(&self) -> Result<()> {
        if self.conv_window < 2 {
            return Err(Error::InvalidConfig("conv_window must be >= 2".into()));
        }
        for (name, v) in [
            ("conv_tol", self.conv_tol),
            ("gamma_tail_tol", self.gamma_tail_tol),
            ("blowup_bound", self.blowup_bound),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Everything a single run needs; a run is a pure function of this value.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub problem: TargetFunction,
    pub noise: NoiseModel,
    pub rule: StepRuleConfig,
    pub x0: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub horizon: u64,
    pub seed: u64,
    pub record_stride: u64,
    pub stop: StopCriteria,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::InvalidConfig("horizon must be >= 2".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidConfig("record_stride must be >= 1".into()));
        }
        if !self.x0.is_finite() {
            return Err(Error::InvalidConfig("x0 must be finite".into()));
        }
        self.stop.validate()?;
        self.rule.validate()?;
        // surfaces gamma bound violations early
        self.rule.initial_gamma0(self.gamma0)?;
        self.rule.init_state(self.gamma0, self.gamma1)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NotConvergedReason {
    /// The horizon ended without the stability window being satisfied. This
    /// is the finite-horizon stand-in for divergence.
    HorizonExhausted,
    /// `x` left the blowup bound or became non-finite.
    Blowup,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    /// Stability window satisfied; `x_star` is the window mean of `x`.
    Converged {
        x_star: f64,
        t_stop: u64,
    },
    NotConverged {
        reason: NotConvergedReason,
    },
    /// Trajectory ended before a full assessment window existed.
    Stopped,
}

impl RunStatus {
    pub fn is_converged(&self) -> bool {
        matches!(self, RunStatus::Converged { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Converged { .. } => "converged",
            RunStatus::NotConverged {
                reason: NotConvergedReason::HorizonExhausted,
            } => "not_converged_horizon",
            RunStatus::NotConverged {
                reason: NotConvergedReason::Blowup,
            } => "not_converged_blowup",
            RunStatus::Stopped => "stopped",
        }
    }
}

/// Recorded series (at `record_stride`) plus the unthinned trailing window
/// that classification uses.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub seed: u64,
    pub ts: Vec<u64>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub gammas: Vec<f64>,
    pub t_final: u64,
    pub status: RunStatus,
    /// Largest step size seen over the whole run (including gamma_0).
    pub gamma_max: f64,
    /// Unthinned `x` values of the trailing window, oldest first.
    pub tail_xs: Vec<f64>,
    /// Unthinned `gamma` values of the trailing window, oldest first.
    pub tail_gammas: Vec<f64>,
    /// Whether the gamma-smallness half of the convergence test applies
    /// (true for the sign-driven rules, false for exogenous schedules).
    pub gamma_criterion_applies: bool,
}

/// Result of one recursion step at `t >= 2`: the new measurement, the new
/// iterate, and the rule state advanced by the sign of `y_{t-1} y_t`.
#[derive(Debug, Clone, Copy)]
pub struct StepResult {
    pub x_next: f64,
    pub y_next: f64,
    pub state: StepRuleState,
}

/// One step of the recursion for `t >= 2`: measures at `x_prev`, moves with
/// the *current* step size, then lets the rule consume the sign product so
/// the returned state carries `gamma_t` for the next step.
pub fn step(
    problem: &TargetFunction,
    noise: &NoiseModel,
    rule: &StepRuleConfig,
    state: &StepRuleState,
    x_prev: f64,
    y_prev: f64,
    rng: &mut RandomState,
) -> Result<StepResult> {
    let y_next = problem.evaluate(x_prev) + noise.sample(rng);
    let x_next = x_prev - state.gamma * y_next;
    if !x_next.is_finite() {
        return Err(Error::NonFiniteState { t: state.t + 1 });
    }
    let next_state = rule.update(state, SignProduct::of(y_prev, y_next));
    Ok(StepResult {
        x_next,
        y_next,
        state: next_state,
    })
}

/// Sliding max/min over a fixed trailing window, O(1) amortized per push.
struct SlidingExtremum {
    deque: VecDeque<(u64, f64)>,
    window: u64,
    want_max: bool,
}

impl SlidingExtremum {
    fn new(window: u64, want_max: bool) -> Self {
        SlidingExtremum {
            deque: VecDeque::new(),
            window,
            want_max,
        }
    }

    fn push(&mut self, t: u64, v: f64) {
        while let Some(&(_, back)) = self.deque.back() {
            let dominated = if self.want_max { back <= v } else { back >= v };
            if dominated {
                self.deque.pop_back();
            } else {
                break;
            }
        }
        self.deque.push_back((t, v));
        while let Some(&(front_t, _)) = self.deque.front() {
            if front_t + self.window <= t {
                self.deque.pop_front();
            } else {
                break;
            }
        }
    }

    fn value(&self) -> f64 {
        self.deque
            .front()
            .map(|&(_, v)| v)
            .expect("queried before any push")
    }
}

/// Trailing-window state shared by the early-stop test and the tail series.
struct WindowTracker {
    tail: VecDeque<(f64, f64)>,
    x_max: SlidingExtremum,
    x_min: SlidingExtremum,
    g_max: SlidingExtremum,
    window: u64,
}

impl WindowTracker {
    fn new(window: u64) -> Self {
        WindowTracker {
            tail: VecDeque::with_capacity(window as usize + 1),
            x_max: SlidingExtremum::new(window, true),
            x_min: SlidingExtremum::new(window, false),
            g_max: SlidingExtremum::new(window, true),
            window,
        }
    }

    fn push(&mut self, t: u64, x: f64, gamma: f64) {
        self.tail.push_back((x, gamma));
        if self.tail.len() as u64 > self.window {
            self.tail.pop_front();
        }
        self.x_max.push(t, x);
        self.x_min.push(t, x);
        self.g_max.push(t, gamma);
    }

    fn x_oscillation(&self) -> f64 {
        self.x_max.value() - self.x_min.value()
    }

    fn gamma_window_max(&self) -> f64 {
        self.g_max.value()
    }

    fn x_star(&self) -> f64 {
        self.tail.iter().map(|&(x, _)| x).sum::<f64>() / self.tail.len() as f64
    }
}

/// Run the recursion to the horizon or until the stability window fires.
/// Deterministic: the same config gives a bit-identical trajectory.
pub fn run(config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    let SimConfig {
        problem,
        noise,
        rule,
        stop,
        ..
    } = config;
    let window = stop.conv_window;
    let stride = config.record_stride;
    let gamma_criterion_applies = matches!(
        rule,
        StepRuleConfig::Multiplicative { .. } | StepRuleConfig::Kesten { .. }
    );

    let mut rng = RandomState::from_seed(config.seed);
    let gamma0 = rule.initial_gamma0(config.gamma0)?;
    let mut state = rule.init_state(config.gamma0, config.gamma1)?;

    let cap = (config.horizon / stride + 2) as usize;
    let mut ts = Vec::with_capacity(cap);
    let mut xs = Vec::with_capacity(cap);
    let mut ys = Vec::with_capacity(cap);
    let mut gammas = Vec::with_capacity(cap);
    let mut record = |t: u64, x: f64, y: f64, gamma: f64| {
        if t.is_multiple_of(stride) {
            ts.push(t);
            xs.push(x);
            ys.push(y);
            gammas.push(gamma);
        }
    };

    let mut tracker = WindowTracker::new(window);
    let mut gamma_max = gamma0.max(state.gamma);
    let mut status: Option<RunStatus> = None;
    let mut t_final = config.horizon;

    // t = 1: measure at x0, move with gamma_0; no sign update yet.
    let y1 = problem.evaluate(config.x0) + noise.sample(&mut rng);
    let mut x_prev = config.x0 - gamma0 * y1;
    let mut y_prev = y1;
    tracker.push(1, x_prev, state.gamma);
    record(1, x_prev, y_prev, state.gamma);

    if !x_prev.is_finite() || x_prev.abs() > stop.blowup_bound {
        status = Some(RunStatus::NotConverged {
            reason: NotConvergedReason::Blowup,
        });
        t_final = 1;
    } else {
        for t in 2..=config.horizon {
            let stepped = match step(problem, noise, rule, &state, x_prev, y_prev, &mut rng) {
                Ok(s) => s,
                Err(Error::NonFiniteState { .. }) => {
                    status = Some(RunStatus::NotConverged {
                        reason: NotConvergedReason::Blowup,
                    });
                    t_final = t;
                    break;
                }
                Err(e) => return Err(e),
            };
            x_prev = stepped.x_next;
            y_prev = stepped.y_next;
            state = stepped.state;
            gamma_max = gamma_max.max(state.gamma);
            tracker.push(t, x_prev, state.gamma);
            record(t, x_prev, y_prev, state.gamma);

            if x_prev.abs() > stop.blowup_bound {
                status = Some(RunStatus::NotConverged {
                    reason: NotConvergedReason::Blowup,
                });
                t_final = t;
                break;
            }

            if t >= window {
                let x_stable = tracker.x_oscillation() < stop.conv_tol;
                let gamma_small = !gamma_criterion_applies
                    || tracker.gamma_window_max() < stop.gamma_tail_tol * gamma_max;
                if x_stable && gamma_small {
                    status = Some(RunStatus::Converged {
                        x_star: tracker.x_star(),
                        t_stop: t,
                    });
                    t_final = t;
                    break;
                }
            }
        }
    }

    // Keep the final step in the recorded series even off-stride.
    if ts.last() != Some(&t_final) {
        ts.push(t_final);
        xs.push(x_prev);
        ys.push(y_prev);
        gammas.push(state.gamma);
    }

    let (tail_xs, tail_gammas): (Vec<f64>, Vec<f64>) = tracker.tail.iter().copied().unzip();
    let mut traj = Trajectory {
        seed: config.seed,
        ts,
        xs,
        ys,
        gammas,
        t_final,
        status: RunStatus::Stopped, // placeholder
        gamma_max,
        tail_xs,
        tail_gammas,
        gamma_criterion_applies,
    };
    traj.status = match status {
        Some(s) => s,
        None => classify(&traj, stop),
    };
    Ok(traj)
}

/// Derive the outcome of a completed trajectory from its trailing window.
pub fn classify(traj: &Trajectory, criteria: &StopCriteria) -> RunStatus {
    if traj
        .xs
        .iter()
        .any(|x| !x.is_finite() || x.abs() > criteria.blowup_bound)
    {
        return RunStatus::NotConverged {
            reason: NotConvergedReason::Blowup,
        };
    }
    let w = criteria.conv_window as usize;
    if traj.tail_xs.len() < w {
        return RunStatus::Stopped;
    }
    let xs = &traj.tail_xs[traj.tail_xs.len() - w..];
    let gs = &traj.tail_gammas[traj.tail_gammas.len() - w..];
    let x_hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x_lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let g_hi = gs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x_stable = x_hi - x_lo < criteria.conv_tol;
    let gamma_small =
        !traj.gamma_criterion_applies || g_hi < criteria.gamma_tail_tol * traj.gamma_max;
    if x_stable && gamma_small {
        let x_star = xs.iter().sum::<f64>() / xs.len() as f64;
        RunStatus::Converged {
            x_star,
            t_stop: traj.t_final,
        }
    } else {
        RunStatus::NotConverged {
            reason: NotConvergedReason::HorizonExhausted,
        }
    }
}

/// Per-seed outcome digest; the trajectory itself is dropped after summarizing.
#[derive(Debug, Clone)]
pub struct SeedSummary {
    pub index: u64,
    pub seed: u64,
    pub status: RunStatus,
    pub x_star: Option<f64>,
    pub t_stop: u64,
    /// Log-linear slope of gamma over the final recorded window, if fit.
    pub rate_slope: Option<f64>,
    /// Distance from `x_star` to the nearest declared zero.
    pub limit_error: Option<f64>,
    /// Median step size over the trailing window.
    pub tail_gamma_median: f64,
    /// First step at which gamma dropped below `SMALL_GAMMA_FRAC * max_step`.
    pub steps_to_small_gamma: Option<u64>,
}

/// Order-independent aggregate of an ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub summaries: Vec<SeedSummary>,
    pub conv_fraction: f64,
    pub median_limit_error: Option<f64>,
    pub median_rate_slope: Option<f64>,
    pub median_steps_to_small_gamma: Option<f64>,
    pub median_tail_gamma: Option<f64>,
    /// Converged-seed counts per declared zero (which zero attracted each
    /// seed), in zero-set order.
    pub zero_attraction: Vec<(f64, u64)>,
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn summarize(index: u64, config: &SimConfig, traj: &Trajectory) -> SeedSummary {
    let x_star = match traj.status {
        RunStatus::Converged { x_star, .. } => Some(x_star),
        _ => None,
    };
    let limit_error = x_star.map(|x| config.problem.distance_to_zero_set(x));
    let window_lo = traj.t_final.saturating_sub(RATE_FIT_WINDOW - 1).max(1);
    let rate_slope = analysis::geometric_rate(traj, (window_lo, traj.t_final))
        .ok()
        .map(|fit| fit.slope);
    let small = SMALL_GAMMA_FRAC * config.rule.max_step();
    let steps_to_small_gamma = traj
        .ts
        .iter()
        .zip(traj.gammas.iter())
        .find(|(_, &g)| g < small)
        .map(|(&t, _)| t);
    SeedSummary {
        index,
        seed: traj.seed,
        status: traj.status,
        x_star,
        t_stop: traj.t_final,
        rate_slope,
        limit_error,
        tail_gamma_median: median(traj.tail_gammas.clone()).unwrap_or(f64::NAN),
        steps_to_small_gamma,
    }
}

/// Run `n_seeds` independent trajectories with child seeds derived from
/// `config.seed` and aggregate them in seed order. Execution may be parallel;
/// results are not affected by thread count or scheduling.
pub fn run_ensemble(config: &SimConfig, n_seeds: u64) -> Result<EnsembleResult> {
    if n_seeds == 0 {
        return Err(Error::InvalidConfig("n_seeds must be >= 1".into()));
    }
    config.validate()?;
    let summaries: Vec<SeedSummary> = (0..n_seeds)
        .into_par_iter()
        .map(|i| {
            let mut child = config.clone();
            child.seed = child_seed(config.seed, i);
            // validate() already passed; per-seed runs cannot fail structurally
            let traj = run(&child).expect("validated config");
            summarize(i, config, &traj)
        })
        .collect();

    let n_conv = summaries.iter().filter(|s| s.status.is_converged()).count();
    let conv_fraction = n_conv as f64 / n_seeds as f64;
    let median_limit_error = median(summaries.iter().filter_map(|s| s.limit_error).collect());
    let median_rate_slope = median(
        summaries
            .iter()
            .filter(|s| s.status.is_converged())
            .filter_map(|s| s.rate_slope)
            .collect(),
    );
    let median_steps_to_small_gamma = median(
        summaries
            .iter()
            .filter_map(|s| s.steps_to_small_gamma.map(|t| t as f64))
            .collect(),
    );
    let median_tail_gamma = median(
        summaries
            .iter()
            .map(|s| s.tail_gamma_median)
            .filter(|v| v.is_finite())
            .collect(),
    );
    let mut zero_attraction: Vec<(f64, u64)> =
        config.problem.zeros().iter().map(|&z| (z, 0)).collect();
    for s in &summaries {
        if let Some(x_star) = s.x_star {
            let nearest = config.problem.nearest_zero(x_star);
            if let Some(entry) = zero_attraction.iter_mut().find(|(z, _)| *z == nearest) {
                entry.1 += 1;
            }
        }
    }
    Ok(EnsembleResult {
        summaries,
        conv_fraction,
        median_limit_error,
        median_rate_slope,
        median_steps_to_small_gamma,
        median_tail_gamma,
        zero_attraction,
    })
}

//! Theory-side computations (threshold classification, limit-set membership,
//! predicted drift) and experiment-side estimators (geometric rate fits,
//! phase diagrams, precision-vs-rate tables).

use crate::engine::{run_ensemble, SimConfig};
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::problem::TargetFunction;
use crate::stepsize::{kappa, lambda_of, StepRuleConfig};
use serde::Serialize;

/// Comparison slack treated as floating-point equality when classifying.
const CLASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoreticalClass {
    Converge,
    Diverge,
    Indeterminate,
}

impl TheoreticalClass {
    pub fn label(&self) -> &'static str {
        match self {
            TheoreticalClass::Converge => "converge",
            TheoreticalClass::Diverge => "diverge",
            TheoreticalClass::Indeterminate => "indeterminate",
        }
    }
}

/// The two threshold quantities and the class they imply.
#[derive(Debug, Clone)]
pub struct ThresholdReport {
    pub kappa: f64,
    pub lambda: f64,
    /// Upper crossing-probability limit at level zero.
    pub k_plus_at_0: f64,
    /// Infimum of the lower limit over the probed grid (refined around the
    /// grid argmin).
    pub inf_k_minus: f64,
    pub inf_k_minus_arg: f64,
    pub theoretical_class: TheoreticalClass,
}

fn golden_section_min(
    mut f: impl FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    iters: usize,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Apply the convergence/divergence test: converge when `kappa` exceeds the
/// upper crossing limit at zero, diverge when it undercuts the global lower
/// limit, indeterminate in between (which for symmetric continuous noise is
/// exactly the `u d = 1` boundary).
pub fn theoretical_classification(u: f64, d: f64, noise: &NoiseModel) -> Result<ThresholdReport> {
    let kappa = kappa(u, d)?;
    let lambda = lambda_of(u, d)?;
    let k_plus_at_0 = noise.k_plus(0.0, &noise.default_epsilons())?.value;

    let scale = if noise.sigma() > 0.0 {
        noise.sigma()
    } else {
        1.0
    };
    let half_range = 8.0 * scale;
    let n = 1601;
    let grid: Vec<f64> = (0..n)
        .map(|i| -half_range + 2.0 * half_range * i as f64 / (n - 1) as f64)
        .collect();
    let (grid_val, grid_arg) = noise.inf_k_minus(&grid)?;
    // refine around the grid argmin; keep whichever is lower
    let span = 2.0 * half_range / (n - 1) as f64;
    let (ref_arg, ref_val) = golden_section_min(
        |z| noise.k_minus_limit(z),
        grid_arg - span,
        grid_arg + span,
        60,
    );
    let (inf_k_minus, inf_k_minus_arg) = if ref_val < grid_val {
        (ref_val, ref_arg)
    } else {
        (grid_val, grid_arg)
    };

    let theoretical_class = if kappa > k_plus_at_0 + CLASS_TOL {
        TheoreticalClass::Converge
    } else if kappa < inf_k_minus - CLASS_TOL {
        TheoreticalClass::Diverge
    } else {
        TheoreticalClass::Indeterminate
    };
    Ok(ThresholdReport {
        kappa,
        lambda,
        k_plus_at_0,
        inf_k_minus,
        inf_k_minus_arg,
        theoretical_class,
    })
}

/// Limit-set membership verdict for a candidate limit point.
#[derive(Debug, Clone, Copy)]
pub struct Membership {
    pub member: bool,
    /// Lower crossing limit at the point's function value.
    pub k_value: f64,
    /// The threshold `kappa(u, d)` (boundary inclusive).
    pub threshold: f64,
}

/// Does `x_star` lie in the predicted limit set `{x : k_-(phi(x)) <= kappa}`?
pub fn limit_set_membership(
    x_star: f64,
    problem: &TargetFunction,
    noise: &NoiseModel,
    u: f64,
    d: f64,
    tol: f64,
) -> Result<Membership> {
    let threshold = kappa(u, d)?;
    let k_value = noise.k_minus_limit(problem.evaluate(x_star));
    Ok(Membership {
        member: k_value <= threshold + tol,
        k_value,
        threshold,
    })
}

/// Membership in the lambda-indexed family `{x : k_-(phi(x)) <= 1/(1+lambda)}`.
pub fn in_limit_set(
    x: f64,
    problem: &TargetFunction,
    noise: &NoiseModel,
    lambda: f64,
) -> Result<bool> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    let threshold = 1.0 / (1.0 + lambda);
    Ok(noise.k_minus_limit(problem.evaluate(x)) <= threshold)
}

/// The `|phi|` level at which the sign-agreement probability reaches the
/// given threshold, found by bisection (no sampling noise). Returns 0 when
/// the threshold is at or below the level-zero probability.
pub fn limit_boundary_phi(noise: &NoiseModel, threshold: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::InvalidConfig(format!(
            "threshold must be in [0,1), got {threshold}"
        )));
    }
    if threshold <= noise.k_diag(0.0) {
        return Ok(0.0);
    }
    let scale = if noise.sigma() > 0.0 {
        noise.sigma()
    } else {
        1.0
    };
    let mut hi = scale;
    let mut grow = 0;
    while noise.k_diag(hi) < threshold {
        hi *= 2.0;
        grow += 1;
        if grow > 80 {
            return Err(Error::UnsupportedQuery(format!(
                "sign-agreement probability never reaches {threshold} for this noise model"
            )));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-9 * scale.min(1.0) {
        let mid = 0.5 * (lo + hi);
        if noise.k_diag(mid) < threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Log-linear fit of the step-size decay.
#[derive(Debug, Clone, Copy)]
pub struct RateFit {
    /// Per-step slope of `ln gamma`.
    pub slope: f64,
    /// Fitted `ln gamma` at `t = 0`.
    pub intercept: f64,
    pub r2: f64,
    pub window: (u64, u64),
    pub n_points: usize,
}

/// Least-squares line through `(t, ln gamma_t)` over the recorded points in
/// the window. Points with `gamma <= 0` (underflow) are excluded.
pub fn geometric_rate(traj: &crate::engine::Trajectory, window: (u64, u64)) -> Result<RateFit> {
    let (lo, hi) = window;
    if lo > hi {
        return Err(Error::InvalidConfig(format!("window {lo}..{hi} is empty")));
    }
    let pts: Vec<(f64, f64)> = traj
        .ts
        .iter()
        .zip(traj.gammas.iter())
        .filter(|(&t, &g)| t >= lo && t <= hi && g > 0.0)
        .map(|(&t, &g)| (t as f64, g.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "rate fit needs >= 10 recorded points with gamma > 0, found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_v = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(t, v) in &pts {
        let dt = t - mean_t;
        let dv = v - mean_v;
        sxx += dt * dt;
        sxy += dt * dv;
        syy += dv * dv;
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData(
            "degenerate window: all points at one t".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_v - slope * mean_t;
    let ss_res = (syy - slope * sxy).max(0.0);
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        r2,
        window,
        n_points: pts.len(),
    })
}

/// One cell of the (u, d) phase diagram.
#[derive(Debug, Clone)]
pub struct PhaseCell {
    pub u: f64,
    pub d: f64,
    pub ud: f64,
    pub kappa: f64,
    pub theoretical_class: TheoreticalClass,
    pub empirical_conv_fraction: f64,
    pub median_limit_error: Option<f64>,
    pub median_rate_slope: Option<f64>,
    pub n_seeds: u64,
}

#[derive(Debug, Clone, Default)]
pub struct PhaseDiagram {
    pub cells: Vec<PhaseCell>,
}

/// Sweep the multiplicative rule over a (u, d) grid, running an ensemble per
/// cell. Cells share the base seed, so per-seed noise is paired across cells.
pub fn phase_sweep(
    u_grid: &[f64],
    d_grid: &[f64],
    base: &SimConfig,
    n_seeds: u64,
) -> Result<PhaseDiagram> {
    let gbar = match base.rule {
        StepRuleConfig::Multiplicative { gbar, .. } => gbar,
        _ => {
            return Err(Error::InvalidConfig(
                "phase sweep requires the multiplicative rule".into(),
            ))
        }
    };
    let mut cells = Vec::with_capacity(u_grid.len() * d_grid.len());
    for &u in u_grid {
        for &d in d_grid {
            let mut cfg = base.clone();
            cfg.rule = StepRuleConfig::Multiplicative { u, d, gbar };
            cfg.validate()?;
            let theory = theoretical_classification(u, d, &cfg.noise)?;
            let ens = run_ensemble(&cfg, n_seeds)?;
            cells.push(PhaseCell {
                u,
                d,
                ud: u * d,
                kappa: theory.kappa,
                theoretical_class: theory.theoretical_class,
                empirical_conv_fraction: ens.conv_fraction,
                median_limit_error: ens.median_limit_error,
                median_rate_slope: ens.median_rate_slope,
                n_seeds,
            });
        }
    }
    Ok(PhaseDiagram { cells })
}

/// One row of the precision-vs-rate table.
#[derive(Debug, Clone)]
pub struct PrecisionRow {
    pub d: f64,
    pub lambda: f64,
    /// Theoretical `|phi|` boundary of the limit set, by bisection.
    pub boundary_abs_phi: f64,
    pub conv_fraction: f64,
    pub median_limit_error: Option<f64>,
    /// Median steps until gamma first drops below `1e-4 * gbar`.
    pub median_steps_to_small_gamma: Option<f64>,
}

/// Fix `u`, walk `d` toward `1/u`, and tabulate the precision/rate tradeoff.
/// Requires `u d < 1` for every entry.
pub fn precision_vs_rate(
    u: f64,
    d_list: &[f64],
    base: &SimConfig,
    n_seeds: u64,
) -> Result<Vec<PrecisionRow>> {
    let gbar = match base.rule {
        StepRuleConfig::Multiplicative { gbar, .. } => gbar,
        _ => {
            return Err(Error::InvalidConfig(
                "precision sweep requires the multiplicative rule".into(),
            ))
        }
    };
    let mut rows = Vec::with_capacity(d_list.len());
    for &d in d_list {
        if u * d >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "precision sweep requires u*d < 1, got u={u}, d={d}"
            )));
        }
        let mut cfg = base.clone();
        cfg.rule = StepRuleConfig::Multiplicative { u, d, gbar };
        cfg.validate()?;
        let k = kappa(u, d)?;
        let boundary_abs_phi = limit_boundary_phi(&cfg.noise, k)?;
        let ens = run_ensemble(&cfg, n_seeds)?;
        rows.push(PrecisionRow {
            d,
            lambda: lambda_of(u, d)?,
            boundary_abs_phi,
            conv_fraction: ens.conv_fraction,
            median_limit_error: ens.median_limit_error,
            median_steps_to_small_gamma: ens.median_steps_to_small_gamma,
        });
    }
    Ok(rows)
}

/// One-sided Hausdorff distance `sup_{a in A} inf_{b in B} |a - b|`.
pub fn hausdorff_upper(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(a.iter()
        .map(|&x| {
            b.iter()
                .map(|&y| (x - y).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max))
}

/// Number of adjacent pairs violating the requested monotone trend. Used to
/// accept Monte Carlo trends with a bounded number of inversions.
pub fn adjacent_inversions(values: &[f64], nonincreasing: bool) -> usize {
    values
        .windows(2)
        .filter(|w| {
            if nonincreasing {
                w[1] > w[0]
            } else {
                w[1] < w[0]
            }
        })
        .count()
}

//! Target functions and the runtime assumption checker.
//!
//! A [`TargetFunction`] bundles the function, its derivative, a declared
//! derivative bound `M`, a radius `R` outside of which `x * phi(x) > 0`, and
//! the known zero set. Built-in problems are constructed so the declarations
//! hold; user-supplied functions come in as sampled tables treated as
//! piecewise-linear interpolants.

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use serde::Serialize;

const ZERO_TOL: f64 = 1e-12;

/// Evaluation rule of a target function.
#[derive(Debug, Clone, PartialEq)]
enum ProblemKind {
    /// `phi(x) = tanh(a x)`
    Tanh { a: f64 },
    /// `phi(x) = c tanh(a x / c)`: saturating linear with slope `a` at 0.
    LinearSat { a: f64, c: f64 },
    /// `phi(x) = alpha (x - beta sin x)`, `beta < 1`.
    SineDrift { alpha: f64, beta: f64 },
    /// `phi(x) = tanh(x-1) tanh(x) tanh(x+1)`
    ThreeZeros,
    /// Piecewise-linear interpolant through `(xs[i], ys[i])`, extrapolated
    /// with the end slopes.
    Table { xs: Vec<f64>, ys: Vec<f64> },
}

/// A scalar target function with the metadata the step-size theory needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetFunction {
    name: String,
    kind: ProblemKind,
    m_bound: f64,
    radius: f64,
    zeros: Vec<f64>,
    monotone_tail: bool,
}

impl TargetFunction {
    /// `phi(x) = tanh(a x)` with `M = a`, `R = 1`, zero set `{0}`.
    pub fn tanh_problem(a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tanh: a must be > 0, got {a}"
            )));
        }
        Self::finish(TargetFunction {
            name: format!("tanh({a})"),
            kind: ProblemKind::Tanh { a },
            m_bound: a,
            radius: 1.0,
            zeros: vec![0.0],
            monotone_tail: true,
        })
    }

    /// Smooth saturating linear `phi(x) = c tanh(a x / c)`, `M = a`.
    pub fn linear_sat(a: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) || !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "linear_sat: a and c must be > 0, got a={a}, c={c}"
            )));
        }
        Self::finish(TargetFunction {
            name: format!("linear_sat({a},{c})"),
            kind: ProblemKind::LinearSat { a, c },
            m_bound: a,
            radius: 1.0,
            zeros: vec![0.0],
            monotone_tail: true,
        })
    }

    /// `phi(x) = alpha (x - beta sin x)` with `M = alpha (1 + beta)`.
    pub fn sine_drift(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sine_drift: alpha must be > 0, got {alpha}"
            )));
        }
        if !(beta.is_finite() && (0.0..1.0).contains(&beta)) {
            return Err(Error::InvalidConfig(format!(
                "sine_drift: beta must be in [0,1), got {beta}"
            )));
        }
        Self::finish(TargetFunction {
            name: format!("sine_drift({alpha},{beta})"),
            kind: ProblemKind::SineDrift { alpha, beta },
            m_bound: alpha * (1.0 + beta),
            radius: 1.0,
            zeros: vec![0.0],
            monotone_tail: true,
        })
    }

    /// `phi(x) = tanh(x-1) tanh(x) tanh(x+1)` with zeros `{-1, 0, 1}` and
    /// `R = 2`; `M` is probed on a dense grid and declared with 10% headroom.
    pub fn three_zeros() -> Result<Self> {
        let mut f = TargetFunction {
            name: "three_zeros".into(),
            kind: ProblemKind::ThreeZeros,
            m_bound: 1.0, // placeholder until probed
            radius: 2.0,
            zeros: vec![-1.0, 0.0, 1.0],
            monotone_tail: true,
        };
        let probed = f.estimate_sup_deriv(-4.0, 4.0, 100_001);
        f.m_bound = 1.1 * probed;
        Self::finish(f)
    }

    /// Sampled user function as a piecewise-linear interpolant. `xs` must be
    /// strictly increasing; `m_bound`, `radius`, and `zeros` are declared by
    /// the caller and validated against the table.
    pub fn table(
        name: impl Into<String>,
        xs: Vec<f64>,
        ys: Vec<f64>,
        m_bound: f64,
        radius: f64,
        zeros: Vec<f64>,
    ) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidConfig(
                "table: need at least two samples and matching xs/ys lengths".into(),
            ));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("table: samples must be finite".into()));
        }
        if xs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "table: xs must be strictly increasing".into(),
            ));
        }
        let n = xs.len();
        let slope_first = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        let slope_last = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
        let monotone_tail = slope_last * ys[n - 1] >= 0.0 && slope_first * ys[0] <= 0.0;
        let f = TargetFunction {
            name: name.into(),
            kind: ProblemKind::Table { xs, ys },
            m_bound,
            radius,
            zeros,
            monotone_tail,
        };
        Self::finish(f)
    }

    fn finish(mut f: TargetFunction) -> Result<Self> {
        if !(f.m_bound.is_finite() && f.m_bound > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "M must be finite and > 0, got {}",
                f.m_bound
            )));
        }
        if !(f.radius.is_finite() && f.radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "R must be finite and > 0, got {}",
                f.radius
            )));
        }
        if f.zeros.is_empty() {
            return Err(Error::InvalidConfig("zero set must be non-empty".into()));
        }
        f.zeros.sort_by(f64::total_cmp);
        for &z in &f.zeros {
            if z.abs() >= f.radius {
                return Err(Error::InvalidConfig(format!(
                    "declared zero {z} lies outside (-R, R) with R = {}",
                    f.radius
                )));
            }
            let v = f.evaluate(z);
            if v.abs() > ZERO_TOL {
                return Err(Error::InvalidConfig(format!(
                    "declared zero {z} has |phi(z)| = {} > {ZERO_TOL}",
                    v.abs()
                )));
            }
        }
        let probe = f.estimate_sup_deriv(-(f.radius + 5.0), f.radius + 5.0, 4001);
        if probe > f.m_bound + 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "derivative probe {probe} exceeds declared M = {}",
                f.m_bound
            )));
        }
        Ok(f)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Declared bound on `sup |phi'|`.
    pub fn m_bound(&self) -> f64 {
        self.m_bound
    }

    /// Radius beyond which the sign condition `x phi(x) > 0` is declared.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Known zeros, sorted ascending.
    pub fn zeros(&self) -> &[f64] {
        &self.zeros
    }

    /// Whether `|phi|` is declared nondecreasing beyond any finite probe
    /// window (true for all built-ins).
    pub fn monotone_tail(&self) -> bool {
        self.monotone_tail
    }

    /// Distance from `x` to the nearest declared zero.
    pub fn distance_to_zero_set(&self, x: f64) -> f64 {
        self.zeros
            .iter()
            .map(|z| (x - z).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// The zero nearest to `x`.
    pub fn nearest_zero(&self, x: f64) -> f64 {
        *self
            .zeros
            .iter()
            .min_by(|a, b| (x - *a).abs().total_cmp(&(x - *b).abs()))
            .expect("zero set is non-empty by construction")
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        match &self.kind {
            ProblemKind::Tanh { a } => (a * x).tanh(),
            ProblemKind::LinearSat { a, c } => c * (a * x / c).tanh(),
            ProblemKind::SineDrift { alpha, beta } => alpha * (x - beta * x.sin()),
            ProblemKind::ThreeZeros => (x - 1.0).tanh() * x.tanh() * (x + 1.0).tanh(),
            ProblemKind::Table { xs, ys } => {
                let (i, j) = Self::segment(xs, x);
                let t = (x - xs[i]) / (xs[j] - xs[i]);
                ys[i] + t * (ys[j] - ys[i])
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.kind {
            ProblemKind::Tanh { a } => {
                let t = (a * x).tanh();
                a * (1.0 - t * t)
            }
            ProblemKind::LinearSat { a, c } => {
                let t = (a * x / c).tanh();
                a * (1.0 - t * t)
            }
            ProblemKind::SineDrift { alpha, beta } => alpha * (1.0 - beta * x.cos()),
            ProblemKind::ThreeZeros => {
                let t1 = (x - 1.0).tanh();
                let t0 = x.tanh();
                let t2 = (x + 1.0).tanh();
                (1.0 - t1 * t1) * t0 * t2 + t1 * (1.0 - t0 * t0) * t2 + t1 * t0 * (1.0 - t2 * t2)
            }
            ProblemKind::Table { xs, ys } => {
                let (i, j) = Self::segment(xs, x);
                (ys[j] - ys[i]) / (xs[j] - xs[i])
            }
        }
    }

    /// Segment `(i, i+1)` used for interpolation at `x`; end segments are
    /// reused outside the table range.
    fn segment(xs: &[f64], x: f64) -> (usize, usize) {
        let n = xs.len();
        match xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => {
                if i + 1 < n {
                    (i, i + 1)
                } else {
                    (n - 2, n - 1)
                }
            }
            Err(0) => (0, 1),
            Err(i) if i >= n => (n - 2, n - 1),
            Err(i) => (i - 1, i),
        }
    }

    /// Max of `|phi'|` over an inclusive uniform grid.
    pub fn estimate_sup_deriv(&self, lo: f64, hi: f64, n_grid: usize) -> f64 {
        assert!(
            lo < hi && n_grid >= 2,
            "estimate_sup_deriv needs lo < hi and n_grid >= 2"
        );
        let mut max = 0.0f64;
        for i in 0..n_grid {
            let x = lo + (hi - lo) * i as f64 / (n_grid - 1) as f64;
            max = max.max(self.derivative(x).abs());
        }
        max
    }
}

/// Verdict of a single assumption check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// One assumption with the numbers behind its verdict. `lhs`/`rhs` are the
/// two sides of the checked inequality where one exists.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub assumption: String,
    pub verdict: Verdict,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub margin: Option<f64>,
    pub note: String,
}

/// Full report of the A2-A6 runtime checks.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn get(&self, id: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.assumption == id)
    }

    /// True when a gate-keeping assumption (A5 or A6) failed; run commands
    /// refuse to start in that case unless forced.
    pub fn blocking_failure(&self) -> bool {
        ["A5", "A6a", "A6b"].iter().any(|id| {
            self.get(id)
                .map(|c| c.verdict == Verdict::Fail)
                .unwrap_or(true)
        })
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.verdict == Verdict::Pass)
    }
}

fn check(
    assumption: &str,
    pass: bool,
    lhs: Option<f64>,
    rhs: Option<f64>,
    margin: Option<f64>,
    note: impl Into<String>,
) -> AssumptionCheck {
    AssumptionCheck {
        assumption: assumption.into(),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        lhs,
        rhs,
        margin,
        note: note.into(),
    }
}

/// Check assumptions A2-A6 for a (problem, noise, max step) triple.
///
/// The unbounded infima in A6 are probed on the window `[R, R + W]` (both
/// signs) with `W = 10 * gbar * M` and combined with the problem's
/// monotone-tail flag, so the report is explicit about being window-verified.
pub fn check_assumptions(f: &TargetFunction, noise: &NoiseModel, gbar: f64) -> AssumptionReport {
    let m = f.m_bound();
    let r = f.radius();
    let s = noise.variance();
    let window = 10.0 * gbar * m;
    let mut checks = Vec::with_capacity(7);

    checks.push(check(
        "A2",
        true,
        Some(s),
        None,
        None,
        "zero mean by construction; lhs is the variance S",
    ));

    match noise.density_interval() {
        Some(l) if l.is_finite() => checks.push(check(
            "A3a",
            true,
            Some(l),
            Some(0.0),
            Some(l),
            "positive density on [-L, L]; lhs is L",
        )),
        Some(_) => checks.push(check(
            "A3a",
            true,
            None,
            Some(0.0),
            None,
            "positive density on every interval (full support)",
        )),
        None => checks.push(check(
            "A3a",
            false,
            None,
            Some(0.0),
            None,
            "no interval of positive density",
        )),
    }

    let atom_mass = noise.total_atom_mass();
    checks.push(check(
        "A3b",
        atom_mass == 0.0,
        Some(atom_mass),
        Some(0.0),
        Some(-atom_mass),
        "lhs is the total point mass",
    ));

    let probe_span = r + window.max(1.0);
    let sup_probe = f.estimate_sup_deriv(-probe_span, probe_span, 10_001);
    checks.push(check(
        "A4",
        sup_probe <= m + 1e-9,
        Some(sup_probe),
        Some(m),
        Some(m - sup_probe),
        "lhs is the grid probe of sup |phi'|, rhs the declared M",
    ));

    let a5_pass = m.is_finite() && gbar < 2.0 / m;
    checks.push(check(
        "A5",
        a5_pass,
        Some(gbar),
        Some(2.0 / m),
        Some(2.0 / m - gbar),
        "max step must satisfy gbar < 2/M",
    ));

    // A6(a): sign of x*phi(x) on [R, R+W] for both signs, plus the tail flag.
    let n = 2001;
    let mut min_sign_product = f64::INFINITY;
    let mut min_phi_sq = f64::INFINITY;
    for i in 0..n {
        let x = r + window * i as f64 / (n - 1) as f64;
        for x in [x, -x] {
            let phi = f.evaluate(x);
            min_sign_product = min_sign_product.min(x * phi);
            min_phi_sq = min_phi_sq.min(phi * phi);
        }
    }
    let a6a_pass = min_sign_product > 0.0 && f.monotone_tail();
    checks.push(check(
        "A6a",
        a6a_pass,
        Some(min_sign_product),
        Some(0.0),
        Some(min_sign_product),
        format!(
            "window-verified on |x| in [R, R+{window:.6}]; monotone-tail flag = {}",
            f.monotone_tail()
        ),
    ));

    // A6(b): inf phi^2 outside radius must beat gbar*M*S / (2 - gbar*M).
    if a5_pass {
        let threshold = gbar * m * s / (2.0 - gbar * m);
        checks.push(check(
            "A6b",
            min_phi_sq > threshold,
            Some(min_phi_sq),
            Some(threshold),
            Some(min_phi_sq - threshold),
            "window-verified inf of phi^2 for |x| >= R vs gbar*M*S/(2 - gbar*M)",
        ));
    } else {
        checks.push(check(
            "A6b",
            false,
            Some(min_phi_sq),
            None,
            None,
            "threshold undefined because A5 fails (gbar*M >= 2)",
        ));
    }

    AssumptionReport { checks }
}

//! Measurement-noise models and sign-agreement (crossing) probabilities.
//!
//! A noise model is a zero-mean distribution for the additive measurement
//! error. Besides sampling, every model exposes CDF access, which is what the
//! crossing probabilities need:
//!
//! * `k_pair(z1, z2)` — probability that two independent noisy readings at
//!   levels `z1`, `z2` agree in sign,
//! * `k_diag(z) = k_pair(z, z)`,
//! * `k_plus` / `k_minus` — upper/lower limits of `k_pair` over a shrinking
//!   square of levels around `z`, realized by corner evaluation over a
//!   decreasing epsilon sequence.
//!
//! For atom-free models the shrinking-square limits coincide with `k_diag`;
//! atoms split them apart, which is exactly what the step-size phase theory
//! cares about.

use crate::error::{Error, Result};
use crate::rng::RandomState;
use rand_distr::{Distribution, StandardNormal};

/// Continuous, sign-symmetric, zero-mean families with closed-form CDFs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContinuousFamily {
    Gaussian { sigma: f64 },
    Uniform { halfwidth: f64 },
    Laplace { scale: f64 },
}

impl ContinuousFamily {
    fn validate(&self) -> Result<()> {
        let (name, p) = match *self {
            ContinuousFamily::Gaussian { sigma } => ("gaussian sigma", sigma),
            ContinuousFamily::Uniform { halfwidth } => ("uniform halfwidth", halfwidth),
            ContinuousFamily::Laplace { scale } => ("laplace scale", scale),
        };
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "{name} must be finite and > 0, got {p}"
            )));
        }
        Ok(())
    }

    fn variance(&self) -> f64 {
        match *self {
            ContinuousFamily::Gaussian { sigma } => sigma * sigma,
            ContinuousFamily::Uniform { halfwidth } => halfwidth * halfwidth / 3.0,
            ContinuousFamily::Laplace { scale } => 2.0 * scale * scale,
        }
    }

    /// Half-width of the interval around 0 on which every subinterval has
    /// positive probability.
    fn density_interval(&self) -> f64 {
        match *self {
            ContinuousFamily::Gaussian { .. } | ContinuousFamily::Laplace { .. } => f64::INFINITY,
            ContinuousFamily::Uniform { halfwidth } => halfwidth,
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match *self {
            ContinuousFamily::Gaussian { sigma } => {
                0.5 * libm::erfc(-x / (sigma * std::f64::consts::SQRT_2))
            }
            ContinuousFamily::Uniform { halfwidth } => {
                ((x + halfwidth) / (2.0 * halfwidth)).clamp(0.0, 1.0)
            }
            ContinuousFamily::Laplace { scale } => {
                if x < 0.0 {
                    0.5 * (x / scale).exp()
                } else {
                    1.0 - 0.5 * (-x / scale).exp()
                }
            }
        }
    }

    fn sample(&self, rng: &mut RandomState) -> f64 {
        match *self {
            ContinuousFamily::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng.inner());
                sigma * z
            }
            ContinuousFamily::Uniform { halfwidth } => halfwidth * (2.0 * rng.uniform01() - 1.0),
            ContinuousFamily::Laplace { scale } => {
                // Inverse CDF; reject u == 0 to avoid the -inf endpoint.
                let mut u = rng.uniform01();
                while u == 0.0 {
                    u = rng.uniform01();
                }
                let w = u - 0.5;
                if w < 0.0 {
                    scale * (1.0 + 2.0 * w).ln()
                } else {
                    -scale * (1.0 - 2.0 * w).ln()
                }
            }
        }
    }
}

/// A point mass in an [`NoiseKind::AtomMixture`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// The distribution family of a noise model.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    Continuous(ContinuousFamily),
    /// Continuous part with total mass `1 - sum(masses)` plus finite atoms.
    /// The first moment of the mixture must be zero.
    AtomMixture {
        continuous: ContinuousFamily,
        atoms: Vec<Atom>,
    },
    /// Deterministic zero error (variance 0). Testing hook for the
    /// noiseless counterpart of the iteration.
    Zero,
}

/// Zero-mean measurement-error distribution with CDF access.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    variance: f64,
    density_interval: Option<f64>,
}

/// Shrinking-square limit of a crossing probability: the value at the
/// smallest epsilon plus the per-epsilon corner trace for convergence
/// inspection.
#[derive(Debug, Clone)]
pub struct KLimit {
    pub value: f64,
    /// `(epsilon, corner extremum)` pairs in the order evaluated.
    pub trace: Vec<(f64, f64)>,
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::continuous(ContinuousFamily::Gaussian { sigma })
    }

    pub fn uniform(halfwidth: f64) -> Result<Self> {
        Self::continuous(ContinuousFamily::Uniform { halfwidth })
    }

    pub fn laplace(scale: f64) -> Result<Self> {
        Self::continuous(ContinuousFamily::Laplace { scale })
    }

    pub fn continuous(family: ContinuousFamily) -> Result<Self> {
        family.validate()?;
        Ok(NoiseModel {
            variance: family.variance(),
            density_interval: Some(family.density_interval()),
            kind: NoiseKind::Continuous(family),
        })
    }

    /// Deterministic zero noise (variance 0).
    pub fn zero() -> Self {
        NoiseModel {
            kind: NoiseKind::Zero,
            variance: 0.0,
            density_interval: None,
        }
    }

    /// Mixture of a continuous family (scaled by the leftover mass) and
    /// finitely many atoms. Masses must lie in (0,1) and sum to less than 1;
    /// the mixture's first moment must vanish.
    pub fn atom_mixture(continuous: ContinuousFamily, mut atoms: Vec<Atom>) -> Result<Self> {
        continuous.validate()?;
        if atoms.is_empty() {
            return Err(Error::InvalidConfig(
                "atom_mixture requires at least one atom (use the plain family otherwise)".into(),
            ));
        }
        let mut total_mass = 0.0;
        let mut first_moment = 0.0;
        let mut abs_moment = 0.0;
        for a in &atoms {
            if !(a.mass > 0.0 && a.mass < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "atom mass must be in (0,1), got {}",
                    a.mass
                )));
            }
            if !a.location.is_finite() {
                return Err(Error::InvalidConfig("atom location must be finite".into()));
            }
            total_mass += a.mass;
            first_moment += a.mass * a.location;
            abs_moment += (a.mass * a.location).abs();
        }
        if total_mass >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "total atom mass must be < 1, got {total_mass}"
            )));
        }
        if first_moment.abs() > 1e-12 * abs_moment.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "atom mixture must have zero first moment, got {first_moment}"
            )));
        }
        atoms.sort_by(|a, b| a.location.total_cmp(&b.location));
        if atoms.windows(2).any(|w| w[0].location == w[1].location) {
            return Err(Error::InvalidConfig("duplicate atom locations".into()));
        }
        let leftover = 1.0 - total_mass;
        let second_moment = leftover * continuous.variance()
            + atoms
                .iter()
                .map(|a| a.mass * a.location * a.location)
                .sum::<f64>();
        Ok(NoiseModel {
            variance: second_moment,
            density_interval: Some(continuous.density_interval()),
            kind: NoiseKind::AtomMixture { continuous, atoms },
        })
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    /// Second moment S of the error distribution.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Standard deviation, the natural scale for grids and epsilons.
    pub fn sigma(&self) -> f64 {
        self.variance.sqrt()
    }

    /// The half-width L from the positive-density assumption, if the model
    /// satisfies it.
    pub fn density_interval(&self) -> Option<f64> {
        self.density_interval
    }

    pub fn has_atoms(&self) -> bool {
        matches!(self.kind, NoiseKind::AtomMixture { .. } | NoiseKind::Zero)
    }

    /// Total point mass across all atoms (0 for continuous models).
    pub fn total_atom_mass(&self) -> f64 {
        match &self.kind {
            NoiseKind::Continuous(_) => 0.0,
            NoiseKind::AtomMixture { atoms, .. } => atoms.iter().map(|a| a.mass).sum(),
            NoiseKind::Zero => 1.0,
        }
    }

    /// Point mass at `x` (nonzero only for atomic models).
    pub fn atom_mass_at(&self, x: f64) -> f64 {
        match &self.kind {
            NoiseKind::Continuous(_) => 0.0,
            NoiseKind::AtomMixture { atoms, .. } => atoms
                .iter()
                .find(|a| a.location == x)
                .map(|a| a.mass)
                .unwrap_or(0.0),
            NoiseKind::Zero => {
                if x == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// One i.i.d. draw.
    pub fn sample(&self, rng: &mut RandomState) -> f64 {
        match &self.kind {
            NoiseKind::Continuous(fam) => fam.sample(rng),
            NoiseKind::AtomMixture { continuous, atoms } => {
                let u = rng.uniform01();
                let mut cum = 0.0;
                for a in atoms {
                    cum += a.mass;
                    if u < cum {
                        return a.location;
                    }
                }
                continuous.sample(rng)
            }
            NoiseKind::Zero => 0.0,
        }
    }

    /// Right-continuous CDF, `P(xi <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            NoiseKind::Continuous(fam) => fam.cdf(x),
            NoiseKind::AtomMixture { continuous, atoms } => {
                let leftover = 1.0 - atoms.iter().map(|a| a.mass).sum::<f64>();
                let atomic: f64 = atoms
                    .iter()
                    .filter(|a| a.location <= x)
                    .map(|a| a.mass)
                    .sum();
                (leftover * continuous.cdf(x) + atomic).clamp(0.0, 1.0)
            }
            NoiseKind::Zero => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Left limit of the CDF, `P(xi < x)`; differs from [`cdf`](Self::cdf)
    /// exactly by the atom mass at `x`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        match &self.kind {
            NoiseKind::Continuous(fam) => fam.cdf(x),
            NoiseKind::AtomMixture { continuous, atoms } => {
                let leftover = 1.0 - atoms.iter().map(|a| a.mass).sum::<f64>();
                let atomic: f64 = atoms
                    .iter()
                    .filter(|a| a.location < x)
                    .map(|a| a.mass)
                    .sum();
                (leftover * continuous.cdf(x) + atomic).clamp(0.0, 1.0)
            }
            NoiseKind::Zero => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `P(xi > -z)`, the chance a noisy reading at level `z` is positive.
    fn upper_prob(&self, z: f64) -> f64 {
        match &self.kind {
            // Sign symmetry: P(xi > -z) = P(xi < z) = F(z); evaluating at z
            // keeps tail accuracy.
            NoiseKind::Continuous(fam) => fam.cdf(z),
            _ => 1.0 - self.cdf(-z),
        }
    }

    /// `P(xi < -z)`, the chance a noisy reading at level `z` is negative.
    fn lower_prob(&self, z: f64) -> f64 {
        match &self.kind {
            NoiseKind::Continuous(fam) => fam.cdf(-z),
            _ => self.cdf_left(-z),
        }
    }

    /// Probability that independent noisy readings at fixed levels `z1` and
    /// `z2` have a positive product:
    /// `(1 - F(-z1))(1 - F(-z2)) + F_left(-z1) F_left(-z2)`.
    pub fn k_pair(&self, z1: f64, z2: f64) -> f64 {
        let a1 = self.upper_prob(z1);
        let a2 = self.upper_prob(z2);
        let b1 = self.lower_prob(z1);
        let b2 = self.lower_prob(z2);
        a1 * a2 + b1 * b2
    }

    /// Sign-agreement probability at a single level, `k_pair(z, z)`.
    pub fn k_diag(&self, z: f64) -> f64 {
        self.k_pair(z, z)
    }

    /// Upper shrinking-square limit of the sign-agreement probability at
    /// level `z`, evaluated on the corners of `(z - eps, z + eps)^2` for each
    /// epsilon in the given strictly decreasing sequence.
    pub fn k_plus(&self, z: f64, epsilons: &[f64]) -> Result<KLimit> {
        self.k_corner_limit(z, epsilons, true)
    }

    /// Lower shrinking-square limit; see [`k_plus`](Self::k_plus).
    pub fn k_minus(&self, z: f64, epsilons: &[f64]) -> Result<KLimit> {
        self.k_corner_limit(z, epsilons, false)
    }

    /// Exact epsilon-to-zero value of the upper corner limit (no trace).
    pub fn k_plus_limit(&self, z: f64) -> f64 {
        self.k_corner_limit_exact(z, true)
    }

    /// Exact epsilon-to-zero value of the lower corner limit (no trace).
    pub fn k_minus_limit(&self, z: f64) -> f64 {
        self.k_corner_limit_exact(z, false)
    }

    fn k_corner_limit(&self, z: f64, epsilons: &[f64], upper: bool) -> Result<KLimit> {
        if epsilons.is_empty() {
            return Err(Error::InvalidConfig(
                "epsilon sequence must be non-empty".into(),
            ));
        }
        if epsilons.iter().any(|&e| !e.is_finite() || e <= 0.0) {
            return Err(Error::InvalidConfig(
                "epsilons must be finite and > 0".into(),
            ));
        }
        if epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidConfig(
                "epsilon sequence must be strictly decreasing".into(),
            ));
        }
        // k_pair is piecewise monotone in each argument, so the square
        // extremum sits at a corner.
        let mut trace = Vec::with_capacity(epsilons.len());
        for &eps in epsilons {
            let lo = z - eps;
            let hi = z + eps;
            let corners = [
                self.k_pair(hi, hi),
                self.k_pair(hi, lo),
                self.k_pair(lo, hi),
                self.k_pair(lo, lo),
            ];
            let v = if upper {
                corners.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            } else {
                corners.iter().copied().fold(f64::INFINITY, f64::min)
            };
            trace.push((eps, v));
        }
        let value = self.k_corner_limit_exact(z, upper);
        Ok(KLimit { value, trace })
    }

    /// The exact epsilon-to-zero value the corner trace converges to. Only a
    /// CDF jump at `-z` separates the one-sided limits; atom-free models give
    /// back `k_diag(z)`.
    fn k_corner_limit_exact(&self, z: f64, upper: bool) -> f64 {
        if let NoiseKind::Continuous(_) = self.kind {
            return self.k_diag(z);
        }
        let a_plus = 1.0 - self.cdf_left(-z); // levels approaching z from above
        let a_minus = 1.0 - self.cdf(-z); // levels approaching z from below
        let b_plus = self.cdf_left(-z);
        let b_minus = self.cdf(-z);
        let candidates = [
            a_plus * a_plus + b_plus * b_plus,
            a_minus * a_minus + b_minus * b_minus,
            a_plus * a_minus + b_plus * b_minus,
        ];
        if upper {
            candidates.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        } else {
            candidates.iter().copied().fold(f64::INFINITY, f64::min)
        }
    }

    /// Default epsilon sequence for the corner limits, scaled by sigma.
    pub fn default_epsilons(&self) -> Vec<f64> {
        let scale = if self.sigma() > 0.0 {
            self.sigma()
        } else {
            1.0
        };
        [1e-1, 1e-2, 1e-3, 1e-4].iter().map(|e| e * scale).collect()
    }

    /// Monte Carlo estimate of `k_pair(z1, z2)` from `n` independent pairs.
    /// Brute-force oracle, deliberately independent of the CDF path.
    pub fn k_mc_oracle(&self, z1: f64, z2: f64, n: u64, rng: &mut RandomState) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidConfig("k_mc_oracle requires n >= 1".into()));
        }
        let mut hits = 0u64;
        for _ in 0..n {
            let xi1 = self.sample(rng);
            let xi2 = self.sample(rng);
            if (z1 + xi1) * (z2 + xi2) > 0.0 {
                hits += 1;
            }
        }
        Ok(hits as f64 / n as f64)
    }

    /// Minimum of `k_minus` over a grid, with the minimizing grid point.
    pub fn inf_k_minus(&self, z_grid: &[f64]) -> Result<(f64, f64)> {
        if z_grid.is_empty() {
            return Err(Error::EmptySet);
        }
        let eps = self.default_epsilons();
        let mut best = (f64::INFINITY, f64::NAN);
        for &z in z_grid {
            let v = self.k_minus(z, &eps)?.value;
            if v < best.0 {
                best = (v, z);
            }
        }
        Ok(best)
    }
}

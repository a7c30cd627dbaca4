//! Experiment configuration: a TOML document that parses into a fully typed,
//! default-filled [`ExperimentConfig`], validates into domain objects, and
//! echoes back canonically (the echo is what gets hashed into artifacts).

use crate::engine::{SimConfig, StopCriteria};
use crate::error::{Error, Result};
use crate::noise::{Atom, ContinuousFamily, NoiseModel};
use crate::problem::{check_assumptions, AssumptionReport, TargetFunction, Verdict};
use crate::stepsize::StepRuleConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub name: String,
    #[serde(default)]
    pub params: ProblemParams,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ys: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeros: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub family: String,
    #[serde(default)]
    pub params: NoiseParams,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halfwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Continuous part of an atom mixture: "gaussian" | "uniform" | "laplace".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuous: Option<String>,
    /// `[location, mass]` pairs of an atom mixture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSection {
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitSection {
    pub x0: f64,
    pub gamma0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection {
            x0: 2.0,
            gamma0: 0.1,
            gamma1: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub horizon: u64,
    #[serde(alias = "seeds")]
    pub seed: u64,
    pub n_seeds: u64,
    pub record_stride: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            horizon: 20_000,
            seed: 0,
            n_seeds: 100,
            record_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopSection {
    pub conv_window: u64,
    pub conv_tol: f64,
    pub gamma_tail_tol: f64,
    pub blowup_bound: f64,
}

impl Default for StopSection {
    fn default() -> Self {
        let s = StopCriteria::default();
        StopSection {
            conv_window: s.conv_window,
            conv_tol: s.conv_tol,
            gamma_tail_tol: s.gamma_tail_tol,
            blowup_bound: s.blowup_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Artifact file name; each subcommand has its own default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// "csv" or "json".
    pub format: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            path: None,
            format: "csv".into(),
        }
    }
}

/// The parsed, default-filled experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub noise: NoiseSection,
    pub rule: RuleSection,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub stop: StopSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// Parse a TOML experiment config. Unknown keys are rejected with the
/// parser's line/key context.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

impl ExperimentConfig {
    /// Canonical echo of the config with all defaults filled; re-parsing the
    /// echo reproduces the config exactly.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical echo, recorded in artifact metadata.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_canonical_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Config resolved into domain objects, with the assumption report attached.
#[derive(Debug, Clone)]
pub struct ValidatedExperiment {
    pub config: ExperimentConfig,
    pub problem: TargetFunction,
    pub noise: NoiseModel,
    pub rule: StepRuleConfig,
    pub sim: SimConfig,
    pub report: AssumptionReport,
    /// Whether --force was needed to get past a failed gate assumption.
    pub forced: bool,
}

fn require(v: Option<f64>, key: &str) -> Result<f64> {
    v.ok_or_else(|| Error::InvalidConfig(format!("{key} is required")))
}

fn reject_unused(pairs: &[(&str, bool)], context: &str) -> Result<()> {
    for (key, present) in pairs {
        if *present {
            return Err(Error::InvalidConfig(format!(
                "{key} is not used by {context}"
            )));
        }
    }
    Ok(())
}

pub fn build_problem(section: &ProblemSection) -> Result<TargetFunction> {
    let p = &section.params;
    match section.name.as_str() {
        "tanh" => {
            reject_unused(
                &[
                    ("problem.params.c", p.c.is_some()),
                    ("problem.params.alpha", p.alpha.is_some()),
                    ("problem.params.beta", p.beta.is_some()),
                    ("problem.params.xs", p.xs.is_some()),
                ],
                "tanh",
            )?;
            TargetFunction::tanh_problem(p.a.unwrap_or(1.0))
        }
        "linear_sat" => {
            reject_unused(
                &[("problem.params.alpha", p.alpha.is_some()), ("problem.params.beta", p.beta.is_some())],
                "linear_sat",
            )?;
            TargetFunction::linear_sat(
                require(p.a, "problem.params.a")?,
                require(p.c, "problem.params.c")?,
            )
        }
        "sine_drift" => {
            reject_unused(
                &[("problem.params.a", p.a.is_some()), ("problem.params.c", p.c.is_some())],
                "sine_drift",
            )?;
            TargetFunction::sine_drift(
                require(p.alpha, "problem.params.alpha")?,
                require(p.beta, "problem.params.beta")?,
            )
        }
        "three_zeros" => TargetFunction::three_zeros(),
        "table" => {
            let xs = p.xs.clone().ok_or_else(|| {
                Error::InvalidConfig("problem.params.xs is required for table".into())
            })?;
            let ys = p.ys.clone().ok_or_else(|| {
                Error::InvalidConfig("problem.params.ys is required for table".into())
            })?;
            let zeros = p.zeros.clone().ok_or_else(|| {
                Error::InvalidConfig("problem.params.zeros is required for table".into())
            })?;
            TargetFunction::table(
                "table",
                xs,
                ys,
                require(p.m, "problem.params.m")?,
                require(p.r, "problem.params.r")?,
                zeros,
            )
        }
        other => Err(Error::InvalidConfig(format!(
            "problem.name '{other}' unknown (expected tanh | linear_sat | sine_drift | three_zeros | table)"
        ))),
    }
}

fn build_continuous(name: &str, p: &NoiseParams) -> Result<ContinuousFamily> {
    match name {
        "gaussian" => Ok(ContinuousFamily::Gaussian { sigma: require(p.sigma, "noise.params.sigma")? }),
        "uniform" => {
            Ok(ContinuousFamily::Uniform { halfwidth: require(p.halfwidth, "noise.params.halfwidth")? })
        }
        "laplace" => Ok(ContinuousFamily::Laplace { scale: require(p.scale, "noise.params.scale")? }),
        other => Err(Error::InvalidConfig(format!(
            "noise family '{other}' unknown (expected gaussian | uniform | laplace | atom_mixture | zero)"
        ))),
    }
}

pub fn build_noise(section: &NoiseSection) -> Result<NoiseModel> {
    let p = &section.params;
    match section.family.as_str() {
        "zero" => Ok(NoiseModel::zero()),
        "atom_mixture" => {
            let cont_name = p.continuous.as_deref().ok_or_else(|| {
                Error::InvalidConfig("noise.params.continuous is required for atom_mixture".into())
            })?;
            let atoms = p
                .atoms
                .as_ref()
                .ok_or_else(|| {
                    Error::InvalidConfig("noise.params.atoms is required for atom_mixture".into())
                })?
                .iter()
                .map(|&[location, mass]| Atom { location, mass })
                .collect();
            NoiseModel::atom_mixture(build_continuous(cont_name, p)?, atoms)
        }
        family => {
            reject_unused(
                &[
                    ("noise.params.continuous", p.continuous.is_some()),
                    ("noise.params.atoms", p.atoms.is_some()),
                ],
                family,
            )?;
            NoiseModel::continuous(build_continuous(family, p)?)
        }
    }
}

pub fn build_rule(section: &RuleSection) -> Result<StepRuleConfig> {
    let rule = match section.variant.as_str() {
        "multiplicative" => {
            let u = require(section.u, "rule.u")?;
            let d = require(section.d, "rule.d")?;
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::InvalidConfig(format!("rule.d must be in (0,1), got {d}")));
            }
            if u.is_nan() || u <= 1.0 {
                return Err(Error::InvalidConfig(format!("rule.u must be > 1, got {u}")));
            }
            StepRuleConfig::Multiplicative { u, d, gbar: require(section.gbar, "rule.gbar")? }
        }
        "kesten" => {
            // schedule scale defaults to the configured max step so rule
            // comparisons share gbar
            let c = section.c.or(section.gbar).ok_or_else(|| {
                Error::InvalidConfig("rule.c (or rule.gbar) is required for kesten".into())
            })?;
            StepRuleConfig::Kesten { c }
        }
        "deterministic" => {
            let c = section.c.or(section.gbar).ok_or_else(|| {
                Error::InvalidConfig("rule.c (or rule.gbar) is required for deterministic".into())
            })?;
            StepRuleConfig::Deterministic { c }
        }
        "constant" => StepRuleConfig::Constant { g: require(section.g, "rule.g")? },
        other => Err(Error::InvalidConfig(format!(
            "rule.variant '{other}' unknown (expected multiplicative | kesten | deterministic | constant)"
        )))?,
    };
    rule.validate()?;
    Ok(rule)
}

/// Resolve the config into domain objects and run the assumption gate.
/// A failed A5/A6 check refuses to validate unless `force` is set; the
/// report is produced either way (see [`check_only`]).
pub fn validate(config: &ExperimentConfig, force: bool) -> Result<ValidatedExperiment> {
    let problem = build_problem(&config.problem)?;
    let noise = build_noise(&config.noise)?;
    let rule = build_rule(&config.rule)?;

    match config.output.format.as_str() {
        "csv" | "json" => {}
        other => {
            return Err(Error::InvalidConfig(format!(
                "output.format must be csv or json, got '{other}'"
            )))
        }
    }
    if config.run.n_seeds == 0 {
        return Err(Error::InvalidConfig("run.n_seeds must be >= 1".into()));
    }

    let gamma1 = config.init.gamma1.unwrap_or(config.init.gamma0);
    let sim = SimConfig {
        problem: problem.clone(),
        noise: noise.clone(),
        rule: rule.clone(),
        x0: config.init.x0,
        gamma0: config.init.gamma0,
        gamma1,
        horizon: config.run.horizon,
        seed: config.run.seed,
        record_stride: config.run.record_stride,
        stop: StopCriteria {
            conv_window: config.stop.conv_window,
            conv_tol: config.stop.conv_tol,
            gamma_tail_tol: config.stop.gamma_tail_tol,
            blowup_bound: config.stop.blowup_bound,
        },
    };
    sim.validate()?;

    let report = check_assumptions(&problem, &noise, rule.max_step());
    let blocking = report.blocking_failure();
    if blocking && !force {
        let failed: Vec<String> = report
            .checks
            .iter()
            .filter(|c| {
                c.verdict == Verdict::Fail && ["A5", "A6a", "A6b"].contains(&c.assumption.as_str())
            })
            .map(|c| format!("{} ({})", c.assumption, c.note))
            .collect();
        return Err(Error::InvalidConfig(format!(
            "assumption gate failed: {}; pass --force to run anyway",
            failed.join("; ")
        )));
    }
    Ok(ValidatedExperiment {
        config: config.clone(),
        problem,
        noise,
        rule,
        sim,
        report,
        forced: force && blocking,
    })
}

/// Build domain objects and the assumption report without gating; used by
/// the `check` subcommand, which must produce the report even on failure.
pub fn check_only(
    config: &ExperimentConfig,
) -> Result<(TargetFunction, NoiseModel, StepRuleConfig, AssumptionReport)> {
    let problem = build_problem(&config.problem)?;
    let noise = build_noise(&config.noise)?;
    let rule = build_rule(&config.rule)?;
    let report = check_assumptions(&problem, &noise, rule.max_step());
    Ok((problem, noise, rule, report))
}

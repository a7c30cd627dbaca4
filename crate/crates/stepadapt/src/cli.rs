//! Command-line interface: flag parsing, experiment orchestration, and
//! deterministic artifact emission.

use crate::analysis::{phase_sweep, precision_vs_rate};
use crate::artifact::{write_json_report, ArtifactMeta, Cell, Table};
use crate::config::{parse_config, validate, ExperimentConfig, ValidatedExperiment};
use crate::engine::{run, run_ensemble};
use crate::error::{Error, Result};
use crate::rng::{child_seed, RandomState};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// Experiment driver for step-size-adaptive stochastic root finding.
#[derive(Debug, Parser)]
#[command(name = "stepadapt", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Path to the experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory artifacts are written into.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Override run.n_seeds for ensemble-style commands.
    #[arg(long, global = true)]
    pub seeds: Option<u64>,

    /// Run even if the A5/A6 assumption gate fails (recorded in metadata).
    #[arg(long, global = true)]
    pub force: bool,

    /// Worker threads (wall time only, never results). Falls back to the
    /// STEPADAPT_THREADS environment variable.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a single trajectory and emit its series.
    Run,
    /// Run a seeded ensemble and emit per-seed summaries.
    Ensemble,
    /// Sweep the (u, d) grid from [sweep] and emit one row per cell.
    Phase,
    /// Tabulate crossing probabilities against the Monte Carlo oracle.
    Kcurve {
        /// Half-range of the level grid in units of sigma.
        #[arg(long, default_value_t = 6.0)]
        z_span: f64,
        /// Number of grid points.
        #[arg(long, default_value_t = 121)]
        z_points: usize,
        /// Monte Carlo pairs per grid point.
        #[arg(long, default_value_t = 200_000)]
        mc_samples: u64,
    },
    /// Walk d toward 1/u and emit the precision-vs-rate table.
    Precision,
    /// Check assumptions A2-A6 and emit the report as JSON.
    Check,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Ensemble => "ensemble",
            Command::Phase => "phase",
            Command::Kcurve { .. } => "kcurve",
            Command::Precision => "precision",
            Command::Check => "check",
        }
    }
}

/// What a command wants printed and which exit code it earned.
#[derive(Debug)]
pub struct CommandOutput {
    pub stdout: String,
    pub code: i32,
}

/// Exit code for a hard error: 1 for config problems, 2 for runtime failures.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Parse(_) | Error::InvalidConfig(_) => 1,
        _ => 2,
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("--config PATH is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn artifact_path(cli: &Cli, config: &ExperimentConfig, default_name: &str) -> PathBuf {
    let name = config
        .output
        .path
        .clone()
        .unwrap_or_else(|| default_name.to_string());
    cli.out.join(name)
}

fn default_artifact_name(command: &str, format: &str) -> String {
    let ext = if format == "json" { "json" } else { "csv" };
    format!("{command}.{ext}")
}

fn resolve_threads(cli: &Cli) -> Option<usize> {
    cli.threads.or_else(|| {
        std::env::var("STEPADAPT_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        _ => f(),
    }
}

/// Parse, validate, orchestrate, and emit for one invocation.
pub fn execute(cli: &Cli) -> Result<CommandOutput> {
    let config = load_config(cli)?;
    let meta = ArtifactMeta {
        command: cli.command.name().into(),
        config_sha256: config.hash(),
        seed: config.run.seed,
        force: cli.force,
    };
    let threads = resolve_threads(cli);

    if let Command::Check = cli.command {
        return check_command(cli, &config, &meta);
    }

    let validated = validate(&config, cli.force)?;
    let format = config.output.format.clone();
    let path = artifact_path(
        cli,
        &config,
        &default_artifact_name(cli.command.name(), &format),
    );

    with_threads(threads, || match &cli.command {
        Command::Run => run_command(&validated, &path, &meta, &format),
        Command::Ensemble => ensemble_command(cli, &validated, &path, &meta, &format),
        Command::Phase => phase_command(cli, &validated, &path, &meta, &format),
        Command::Precision => precision_command(cli, &validated, &path, &meta, &format),
        Command::Kcurve {
            z_span,
            z_points,
            mc_samples,
        } => kcurve_command(
            &validated,
            *z_span,
            *z_points,
            *mc_samples,
            &path,
            &meta,
            &format,
        ),
        Command::Check => unreachable!("handled above"),
    })
}

fn check_command(
    cli: &Cli,
    config: &ExperimentConfig,
    meta: &ArtifactMeta,
) -> Result<CommandOutput> {
    let (_, _, _, report) = crate::config::check_only(config)?;
    let path = artifact_path(cli, config, "check.json");
    let body = write_json_report(
        &path,
        meta,
        vec![(
            "assumptions",
            serde_json::to_value(&report.checks).expect("report serializes"),
        )],
    )?;
    let code = if report.blocking_failure() && !cli.force {
        1
    } else {
        0
    };
    Ok(CommandOutput { stdout: body, code })
}

fn run_command(
    v: &ValidatedExperiment,
    path: &Path,
    meta: &ArtifactMeta,
    format: &str,
) -> Result<CommandOutput> {
    let traj = run(&v.sim)?;
    let mut table = Table::new(vec!["t", "x", "y", "gamma", "ln_gamma"]);
    for i in 0..traj.ts.len() {
        table.push(vec![
            Cell::U(traj.ts[i]),
            Cell::F(traj.xs[i]),
            Cell::F(traj.ys[i]),
            Cell::F(traj.gammas[i]),
            Cell::F(traj.gammas[i].ln()),
        ]);
    }
    table.write(path, meta, format)?;
    let x_star = match traj.status {
        crate::engine::RunStatus::Converged { x_star, .. } => format!("{x_star}"),
        _ => "-".into(),
    };
    Ok(CommandOutput {
        stdout: format!(
            "run: status={} t_final={} x_star={} -> {}",
            traj.status.label(),
            traj.t_final,
            x_star,
            path.display()
        ),
        code: 0,
    })
}

fn ensemble_command(
    cli: &Cli,
    v: &ValidatedExperiment,
    path: &Path,
    meta: &ArtifactMeta,
    format: &str,
) -> Result<CommandOutput> {
    let n_seeds = cli.seeds.unwrap_or(v.config.run.n_seeds);
    let ens = run_ensemble(&v.sim, n_seeds)?;
    let mut table = Table::new(vec![
        "seed",
        "status",
        "x_star",
        "t_stop",
        "rate_slope",
        "limit_error",
    ]);
    for s in &ens.summaries {
        table.push(vec![
            Cell::U(s.seed),
            Cell::S(s.status.label().into()),
            Cell::Opt(s.x_star),
            Cell::U(s.t_stop),
            Cell::Opt(s.rate_slope),
            Cell::Opt(s.limit_error),
        ]);
    }
    table.write(path, meta, format)?;
    let attraction = if ens.zero_attraction.len() > 1 {
        let parts: Vec<String> = ens
            .zero_attraction
            .iter()
            .map(|(z, n)| format!("{z}:{n}"))
            .collect();
        format!(" attraction=[{}]", parts.join(","))
    } else {
        String::new()
    };
    Ok(CommandOutput {
        stdout: format!(
            "ensemble: n={} conv_fraction={} median_limit_error={} median_rate_slope={}{} -> {}",
            n_seeds,
            ens.conv_fraction,
            opt(ens.median_limit_error),
            opt(ens.median_rate_slope),
            attraction,
            path.display()
        ),
        code: 0,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_else(|| "-".into())
}

fn phase_command(
    cli: &Cli,
    v: &ValidatedExperiment,
    path: &Path,
    meta: &ArtifactMeta,
    format: &str,
) -> Result<CommandOutput> {
    let sweep = v
        .config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("[sweep] section is required for phase".into()))?;
    let u_grid = sweep
        .u_grid
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("sweep.u_grid is required for phase".into()))?;
    let d_grid = sweep
        .d_grid
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("sweep.d_grid is required for phase".into()))?;
    let n_seeds = cli.seeds.unwrap_or(v.config.run.n_seeds);
    let diagram = phase_sweep(u_grid, d_grid, &v.sim, n_seeds)?;
    let mut table = Table::new(vec![
        "u",
        "d",
        "ud",
        "kappa",
        "class",
        "conv_fraction",
        "median_limit_err",
        "median_slope",
    ]);
    for c in &diagram.cells {
        table.push(vec![
            Cell::F(c.u),
            Cell::F(c.d),
            Cell::F(c.ud),
            Cell::F(c.kappa),
            Cell::S(c.theoretical_class.label().into()),
            Cell::F(c.empirical_conv_fraction),
            Cell::Opt(c.median_limit_error),
            Cell::Opt(c.median_rate_slope),
        ]);
    }
    table.write(path, meta, format)?;
    Ok(CommandOutput {
        stdout: format!(
            "phase: cells={} n_seeds={} -> {}",
            diagram.cells.len(),
            n_seeds,
            path.display()
        ),
        code: 0,
    })
}

fn precision_command(
    cli: &Cli,
    v: &ValidatedExperiment,
    path: &Path,
    meta: &ArtifactMeta,
    format: &str,
) -> Result<CommandOutput> {
    let sweep =
        v.config.sweep.as_ref().ok_or_else(|| {
            Error::InvalidConfig("[sweep] section is required for precision".into())
        })?;
    let d_list = sweep
        .d_list
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("sweep.d_list is required for precision".into()))?;
    let u = match v.rule {
        crate::stepsize::StepRuleConfig::Multiplicative { u, .. } => u,
        _ => {
            return Err(Error::InvalidConfig(
                "precision requires the multiplicative rule".into(),
            ))
        }
    };
    let n_seeds = cli.seeds.unwrap_or(v.config.run.n_seeds);
    let rows = precision_vs_rate(u, d_list, &v.sim, n_seeds)?;
    let mut table = Table::new(vec![
        "d",
        "lambda",
        "boundary_abs_phi",
        "median_err",
        "median_steps",
    ]);
    for r in &rows {
        table.push(vec![
            Cell::F(r.d),
            Cell::F(r.lambda),
            Cell::F(r.boundary_abs_phi),
            Cell::Opt(r.median_limit_error),
            Cell::Opt(r.median_steps_to_small_gamma),
        ]);
    }
    table.write(path, meta, format)?;
    Ok(CommandOutput {
        stdout: format!(
            "precision: rows={} n_seeds={} -> {}",
            rows.len(),
            n_seeds,
            path.display()
        ),
        code: 0,
    })
}

fn kcurve_command(
    v: &ValidatedExperiment,
    z_span: f64,
    z_points: usize,
    mc_samples: u64,
    path: &Path,
    meta: &ArtifactMeta,
    format: &str,
) -> Result<CommandOutput> {
    if z_points < 2 || !z_span.is_finite() || z_span <= 0.0 || mc_samples == 0 {
        return Err(Error::InvalidConfig(
            "kcurve needs z_span > 0, z_points >= 2, mc_samples >= 1".into(),
        ));
    }
    let noise = &v.noise;
    let scale = if noise.sigma() > 0.0 {
        noise.sigma()
    } else {
        1.0
    };
    let half = z_span * scale;
    let eps = noise.default_epsilons();
    let base_seed = v.config.run.seed;

    let rows: Vec<Result<Vec<Cell>>> = (0..z_points)
        .into_par_iter()
        .map(|i| {
            let z = -half + 2.0 * half * i as f64 / (z_points - 1) as f64;
            let k_diag = noise.k_diag(z);
            let k_plus = noise.k_plus(z, &eps)?.value;
            let k_minus = noise.k_minus(z, &eps)?.value;
            let mut rng = RandomState::from_seed(child_seed(base_seed, i as u64));
            let k_mc = noise.k_mc_oracle(z, z, mc_samples, &mut rng)?;
            let stderr = (k_mc * (1.0 - k_mc) / mc_samples as f64).sqrt();
            Ok(vec![
                Cell::F(z),
                Cell::F(k_diag),
                Cell::F(k_plus),
                Cell::F(k_minus),
                Cell::F(k_mc),
                Cell::F(stderr),
            ])
        })
        .collect();

    let mut table = Table::new(vec![
        "z",
        "k_diag",
        "k_plus",
        "k_minus",
        "k_mc",
        "mc_stderr",
    ]);
    for row in rows {
        table.push(row?);
    }
    table.write(path, meta, format)?;
    Ok(CommandOutput {
        stdout: format!(
            "kcurve: points={z_points} mc_samples={mc_samples} -> {}",
            path.display()
        ),
        code: 0,
    })
}

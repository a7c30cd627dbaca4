//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them). Statistical criteria
//! use pinned seeds, so every run is reproducible.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use stepadapt::analysis::{adjacent_inversions, limit_set_membership, precision_vs_rate};
use stepadapt::engine::{run, run_ensemble, EnsembleResult, SimConfig, StopCriteria};
use stepadapt::noise::NoiseModel;
use stepadapt::problem::TargetFunction;
use stepadapt::rng::{child_seed, RandomState};
use stepadapt::stepsize::{kappa, lambda_of, predicted_drift, StepRuleConfig};

fn criterion(n: u32, name: &str, body: impl FnOnce() -> String) {
    let t0 = Instant::now();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(details) => {
            println!(
                "acceptance {n:02} ({name}): PASS [{:.2}s] {details}",
                t0.elapsed().as_secs_f64()
            );
        }
        Err(cause) => {
            println!(
                "acceptance {n:02} ({name}): FAIL [{:.2}s]",
                t0.elapsed().as_secs_f64()
            );
            std::panic::resume_unwind(cause);
        }
    }
}

/// The convergence-regime setup shared by criteria 3, 4, 5, and 8.
fn reference_config(u: f64, d: f64, seed: u64) -> SimConfig {
    SimConfig {
        problem: TargetFunction::tanh_problem(1.0).unwrap(),
        noise: NoiseModel::gaussian(0.1).unwrap(),
        rule: StepRuleConfig::Multiplicative { u, d, gbar: 0.5 },
        x0: 2.0,
        gamma0: 0.1,
        gamma1: 0.1,
        horizon: 20_000,
        seed,
        record_stride: 1,
        stop: StopCriteria::default(),
    }
}

fn convergent_ensemble() -> &'static EnsembleResult {
    static ENS: OnceLock<EnsembleResult> = OnceLock::new();
    ENS.get_or_init(|| run_ensemble(&reference_config(1.05, 0.9, 42), 200).unwrap())
}

#[test]
fn criterion_01_threshold_formula() {
    criterion(1, "threshold formula", || {
        assert_eq!(kappa(2.0, 0.5).unwrap(), 0.5);
        let k = kappa(1.1, 0.8).unwrap();
        assert!((k - 0.70066).abs() <= 1e-4, "kappa(1.1,0.8) = {k}");

        let mut rng = RandomState::from_seed(1234);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let u = 1.001 + 1.999 * rng.uniform01();
            let d = 0.2 + 0.799 * rng.uniform01();
            let k = kappa(u, d).unwrap();
            let l = lambda_of(u, d).unwrap();
            worst = worst.max((1.0 / (1.0 + l) - k).abs());
        }
        assert!(worst <= 1e-12, "identity deviation {worst}");
        format!("kappa(1.1,0.8)={k:.5}, identity worst dev {worst:.2e}")
    });
}

#[test]
fn criterion_02_crossing_probability() {
    criterion(2, "crossing probability vs MC oracle", || {
        use rayon::prelude::*;
        let gaussian = NoiseModel::gaussian(1.0).unwrap();
        assert_eq!(gaussian.k_diag(0.0), 0.5);

        let families = [
            ("gaussian", gaussian.clone()),
            ("uniform", NoiseModel::uniform(1.0).unwrap()),
            ("laplace", NoiseModel::laplace(1.0).unwrap()),
        ];
        let n = 1_000_000u64;
        let mut worst_ratio = 0.0f64;
        for (fi, (name, model)) in families.iter().enumerate() {
            let sigma = model.sigma();
            let deviations: Vec<(f64, f64, f64)> = (0..20)
                .into_par_iter()
                .map(|i| {
                    let z = -3.0 * sigma + 6.0 * sigma * i as f64 / 19.0;
                    let p = model.k_diag(z);
                    let seed = child_seed(9000 + fi as u64, i as u64);
                    let mut rng = RandomState::from_seed(seed);
                    let mc = model.k_mc_oracle(z, z, n, &mut rng).unwrap();
                    let se = (p * (1.0 - p) / n as f64).sqrt();
                    (z, (mc - p).abs(), se)
                })
                .collect();
            for (z, dev, se) in deviations {
                assert!(
                    dev <= 3.0 * se,
                    "{name} z={z}: |mc-p|={dev} > 3se={}",
                    3.0 * se
                );
                if se > 0.0 {
                    worst_ratio = worst_ratio.max(dev / se);
                }
            }
        }
        format!("60 grid points, n=1e6 each, worst |mc-p|/se = {worst_ratio:.2}")
    });
}

#[test]
fn criterion_03_convergence_regime() {
    criterion(3, "convergence regime ud<1", || {
        let cfg = reference_config(1.05, 0.9, 42);
        let ens = convergent_ensemble();
        assert!(
            ens.conv_fraction >= 0.95,
            "conv fraction {}",
            ens.conv_fraction
        );

        let mut converged = 0u32;
        let mut members = 0u32;
        for s in &ens.summaries {
            if let Some(x_star) = s.x_star {
                converged += 1;
                let m = limit_set_membership(x_star, &cfg.problem, &cfg.noise, 1.05, 0.9, 0.02)
                    .unwrap();
                if m.member {
                    members += 1;
                }
            }
        }
        assert!(converged > 0);
        let frac = members as f64 / converged as f64;
        assert!(frac >= 0.95, "membership fraction {frac}");
        format!(
            "conv_fraction={}, limit-set membership {members}/{converged}",
            ens.conv_fraction
        )
    });
}

#[test]
fn criterion_04_divergence_regime() {
    criterion(4, "divergence regime ud>1", || {
        let cfg = reference_config(1.2, 0.9, 42);
        let ens = run_ensemble(&cfg, 200).unwrap();
        assert!(
            ens.conv_fraction <= 0.05,
            "conv fraction {}",
            ens.conv_fraction
        );
        let med = ens.median_tail_gamma.unwrap();
        assert!(med > 1e-3 * 0.5, "median last-window gamma {med}");
        format!(
            "conv_fraction={}, median last-window gamma={med:.4}",
            ens.conv_fraction
        )
    });
}

#[test]
fn criterion_05_geometric_tail() {
    criterion(5, "geometric step-size tail", || {
        let cfg = reference_config(1.05, 0.9, 42);
        let ens = convergent_ensemble();
        let ln_d = 0.9f64.ln();
        let mut converged = 0u32;
        let mut negative = 0u32;
        let mut in_band = 0u32;
        for s in &ens.summaries {
            let (Some(x_star), Some(slope)) = (s.x_star, s.rate_slope) else {
                continue;
            };
            converged += 1;
            if slope < 0.0 {
                negative += 1;
            }
            let k_star = cfg.noise.k_diag(cfg.problem.evaluate(x_star));
            let drift = predicted_drift(1.05, 0.9, k_star);
            if slope >= ln_d && slope <= 0.5 * drift {
                in_band += 1;
            }
        }
        assert!(converged > 0);
        let f_neg = negative as f64 / converged as f64;
        let f_band = in_band as f64 / converged as f64;
        assert!(f_neg >= 0.95, "negative-slope fraction {f_neg}");
        assert!(f_band >= 0.80, "band fraction {f_band}");
        format!("slope<0 for {negative}/{converged}, in [ln d, drift/2] for {in_band}/{converged}")
    });
}

#[test]
fn criterion_06_deterministic_counterpart() {
    criterion(6, "deterministic counterpart", || {
        let mut hit_times = Vec::new();
        for g in [0.05, 0.2, 0.5, 1.0, 1.9] {
            let cfg = SimConfig {
                problem: TargetFunction::tanh_problem(1.0).unwrap(),
                noise: NoiseModel::zero(),
                rule: StepRuleConfig::Constant { g },
                x0: 2.0,
                gamma0: g,
                gamma1: g,
                horizon: 10_000,
                seed: 0,
                record_stride: 1,
                stop: StopCriteria::default(),
            };
            let traj = run(&cfg).unwrap();
            let first = traj
                .ts
                .iter()
                .zip(traj.xs.iter())
                .find(|(_, x)| x.abs() < 1e-6)
                .map(|(&t, _)| t);
            let t = first.unwrap_or_else(|| panic!("gamma={g}: |x| never < 1e-6"));
            assert!(t <= 10_000, "gamma={g}: reached at {t}");
            hit_times.push(t);
        }
        format!("|x|<1e-6 reached at t={hit_times:?} for gamma in {{0.05,0.2,0.5,1.0,1.9}}")
    });
}

#[test]
fn criterion_07_kesten_baseline() {
    criterion(7, "Kesten baseline", || {
        use rayon::prelude::*;
        let results: Vec<(f64, bool)> = (0..100u64)
            .into_par_iter()
            .map(|i| {
                let cfg = SimConfig {
                    problem: TargetFunction::tanh_problem(1.0).unwrap(),
                    noise: NoiseModel::gaussian(0.1).unwrap(),
                    rule: StepRuleConfig::Kesten { c: 0.5 },
                    x0: 2.0,
                    gamma0: 0.5,
                    gamma1: 0.5,
                    horizon: 100_000,
                    seed: child_seed(7, i),
                    record_stride: 1,
                    stop: StopCriteria::default(),
                };
                let traj = run(&cfg).unwrap();
                let nonincreasing = traj.gammas.windows(2).all(|w| w[1] <= w[0]);
                (traj.xs.last().unwrap().abs(), nonincreasing)
            })
            .collect();
        assert!(
            results.iter().all(|&(_, ni)| ni),
            "gamma increased in some run"
        );
        let mut finals: Vec<f64> = results.iter().map(|&(x, _)| x).collect();
        finals.sort_by(f64::total_cmp);
        let median = 0.5 * (finals[49] + finals[50]);
        assert!(median < 0.05, "median |x_T| = {median}");
        format!("median |x_T| = {median:.5}, gamma nonincreasing in all 100 runs")
    });
}

#[test]
fn criterion_08_precision_vs_rate() {
    criterion(8, "precision vs rate tradeoff", || {
        let base = reference_config(1.1, 0.9, 11);
        let d_list = [0.5, 0.7, 0.8, 0.88];
        let rows = precision_vs_rate(1.1, &d_list, &base, 200).unwrap();
        assert_eq!(rows.len(), 4);

        let errs: Vec<f64> = rows.iter().map(|r| r.median_limit_error.unwrap()).collect();
        let steps: Vec<f64> = rows
            .iter()
            .map(|r| r.median_steps_to_small_gamma.unwrap())
            .collect();
        let bounds: Vec<f64> = rows.iter().map(|r| r.boundary_abs_phi).collect();

        assert!(
            adjacent_inversions(&errs, true) <= 1,
            "limit errors not decreasing: {errs:?}"
        );
        assert!(
            adjacent_inversions(&steps, false) <= 1,
            "steps not increasing: {steps:?}"
        );
        assert!(
            bounds.windows(2).all(|w| w[1] < w[0]),
            "theoretical boundary not strictly decreasing: {bounds:?}"
        );
        format!("median errors {errs:?}, median steps {steps:?}, boundaries {bounds:?}")
    });
}

// ---- CLI-level criteria -------------------------------------------------

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stepadapt"))
}

fn small_config() -> String {
    r#"
[problem]
name = "tanh"
params = { a = 1.0 }

[noise]
family = "gaussian"
params = { sigma = 0.1 }

[rule]
variant = "multiplicative"
u = 1.05
d = 0.9
gbar = 0.5

[init]
x0 = 2.0
gamma0 = 0.1

[run]
horizon = 2000
seed = 99
n_seeds = 8

[sweep]
u_grid = [1.05]
d_grid = [0.9]
d_list = [0.5, 0.8]
"#
    .to_string()
}

fn run_cmd(args: &[&str], dir: &Path) -> (String, String, i32) {
    let out = bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn stepadapt");
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
        out.status.code().unwrap_or(-1),
    )
}

#[test]
fn criterion_09_determinism() {
    criterion(9, "byte-identical artifacts", || {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        std::fs::write(dir.join("exp.toml"), small_config()).unwrap();

        let mut checked = Vec::new();
        for (sub, extra, artifact) in [
            ("run", vec![], "run.csv"),
            ("ensemble", vec![], "ensemble.csv"),
            ("phase", vec![], "phase.csv"),
            ("precision", vec![], "precision.csv"),
            (
                "kcurve",
                vec!["--z-points", "11", "--mc-samples", "2000"],
                "kcurve.csv",
            ),
            ("check", vec![], "check.json"),
        ] {
            let mut bytes = Vec::new();
            for (attempt, out_dir) in [("a", "out_a"), ("b", "out_b")] {
                let mut args = vec![sub, "--config", "exp.toml", "--out", out_dir];
                args.extend(extra.iter().copied());
                let (_, err, code) = run_cmd(&args, dir);
                assert_eq!(code, 0, "{sub} attempt {attempt}: {err}");
                bytes.push(std::fs::read(dir.join(out_dir).join(artifact)).unwrap());
            }
            assert_eq!(bytes[0], bytes[1], "{sub} artifacts differ between runs");
            checked.push(sub);
        }

        // thread count must not change the ensemble artifact
        let mut thread_bytes = Vec::new();
        for (threads, out_dir) in [("1", "out_t1"), ("4", "out_t4")] {
            let (_, err, code) = run_cmd(
                &[
                    "ensemble",
                    "--config",
                    "exp.toml",
                    "--out",
                    out_dir,
                    "--threads",
                    threads,
                ],
                dir,
            );
            assert_eq!(code, 0, "ensemble --threads {threads}: {err}");
            thread_bytes.push(std::fs::read(dir.join(out_dir).join("ensemble.csv")).unwrap());
        }
        assert_eq!(
            thread_bytes[0], thread_bytes[1],
            "ensemble differs across thread counts"
        );
        format!("re-run identical for {checked:?}; ensemble identical for --threads 1 vs 4")
    });
}

#[test]
fn criterion_10_assumption_gate() {
    criterion(10, "assumption gate", || {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();

        // gbar >= 2/M is rejected by run-type commands
        let bad = small_config()
            .replace("gbar = 0.5", "gbar = 3.0")
            .replace("gamma0 = 0.1", "gamma0 = 0.1\ngamma1 = 0.1");
        std::fs::write(dir.join("bad.toml"), bad).unwrap();
        let (_, err, code) = run_cmd(&["run", "--config", "bad.toml"], dir);
        assert_eq!(code, 1, "expected validation failure, stderr: {err}");
        assert!(err.contains("A5"), "stderr should cite A5: {err}");

        // report for the reference setup shows the A6(b) inequality values
        std::fs::write(dir.join("good.toml"), small_config()).unwrap();
        let (_, err, code) = run_cmd(&["check", "--config", "good.toml", "--out", "chk"], dir);
        assert_eq!(code, 0, "{err}");
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("chk/check.json")).unwrap())
                .unwrap();
        let a6b = report["assumptions"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["assumption"] == "A6b")
            .expect("A6b entry");
        let lhs = a6b["lhs"].as_f64().unwrap();
        let rhs = a6b["rhs"].as_f64().unwrap();
        assert!((lhs - 0.580).abs() < 1e-3, "A6b lhs {lhs}");
        assert!((rhs - 0.00333).abs() < 1e-5, "A6b rhs {rhs}");
        assert_eq!(a6b["verdict"], "pass");
        format!("gbar=3 rejected citing A5; A6b lhs={lhs:.4} rhs={rhs:.5}")
    });
}

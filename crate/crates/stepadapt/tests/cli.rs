//! End-to-end CLI behavior: exit codes, artifact formats, and cross-command
//! consistency.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stepadapt"))
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

fn base_config() -> String {
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

[run]
horizon = 2000
seed = 5
n_seeds = 12

[sweep]
u_grid = [1.05]
d_grid = [0.9]
"#
    .to_string()
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .expect("csv header")
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[test]
fn check_passes_on_valid_config() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("exp.toml"), base_config()).unwrap();
    let (stdout, stderr, code) = run_cmd(&["check", "--config", "exp.toml"], tmp.path());
    assert_eq!(code, 0, "{stderr}");
    let v: serde_json::Value = serde_json::from_str(&stdout).expect("check prints JSON");
    let checks = v["assumptions"].as_array().unwrap();
    assert_eq!(checks.len(), 7);
    assert!(checks.iter().all(|c| c["verdict"] == "pass"), "{stdout}");
    assert!(tmp.path().join("check.json").exists());
}

#[test]
fn invalid_d_is_rejected_with_context() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = base_config().replace("d = 0.9", "d = 1.5");
    std::fs::write(tmp.path().join("exp.toml"), cfg).unwrap();
    let (_, stderr, code) = run_cmd(&["run", "--config", "exp.toml"], tmp.path());
    assert_eq!(code, 1);
    assert!(stderr.contains("d must be in (0,1)"), "{stderr}");
}

#[test]
fn unknown_key_is_a_parse_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{}\n[rule.extra]\nz = 1\n", base_config());
    std::fs::write(tmp.path().join("exp.toml"), cfg).unwrap();
    let (_, stderr, code) = run_cmd(&["check", "--config", "exp.toml"], tmp.path());
    assert_eq!(code, 1);
    assert!(stderr.contains("parse error"), "{stderr}");
}

#[test]
fn missing_config_flag_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, stderr, code) = run_cmd(&["run"], tmp.path());
    assert_eq!(code, 1);
    assert!(stderr.contains("--config"), "{stderr}");
}

#[test]
fn force_passes_gate_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = base_config().replace("gbar = 0.5", "gbar = 3.0");
    std::fs::write(tmp.path().join("exp.toml"), cfg).unwrap();

    let (_, _, code) = run_cmd(&["run", "--config", "exp.toml"], tmp.path());
    assert_eq!(code, 1);

    let (_, stderr, code) = run_cmd(&["run", "--config", "exp.toml", "--force"], tmp.path());
    assert_eq!(code, 0, "{stderr}");
    let artifact = std::fs::read_to_string(tmp.path().join("run.csv")).unwrap();
    assert!(artifact.contains("# force: true"), "{artifact}");
}

#[test]
fn run_artifact_has_documented_columns() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("exp.toml"), base_config()).unwrap();
    let (stdout, stderr, code) = run_cmd(&["run", "--config", "exp.toml"], tmp.path());
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.starts_with("run: status="), "{stdout}");

    let text = std::fs::read_to_string(tmp.path().join("run.csv")).unwrap();
    assert!(text.starts_with("# tool: stepadapt"));
    assert!(text.contains("# config_sha256: "));
    let (header, rows) = parse_csv(&text);
    assert_eq!(header, ["t", "x", "y", "gamma", "ln_gamma"]);
    assert!(!rows.is_empty());
    for row in &rows {
        let gamma: f64 = row[3].parse().unwrap();
        let ln_gamma: f64 = row[4].parse().unwrap();
        assert!((gamma.ln() - ln_gamma).abs() < 1e-12);
        assert!(gamma <= 0.5 + 1e-15);
    }
}

#[test]
fn phase_single_cell_matches_ensemble_aggregates() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("exp.toml"), base_config()).unwrap();

    let (_, stderr, code) = run_cmd(&["ensemble", "--config", "exp.toml"], tmp.path());
    assert_eq!(code, 0, "{stderr}");
    let (_, stderr, code) = run_cmd(&["phase", "--config", "exp.toml"], tmp.path());
    assert_eq!(code, 0, "{stderr}");

    let (eh, erows) = parse_csv(&std::fs::read_to_string(tmp.path().join("ensemble.csv")).unwrap());
    assert_eq!(
        eh,
        [
            "seed",
            "status",
            "x_star",
            "t_stop",
            "rate_slope",
            "limit_error"
        ]
    );
    let conv: Vec<&Vec<String>> = erows.iter().filter(|r| r[1] == "converged").collect();
    let conv_fraction = conv.len() as f64 / erows.len() as f64;
    let med_err = median(conv.iter().filter_map(|r| r[5].parse().ok()).collect());
    let med_slope = median(conv.iter().filter_map(|r| r[4].parse().ok()).collect());

    let (ph, prows) = parse_csv(&std::fs::read_to_string(tmp.path().join("phase.csv")).unwrap());
    assert_eq!(
        ph,
        [
            "u",
            "d",
            "ud",
            "kappa",
            "class",
            "conv_fraction",
            "median_limit_err",
            "median_slope"
        ]
    );
    assert_eq!(prows.len(), 1);
    let row = &prows[0];
    assert_eq!(row[4], "converge");
    let cell_conv: f64 = row[5].parse().unwrap();
    assert!((cell_conv - conv_fraction).abs() < 1e-12);
    if let Some(me) = med_err {
        let cell_err: f64 = row[6].parse().unwrap();
        assert!((cell_err - me).abs() < 1e-12, "{cell_err} vs {me}");
    }
    if let Some(ms) = med_slope {
        let cell_slope: f64 = row[7].parse().unwrap();
        assert!((cell_slope - ms).abs() < 1e-12);
    }
}

#[test]
fn json_output_mirrors_csv_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{}\n[output]\nformat = \"json\"\n", base_config());
    std::fs::write(tmp.path().join("exp.toml"), cfg).unwrap();
    let (_, stderr, code) = run_cmd(&["ensemble", "--config", "exp.toml"], tmp.path());
    assert_eq!(code, 0, "{stderr}");
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("ensemble.json")).unwrap())
            .unwrap();
    assert_eq!(v["meta"]["command"], "ensemble");
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 12);
    for r in rows {
        assert!(r["seed"].is_u64());
        assert!(r["status"].is_string());
    }
}

#[test]
fn kcurve_probabilities_are_coherent() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("exp.toml"), base_config()).unwrap();
    let (_, stderr, code) = run_cmd(
        &[
            "kcurve",
            "--config",
            "exp.toml",
            "--z-points",
            "21",
            "--mc-samples",
            "20000",
        ],
        tmp.path(),
    );
    assert_eq!(code, 0, "{stderr}");
    let (header, rows) =
        parse_csv(&std::fs::read_to_string(tmp.path().join("kcurve.csv")).unwrap());
    assert_eq!(
        header,
        ["z", "k_diag", "k_plus", "k_minus", "k_mc", "mc_stderr"]
    );
    assert_eq!(rows.len(), 21);
    for row in &rows {
        let k_diag: f64 = row[1].parse().unwrap();
        let k_plus: f64 = row[2].parse().unwrap();
        let k_minus: f64 = row[3].parse().unwrap();
        let k_mc: f64 = row[4].parse().unwrap();
        let se_reported: f64 = row[5].parse().unwrap();
        assert_eq!(k_plus, k_diag); // continuous noise
        assert_eq!(k_minus, k_diag);
        assert!(se_reported >= 0.0);
        // binomial error around the CDF-path value; the reported stderr uses
        // the estimate and collapses to 0 in saturated tails
        let se = (k_diag * (1.0 - k_diag) / 20_000.0).sqrt();
        assert!((k_mc - k_diag).abs() <= 4.0 * se + 1e-12, "{row:?}");
        assert!((0.5..=1.0).contains(&k_diag));
    }
}

#[test]
fn threads_env_var_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("exp.toml"), base_config()).unwrap();
    let out = bin()
        .args(["ensemble", "--config", "exp.toml", "--out", "enva"])
        .env("STEPADAPT_THREADS", "2")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let (_, _, code) = run_cmd(
        &["ensemble", "--config", "exp.toml", "--out", "envb"],
        tmp.path(),
    );
    assert_eq!(code, 0);
    assert_eq!(
        std::fs::read(tmp.path().join("enva/ensemble.csv")).unwrap(),
        std::fs::read(tmp.path().join("envb/ensemble.csv")).unwrap()
    );
}

#[test]
fn unwritable_out_dir_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("exp.toml"), base_config()).unwrap();
    std::fs::write(tmp.path().join("blocked"), "not a dir").unwrap();
    let (_, stderr, code) = run_cmd(
        &["run", "--config", "exp.toml", "--out", "blocked/sub"],
        tmp.path(),
    );
    assert_eq!(code, 2, "{stderr}");
}

#[test]
fn output_path_override_is_used() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{}\n[output]\npath = \"series.csv\"\n", base_config());
    std::fs::write(tmp.path().join("exp.toml"), cfg).unwrap();
    let (_, _, code) = run_cmd(&["run", "--config", "exp.toml"], tmp.path());
    assert_eq!(code, 0);
    assert!(tmp.path().join("series.csv").exists());
}

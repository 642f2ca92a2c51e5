use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use mqplab_cli::config::Issue;
use mqplab_cli::{parse_config, read_report, report::report_json, run_command, Command, ConfigError};

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Example configurations shipped with the repository: the `configs/`
/// directory plus the TOML blocks of the configuration guide.
fn example_configs() -> Vec<(String, String)> {
    let root = workspace_root();
    let mut out = Vec::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(root.join("configs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    for p in paths {
        out.push((p.display().to_string(), fs::read_to_string(&p).unwrap()));
    }
    let guide = fs::read_to_string(root.join("docs/config.md")).unwrap();
    for (i, block) in guide.split("```toml").skip(1).enumerate() {
        out.push((format!("docs/config.md block {i}"), block.split("```").next().unwrap().to_string()));
    }
    assert!(out.len() >= 8, "expected the shipped examples, found {}", out.len());
    out
}

fn mqp_lab(args: &[&str]) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_mqp-lab"))
        .args(args)
        .env_remove("MQPLAB_THREADS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

const SWIMMER: &str = r#"
[model.swimmer]
d = 3
d_coef = 1.0
kappa = 1.0

[feedback]
phi = 10.0

[run]
horizon = 4.0
n_traj = 50
seed = 11

[analysis]
q = [2]
"#;

#[test]
fn shipped_examples_parse() {
    for (name, text) in example_configs() {
        if let Err(e) = parse_config(&text) {
            panic!("{name}: {e}");
        }
    }
}

#[test]
fn every_mutated_key_is_rejected_by_name() {
    let key_line = |l: &str| {
        let t = l.trim_start();
        !t.starts_with('#') && !t.starts_with('[') && t.contains(" = ")
    };
    let mut mutated = 0;
    for (name, text) in example_configs() {
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate().filter(|(_, l)| key_line(l)) {
            let key = line.trim_start().split(" = ").next().unwrap();
            let bad_key = format!("{key}_typo");
            let mut copy: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
            copy[i] = line.replacen(key, &bad_key, 1);
            let err = parse_config(&copy.join("\n")).expect_err(&format!("{name}: `{bad_key}` accepted"));
            assert!(
                matches!(err, ConfigError::Parse { .. }) && err.to_string().contains(&bad_key),
                "{name}: error does not name `{bad_key}`: {err}"
            );
            mutated += 1;
        }
    }
    assert!(mutated > 50);
}

#[test]
fn missing_keys_are_listed_together() {
    let text = SWIMMER.replace("d = 3\n", "").replace("kappa = 1.0\n", "");
    let Err(ConfigError::Invalid(issues)) = parse_config(&text) else { panic!("accepted") };
    let keys: Vec<&str> = issues.iter().map(|i: &Issue| i.key.as_str()).collect();
    assert_eq!(keys, vec!["model.swimmer.d", "model.swimmer.kappa"]);
}

#[test]
fn negative_dt_gives_one_aggregated_error() {
    let text = SWIMMER.replace("horizon = 4.0", "horizon = 4.0\ndt = -0.01");
    let err = parse_config(&text).unwrap_err();
    let ConfigError::Invalid(issues) = &err else { panic!("{err}") };
    assert_eq!(issues.len(), 1);
    assert_eq!(issues[0].key, "run.dt");
    assert!(err.to_string().starts_with("invalid configuration"));
}

#[test]
fn burn_in_fraction_must_be_below_one() {
    let text = SWIMMER.replace("seed = 11", "seed = 11\nburn_in = 1.0");
    let Err(ConfigError::Invalid(issues)) = parse_config(&text) else { panic!() };
    assert_eq!(issues[0].key, "run.burn_in");
}

#[test]
fn simulation_commands_need_horizon_and_ensemble_size() {
    let text = SWIMMER.replace("horizon = 4.0\n", "").replace("n_traj = 50\n", "");
    let cfg = parse_config(&text).unwrap();
    let Err(mqplab_cli::CliError::Config(ConfigError::Invalid(issues))) = run_command(Command::Simulate, &cfg)
    else {
        panic!()
    };
    assert_eq!(issues.len(), 2);
    // Analytic commands do not simulate.
    assert!(run_command(Command::Css, &cfg).is_ok());
}

#[test]
fn mqp_swimmer_is_stable_at_q2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SWIMMER);
    let out = dir.path().join("out");
    let o = mqp_lab(&["mqp", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = read_report(&out.join("report.json")).unwrap();
    assert_eq!(rep.schema, mqplab_cli::REPORT_SCHEMA);
    assert_eq!(rep.convention, "stratonovich");
    assert_eq!(rep.seed, 11);
    assert_eq!(rep.results["alpha"], 7.0);
    let v = &rep.results["verdicts"][0];
    assert_eq!(v["stable"], true);
    assert_eq!(v["margin"], 5.0);
    assert_eq!(v["phi_threshold"], 5.0);
}

#[test]
fn css_thermal_spot_value() {
    let text = r#"
[model.thermal_single]
c0 = 1.0
c1 = 2.0
d_coef = 1.0
kappa = 1.0

[analysis]
q = [2]
beta = 3.0
"#;
    let run = run_command(Command::Css, &parse_config(text).unwrap()).unwrap();
    let phi = run.report.results["optima"][0]["phi_star"].as_f64().unwrap();
    assert!((phi - 3.0).abs() < 1e-6);
    assert_eq!(run.report.results["closed_form_q2"], 3.0);
    assert_eq!(run.report.convention, "kinetic/2");
    assert_eq!(run.tables[0].file, "cost_curve_q2.csv");
    assert_eq!(run.tables[0].header, vec!["phi", "cost"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let bad = write_config(dir.path(), &format!("{SWIMMER}\nunknown = 1\n"));
    let o = mqp_lab(&["mqp", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown"));

    let o = mqp_lab(&["mqp", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let no_authority = write_config(
        dir.path(),
        "[model.thermal_single]\nc0 = 1.0\nc1 = 0.0\nd_coef = 1.0\nkappa = 1.0\n",
    );
    let o = mqp_lab(&["css", "--config", no_authority.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("gain optimization failed") && err.contains("no control authority"), "{err}");

    let o = mqp_lab(&["bogus", "--config", "x.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_round_trips_and_csv_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SWIMMER);
    let out = dir.path().join("sim");
    let o = mqp_lab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("report.json")).unwrap();
    let rep = read_report(&out.join("report.json")).unwrap();
    assert_eq!(report_json(&rep), text);
    assert_eq!(rep.artifacts, vec!["histogram.csv", "trajectory.csv"]);
    let hist = fs::read_to_string(out.join("histogram.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some("bin_left,bin_right,count,density"));
    for line in hist.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 4);
        assert!(cols[0] < cols[1]);
    }
    assert!(out.join("timing.json").exists());
    assert!(!text.contains("wall"));

    let out = dir.path().join("hjb");
    let o = mqp_lab(&["hjb", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let vs = fs::read_to_string(out.join("varsigma.csv")).unwrap();
    let mut lines = vs.lines();
    assert_eq!(lines.next(), Some("t,varsigma,s"));
    let ts: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(ts.windows(2).all(|w| w[0] < w[1]));
    let rep = read_report(&out.join("report.json")).unwrap();
    assert!(rep.results["residual"]["max_abs"].as_f64().unwrap() < 1e-6);
    assert!(rep.results["closed_form"]["sup_error_varsigma"].as_f64().unwrap() < 1e-6);
}

#[test]
fn same_seed_same_report_regardless_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SWIMMER);
    let mut texts = Vec::new();
    let out = dir.path().join("out");
    for threads in ["1", "3"] {
        let o = Process::new(env!("CARGO_BIN_EXE_mqp-lab"))
            .args(["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .env("MQPLAB_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success());
        let timing = fs::read_to_string(out.join("timing.json")).unwrap();
        assert!(timing.contains(&format!("\"threads\": {threads}")));
        texts.push(fs::read_to_string(out.join("report.json")).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use costeff_core::data::{
    generate_synthetic_trial, load_trial_csv, write_trial_csv, MissingnessMechanism,
    SyntheticTrialConfig,
};
use costeff_core::inference::write_draws_csv;
use costeff_core::{fit, Family, ModelSpec, SamplerConfig, TimeGrid};

fn costeff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_costeff"))
        .args(args)
        .env_remove("COSTEFF_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn trial(dir: &Path, missing: bool) -> PathBuf {
    let mut cfg = SyntheticTrialConfig::example(21);
    cfg.arms.iter_mut().for_each(|a| {
        a.n = 60;
        if missing {
            a.missingness = MissingnessMechanism::Mcar { rate: 0.3 };
        }
    });
    let path = dir.join(if missing { "missing.csv" } else { "full.csv" });
    write_trial_csv(&generate_synthetic_trial(&cfg).unwrap(), &path).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SHORT: [&str; 6] = [
    "--iters",
    "1200",
    "--burnin",
    "600",
    "--rhat-threshold",
    "1.5",
];

#[test]
fn validate_prints_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = trial(dir.path(), true);
    let out = costeff(&["validate", "--data", s(&data)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("baseline utility"));
    assert!(text.contains("complete cases"));
}

#[test]
fn validate_rejects_empty_and_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(
        costeff(&["validate", "--data", s(&empty)]).status.code(),
        Some(2)
    );
    let bad = dir.path().join("bad.csv");
    fs::write(
        &bad,
        "id,arm,u0,u1,u2,u3,c1,c2,c3,age,ethnicity,employment\n\
         a,1,0.5,0.6,1.4,1,10,10,10,40,1,1\n",
    )
    .unwrap();
    let out = costeff(&["validate", "--data", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("row 1"));
}

#[test]
fn fit_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let data = trial(dir.path(), true);
    let out_dir = dir.path().join("out");
    let mut args = vec![
        "fit",
        "--data",
        s(&data),
        "--family",
        "all",
        "--out",
        s(&out_dir),
    ];
    args.extend(SHORT);
    let out = costeff(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for run in ["bn_mar", "bg_mar", "hurdle_mar"] {
        for f in [
            "draws.csv",
            "diagnostics.json",
            "dic.json",
            "summary.json",
            "imputations.csv",
            "ceac.csv",
            "cep.csv",
            "cea.json",
        ] {
            assert!(out_dir.join(run).join(f).is_file(), "{run}/{f}");
        }
    }
    let ceac = fs::read_to_string(out_dir.join("hurdle_mar/ceac.csv")).unwrap();
    assert!(ceac.starts_with("k,probability\n"));
    assert_eq!(ceac.lines().count(), 302);
    assert!(out_dir.join("dic_comparison.json").is_file());
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let data = trial(dir.path(), false);
    let env_out = dir.path().join("from_env");
    let mut args = vec!["fit", "--data", s(&data), "--family", "bn"];
    args.extend(SHORT);
    let out = Command::new(env!("CARGO_BIN_EXE_costeff"))
        .args(&args)
        .env("COSTEFF_OUT_DIR", &env_out)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(env_out.join("bn_mar/draws.csv").is_file());
}

#[test]
fn complete_case_flag_matches_library_fit_on_filtered_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = trial(dir.path(), true);
    let out_dir = dir.path().join("cc");
    let out = costeff(&[
        "fit",
        "--data",
        s(&data),
        "--family",
        "bg",
        "--complete-cases",
        "--iters",
        "1000",
        "--burnin",
        "500",
        "--seed",
        "7",
        "--out",
        s(&out_dir),
        "--rhat-threshold",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let filtered = load_trial_csv(&data).unwrap().complete_cases();
    let draws = fit(
        &filtered,
        &TimeGrid::quarterly_year(),
        &ModelSpec::new(Family::BetaGamma),
        &SamplerConfig::short(1000, 500, 7),
    )
    .unwrap();
    let mut expected = Vec::new();
    write_draws_csv(&draws, &mut expected).unwrap();
    assert_eq!(
        fs::read(out_dir.join("bg_mar/draws.csv")).unwrap(),
        expected
    );
}

#[test]
fn scenario_on_non_hurdle_family_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = trial(dir.path(), true);
    let out = costeff(&[
        "fit",
        "--data",
        s(&data),
        "--family",
        "bg",
        "--scenario",
        "mnar1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = costeff(&["sensitivity", "--data", s(&data), "--family", "bn"]);
    assert_eq!(out.status.code(), Some(2));
    let out = costeff(&["sigma1-sweep", "--data", s(&data), "--values", "0.01"]);
    assert_eq!(out.status.code(), Some(2));
    let out = costeff(&["epsilon-sweep", "--data", s(&data), "--values", "0.7"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_file_is_an_input_error() {
    let out = costeff(&["fit", "--data", "/nonexistent/trial.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = costeff(&["fit"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn convergence_failure_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = trial(dir.path(), true);
    let out_dir = dir.path().join("o");
    // R-hat is floored at 1, so a threshold of exactly 1 fails on any noise
    let out = costeff(&[
        "fit",
        "--data",
        s(&data),
        "--family",
        "bn",
        "--iters",
        "200",
        "--burnin",
        "100",
        "--rhat-threshold",
        "1.0",
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(
        out_dir.join("bn_mar/draws.csv").is_file(),
        "artifacts still written"
    );
}

#[test]
fn sensitivity_without_ambiguous_records_gives_identical_curves() {
    let dir = tempfile::tempdir().unwrap();
    let data = trial(dir.path(), false);
    let out_dir = dir.path().join("sens");
    let mut args = vec!["sensitivity", "--data", s(&data), "--out", s(&out_dir)];
    args.extend(SHORT);
    let out = costeff(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(out_dir.join("sensitivity_ceac.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "k,mar,mnar1,mnar2,mnar3,mnar4");
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert!(cells[2..].iter().all(|c| *c == cells[1]), "{line}");
    }
    let summary = fs::read_to_string(out_dir.join("sensitivity_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 5 * 2 * 2);
}

#[test]
fn sigma1_sweep_has_reference_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = trial(dir.path(), true);
    let out_dir = dir.path().join("sw");
    let mut args = vec![
        "sigma1-sweep",
        "--data",
        s(&data),
        "--values",
        "1e-5",
        "--out",
        s(&out_dir),
    ];
    args.extend(SHORT);
    let out = costeff(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(out_dir.join("sigma1_sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("hurdle,exact,NA,1,"));
    assert!(rows[2].starts_with("hurdle,degenerate_beta,0.00001,1,"));
}

#[test]
fn epsilon_sweep_single_value_gives_one_row_per_arm() {
    let dir = tempfile::tempdir().unwrap();
    let data = trial(dir.path(), false);
    let out_dir = dir.path().join("eps");
    let mut args = vec![
        "epsilon-sweep",
        "--data",
        s(&data),
        "--values",
        "0.001",
        "--out",
        s(&out_dir),
    ];
    args.extend(SHORT);
    let out = costeff(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(out_dir.join("epsilon_sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("bg,epsilon,0.001,1,"));
}

#[test]
fn simulate_round_trips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sim.csv");
    let grid = dir.path().join("grid.json");
    let out = costeff(&[
        "simulate",
        "--seed",
        "5",
        "--n",
        "30",
        "--output",
        s(&csv),
        "--grid-output",
        s(&grid),
    ]);
    assert!(out.status.success());
    assert_eq!(load_trial_csv(&csv).unwrap().records.len(), 60);
    let out = costeff(&["validate", "--data", s(&csv), "--times", s(&grid)]);
    assert!(out.status.success());
}

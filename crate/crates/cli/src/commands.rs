use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use costeff_core::data::{
    aggregate, generate_synthetic_trial, load_trial_csv, write_trial_csv_to, Arm, StructuralStatus,
    SyntheticTrialConfig, TimeGrid,
};
use costeff_core::econ::{self, CeaResult};
use costeff_core::inference::{
    diagnose, dic, imputation_summaries, summarize, write_draws_csv, write_imputations_csv,
    DiagnosticsReport, DicResult, ParamSummary,
};
use costeff_core::{fit, Family, MnarScenario, ModelSpec, PointMassMode, PosteriorDraws};
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::{Inputs, RunManifest};
use crate::output::{fmt_opt, OutDir};

const HPD_MASS: f64 = 0.9;

fn pct(n: usize, total: usize) -> String {
    if total == 0 {
        "-".into()
    } else {
        format!("{:.0}%", 100.0 * n as f64 / total as f64)
    }
}

/// Schema check plus observed counts per time point in each arm.
pub fn validate(data: &PathBuf, times: Option<&PathBuf>) -> Result<String, CliError> {
    let dataset = load_trial_csv(data)?;
    if dataset.records.is_empty() {
        return Err(CliError::Input(format!("{}: no records", data.display())));
    }
    let grid = match times {
        Some(p) => TimeGrid::from_json_file(p)?,
        None => TimeGrid::quarterly_year(),
    };
    if grid.n_followups() != dataset.n_followups {
        return Err(CliError::Input(format!(
            "time grid has {} follow-ups but the data have {}",
            grid.n_followups(),
            dataset.n_followups
        )));
    }
    let n = [
        dataset.arm_size(Arm::Control),
        dataset.arm_size(Arm::Intervention),
    ];
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24}{:>22}{:>22}\n",
        "",
        format!("control (n={})", n[0]),
        format!("intervention (n={})", n[1])
    ));
    let cell = |k: usize, a: usize| format!("{k} ({})", pct(k, n[a]));
    for (j, row) in dataset.observed_counts().iter().enumerate() {
        let label = if j == 0 {
            "baseline utility".to_string()
        } else {
            format!("month {} (u and c)", grid.times()[j])
        };
        out.push_str(&format!(
            "{label:<24}{:>22}{:>22}\n",
            cell(row[0], 0),
            cell(row[1], 1)
        ));
    }
    let complete = dataset.completeness_counts();
    out.push_str(&format!(
        "{:<24}{:>22}{:>22}\n",
        "complete cases",
        cell(complete[0], 0),
        cell(complete[1], 1)
    ));
    let mut status = [[0usize; 3]; 2];
    for r in &dataset.records {
        let s = aggregate(r, &grid)?.structural_status;
        let k = match s {
            StructuralStatus::Known1 => 0,
            StructuralStatus::Known0 => 1,
            StructuralStatus::Ambiguous => 2,
        };
        status[r.arm.index()][k] += 1;
    }
    for (k, label) in ["QALY = 1 observed", "QALY < 1 known", "ambiguous"]
        .iter()
        .enumerate()
    {
        out.push_str(&format!(
            "{label:<24}{:>22}{:>22}\n",
            cell(status[0][k], 0),
            cell(status[1][k], 1)
        ));
    }
    Ok(out)
}

/// One fitted model and everything derived from it.
pub struct RunResult {
    pub label: String,
    pub draws: PosteriorDraws,
    pub diagnostics: DiagnosticsReport,
    pub dic: DicResult,
    pub cea: CeaResult,
    pub summary: Vec<ParamSummary>,
}

impl RunResult {
    pub fn unconverged(&self, threshold: f64) -> bool {
        !self.diagnostics.unconverged(threshold).is_empty()
    }

    fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.summary.iter().find(|p| p.name == name)
    }
}

fn run_label(spec: &ModelSpec) -> String {
    let mut label = format!("{}_{}", spec.family.label(), spec.mnar_scenario.label());
    if let PointMassMode::DegenerateBeta { sigma } = spec.point_mass_mode {
        label.push_str(&format!("_sigma{sigma:e}"));
    }
    label
}

pub fn run_one(
    inputs: &Inputs,
    spec: &ModelSpec,
    manifest: &RunManifest,
) -> Result<RunResult, CliError> {
    let label = run_label(spec);
    let draws = fit(&inputs.dataset, &inputs.grid, spec, &manifest.sampler).map_err(|source| {
        CliError::Fit {
            context: format!("fitting {label}"),
            source,
        }
    })?;
    let cea = econ::evaluate(&draws, &inputs.wtp, manifest.k_ref)?;
    Ok(RunResult {
        label,
        diagnostics: diagnose(&draws),
        dic: dic(&draws),
        summary: summarize(&draws, HPD_MASS),
        cea,
        draws,
    })
}

pub fn write_run(out: &OutDir, run: &RunResult) -> Result<(), CliError> {
    let dir = out.subdir(&run.label)?;
    dir.write_with("draws.csv", |w| write_draws_csv(&run.draws, w))?;
    dir.write_json("diagnostics.json", &run.diagnostics)?;
    dir.write_json("dic.json", &run.dic)?;
    dir.write_json("summary.json", &run.summary)?;
    let imputations = imputation_summaries(&run.draws);
    dir.write_with("imputations.csv", |w| {
        write_imputations_csv(&imputations, w)
    })?;
    dir.write_with("ceac.csv", |w| run.cea.write_ceac_csv(w))?;
    dir.write_with("cep.csv", |w| run.cea.write_cep_csv(w))?;
    dir.write_json("cea.json", &run.cea.summary())?;
    Ok(())
}

fn report_line(run: &RunResult) -> String {
    let icer = run
        .cea
        .icer
        .value()
        .map_or_else(|| "undefined".to_string(), |v| format!("{v:.1}"));
    format!(
        "{:<22} DIC {:>10.2} (pD {:>6.2})  max R-hat {:.3}  ICER {}  P(CE at k={}) {:.3}",
        run.label,
        run.dic.dic,
        run.dic.pd,
        run.diagnostics.max_rhat().unwrap_or(f64::NAN),
        icer,
        run.cea.cep.k_ref,
        run.cea.cep.sustainability_fraction
    )
}

/// Lines for the terminal plus the runs whose R-hat exceeded the threshold.
#[derive(Debug, Default)]
pub struct Report {
    pub lines: Vec<String>,
    pub unconverged: Vec<String>,
}

impl Report {
    fn add(&mut self, run: &RunResult, threshold: f64) {
        self.lines.push(report_line(run));
        if run.unconverged(threshold) {
            self.unconverged.push(run.label.clone());
        }
    }
}

fn check_scenarios(family: Family, scenarios: &[MnarScenario]) -> Result<(), CliError> {
    if family != Family::Hurdle && scenarios.iter().any(|s| *s != MnarScenario::Mar) {
        return Err(CliError::Input(format!(
            "missingness scenarios other than MAR need the hurdle family, not {family}"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct DicRow<'a> {
    run: &'a str,
    family: Family,
    scenario: &'a str,
    dic: &'a DicResult,
}

/// Every family × scenario in the manifest; artifacts land in one
/// subdirectory per run.
pub fn fit_all(manifest: &RunManifest) -> Result<Report, CliError> {
    let inputs = manifest.load()?;
    let scenarios = manifest.scenarios_or(&[MnarScenario::Mar]);
    for f in &manifest.families {
        check_scenarios(*f, &scenarios)?;
    }
    let out = OutDir::create(manifest.out_dir())?;
    out.write_json("manifest.json", manifest)?;
    let mut runs = Vec::new();
    let mut report = Report::default();
    for family in &manifest.families {
        for scenario in &scenarios {
            let spec = inputs.spec_for(*family, scenario);
            let run = run_one(&inputs, &spec, manifest)?;
            write_run(&out, &run)?;
            report.add(&run, manifest.rhat_threshold);
            runs.push(run);
        }
    }
    let rows: Vec<DicRow> = runs
        .iter()
        .map(|r| DicRow {
            run: &r.label,
            family: r.draws.family,
            scenario: &r.draws.scenario,
            dic: &r.dic,
        })
        .collect();
    out.write_json("dic_comparison.json", &rows)?;
    Ok(report)
}

#[derive(Serialize)]
struct ScenarioSummary {
    scenario: String,
    arm: u8,
    quantity: String,
    mean: f64,
    hpd_low: Option<f64>,
    hpd_high: Option<f64>,
}

/// Hurdle fits under MAR and the MNAR scenarios: one CEAC table with a
/// column per scenario plus posterior summaries of π̄ and μe per arm.
pub fn sensitivity(manifest: &RunManifest) -> Result<Report, CliError> {
    if manifest.families != [Family::Hurdle] {
        return Err(CliError::Input(
            "sensitivity analysis is defined for the hurdle family only".into(),
        ));
    }
    let inputs = manifest.load()?;
    let scenarios = manifest.scenarios_or(&MnarScenario::STANDARD);
    let out = OutDir::create(manifest.out_dir())?;
    out.write_json("manifest.json", manifest)?;
    let mut runs = Vec::new();
    let mut report = Report::default();
    for scenario in &scenarios {
        let run = run_one(
            &inputs,
            &inputs.spec_for(Family::Hurdle, scenario),
            manifest,
        )?;
        report.add(&run, manifest.rhat_threshold);
        runs.push(run);
    }

    let mut header = vec!["k"];
    header.extend(scenarios.iter().map(MnarScenario::label));
    let rows: Vec<Vec<String>> = inputs
        .wtp
        .values()
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let mut row = vec![k.to_string()];
            row.extend(runs.iter().map(|r| r.cea.ceac[i].probability.to_string()));
            row
        })
        .collect();
    out.write_table("sensitivity_ceac.csv", &header, &rows)?;

    let mut summary = Vec::new();
    for (scenario, run) in scenarios.iter().zip(&runs) {
        for arm in Arm::BOTH {
            for q in ["pi_e", "mu_e"] {
                let p = run
                    .param(&format!("{q}[{}]", arm.code()))
                    .expect("hurdle runs monitor pi_e and mu_e");
                summary.push(ScenarioSummary {
                    scenario: scenario.label().to_string(),
                    arm: arm.code(),
                    quantity: q.to_string(),
                    mean: p.mean,
                    hpd_low: p.hpd_low,
                    hpd_high: p.hpd_high,
                });
            }
        }
    }
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            vec![
                s.scenario.clone(),
                s.arm.to_string(),
                s.quantity.clone(),
                s.mean.to_string(),
                fmt_opt(s.hpd_low),
                fmt_opt(s.hpd_high),
            ]
        })
        .collect();
    out.write_table(
        "sensitivity_summary.csv",
        &["scenario", "arm", "quantity", "mean", "hpd_low", "hpd_high"],
        &rows,
    )?;
    let cea: BTreeMap<&str, _> = scenarios
        .iter()
        .zip(&runs)
        .map(|(s, r)| (s.label(), r.cea.summary()))
        .collect();
    out.write_json("sensitivity_cea.json", &cea)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub family: Family,
    /// `exact`, `degenerate_beta` or `epsilon`.
    pub setting: String,
    pub value: Option<f64>,
    pub arm: u8,
    pub mu_e_mean: f64,
    pub mu_e_hpd_low: Option<f64>,
    pub mu_e_hpd_high: Option<f64>,
    pub dic: f64,
    pub max_rhat: Option<f64>,
}

fn sweep_rows(run: &RunResult, family: Family, setting: &str, value: Option<f64>) -> Vec<SweepRow> {
    Arm::BOTH
        .iter()
        .map(|arm| {
            let p = run
                .param(&format!("mu_e[{}]", arm.code()))
                .expect("mu_e is always monitored");
            SweepRow {
                family,
                setting: setting.to_string(),
                value,
                arm: arm.code(),
                mu_e_mean: p.mean,
                mu_e_hpd_low: p.hpd_low,
                mu_e_hpd_high: p.hpd_high,
                dic: run.dic.dic,
                max_rhat: run.diagnostics.max_rhat(),
            }
        })
        .collect()
}

fn write_sweep(out: &OutDir, stem: &str, rows: &[SweepRow]) -> Result<(), CliError> {
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.family.label().to_string(),
                r.setting.clone(),
                fmt_opt(r.value),
                r.arm.to_string(),
                r.mu_e_mean.to_string(),
                fmt_opt(r.mu_e_hpd_low),
                fmt_opt(r.mu_e_hpd_high),
                r.dic.to_string(),
                fmt_opt(r.max_rhat),
            ]
        })
        .collect();
    out.write_table(
        &format!("{stem}.csv"),
        &[
            "family",
            "setting",
            "value",
            "arm",
            "mu_e_mean",
            "mu_e_hpd_low",
            "mu_e_hpd_high",
            "dic",
            "max_rhat",
        ],
        &table,
    )?;
    out.write_json(&format!("{stem}.json"), rows)?;
    Ok(())
}

fn first_scenario(manifest: &RunManifest) -> Result<MnarScenario, CliError> {
    let s = manifest.scenarios_or(&[MnarScenario::Mar]);
    if s.len() != 1 {
        return Err(CliError::Input("sweeps take a single scenario".into()));
    }
    Ok(s[0].clone())
}

/// μe and DIC as the boundary offset ε varies, for the Beta families.
pub fn epsilon_sweep(manifest: &RunManifest, values: &[f64]) -> Result<Report, CliError> {
    if values.is_empty() {
        return Err(CliError::Input("no ε values given".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v < 0.5)) {
        return Err(CliError::Input(format!("ε must lie in (0, 0.5), got {v}")));
    }
    if let Some(f) = manifest.families.iter().find(|f| !f.beta_effects()) {
        return Err(CliError::Input(format!(
            "ε only affects the Beta-based families, not {f}"
        )));
    }
    let scenario = first_scenario(manifest)?;
    for f in &manifest.families {
        check_scenarios(*f, std::slice::from_ref(&scenario))?;
    }
    let inputs = manifest.load()?;
    let out = OutDir::create(manifest.out_dir())?;
    let mut rows = Vec::new();
    let mut report = Report::default();
    for family in &manifest.families {
        for &eps in values {
            let spec = ModelSpec {
                epsilon: eps,
                ..inputs.spec_for(*family, &scenario)
            };
            let mut run = run_one(&inputs, &spec, manifest)?;
            run.label = format!("{}_eps{eps:e}", run.label);
            rows.extend(sweep_rows(&run, *family, "epsilon", Some(eps)));
            report.add(&run, manifest.rhat_threshold);
        }
    }
    write_sweep(&out, "epsilon_sweep", &rows)?;
    Ok(report)
}

/// Hurdle fits with the structural-one spike approximated by a degenerate
/// Beta of each SD in `values`, plus a reference row with the exact point
/// mass.
pub fn sigma1_sweep(manifest: &RunManifest, values: &[f64]) -> Result<Report, CliError> {
    if values.is_empty() {
        return Err(CliError::Input("no σ values given".into()));
    }
    if manifest.families != [Family::Hurdle] {
        return Err(CliError::Input(
            "the σ sweep applies to the hurdle family only".into(),
        ));
    }
    let scenario = first_scenario(manifest)?;
    let inputs = manifest.load()?;
    let mut specs = vec![inputs
        .spec_for(Family::Hurdle, &scenario)
        .with_point_mass(PointMassMode::Exact)];
    for &sigma in values {
        let spec = inputs
            .spec_for(Family::Hurdle, &scenario)
            .with_point_mass(PointMassMode::DegenerateBeta { sigma });
        spec.validate()?;
        specs.push(spec);
    }
    let out = OutDir::create(manifest.out_dir())?;
    let mut rows = Vec::new();
    let mut report = Report::default();
    for spec in &specs {
        let run = run_one(&inputs, spec, manifest)?;
        let (setting, value) = match spec.point_mass_mode {
            PointMassMode::Exact => ("exact", None),
            PointMassMode::DegenerateBeta { sigma } => ("degenerate_beta", Some(sigma)),
        };
        rows.extend(sweep_rows(&run, Family::Hurdle, setting, value));
        report.add(&run, manifest.rhat_threshold);
    }
    write_sweep(&out, "sigma1_sweep", &rows)?;
    Ok(report)
}

/// Writes a synthetic trial CSV and its time-grid JSON.
pub fn simulate(
    config: Option<&PathBuf>,
    seed: u64,
    n: Option<usize>,
    output: &Path,
    grid_output: Option<&PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<SyntheticTrialConfig>(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
        None => SyntheticTrialConfig::example(seed),
    };
    if let Some(n) = n {
        cfg.arms.iter_mut().for_each(|a| a.n = n);
    }
    let dataset = generate_synthetic_trial(&cfg)?;
    let parent = output
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), PathBuf::from);
    let out = OutDir::create(parent)?;
    let name = output
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| CliError::Input(format!("bad output path {}", output.display())))?;
    out.write_with(name, |w| write_trial_csv_to(&dataset, w))?;
    if let Some(g) = grid_output {
        std::fs::write(
            g,
            serde_json::to_string_pretty(&cfg.grid).expect("grid serializes") + "\n",
        )
        .map_err(|e| CliError::Output(format!("{}: {e}", g.display())))?;
    }
    Ok(())
}

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use costeff_core::data::{load_trial_csv, TimeGrid, TrialDataset};
use costeff_core::econ::{WtpGrid, DEFAULT_K_REF};
use costeff_core::{Family, MnarScenario, ModelSpec, SamplerConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_OUT_DIR: &str = "costeff-out";
pub const DEFAULT_RHAT_THRESHOLD: f64 = 1.1;

/// Everything a run needs. Flags override manifest fields, which override
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    pub data: Option<PathBuf>,
    /// Time-grid JSON; the 0/3/6/12-month grid when absent.
    pub times: Option<PathBuf>,
    /// Model-spec JSON whose fields apply to every family run.
    pub model_spec: Option<PathBuf>,
    pub families: Vec<Family>,
    /// Empty means the command's own default.
    pub scenarios: Vec<MnarScenario>,
    pub complete_cases: bool,
    pub sampler: SamplerConfig,
    pub wtp_max: f64,
    pub wtp_step: f64,
    pub k_ref: f64,
    pub rhat_threshold: f64,
    pub out: Option<PathBuf>,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            data: None,
            times: None,
            model_spec: None,
            families: vec![Family::Hurdle],
            scenarios: Vec::new(),
            complete_cases: false,
            sampler: SamplerConfig::default(),
            wtp_max: 30_000.0,
            wtp_step: 100.0,
            k_ref: DEFAULT_K_REF,
            rhat_threshold: DEFAULT_RHAT_THRESHOLD,
            out: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Bn,
    Bg,
    Hurdle,
    All,
}

impl FamilyArg {
    fn families(self) -> Vec<Family> {
        match self {
            FamilyArg::Bn => vec![Family::BivariateNormal],
            FamilyArg::Bg => vec![Family::BetaGamma],
            FamilyArg::Hurdle => vec![Family::Hurdle],
            FamilyArg::All => Family::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Mar,
    Mnar1,
    Mnar2,
    Mnar3,
    Mnar4,
}

impl From<ScenarioArg> for MnarScenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Mar => MnarScenario::Mar,
            ScenarioArg::Mnar1 => MnarScenario::Mnar1,
            ScenarioArg::Mnar2 => MnarScenario::Mnar2,
            ScenarioArg::Mnar3 => MnarScenario::Mnar3,
            ScenarioArg::Mnar4 => MnarScenario::Mnar4,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Run manifest JSON; flags given on the command line take precedence.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Trial CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Time-grid JSON (`{"times": [0, 3, 6, 12], "time_unit": 12}`).
    #[arg(long)]
    pub times: Option<PathBuf>,
    /// Model-spec JSON applied to every family.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Missingness scenario; repeat or comma-separate for several.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub scenario: Vec<ScenarioArg>,
    /// Fit only records with every utility and cost observed.
    #[arg(long)]
    pub complete_cases: bool,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Iterations per chain, burn-in included.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub wtp_max: Option<f64>,
    #[arg(long)]
    pub wtp_step: Option<f64>,
    /// Willingness to pay for the net-benefit and sustainability summary.
    #[arg(long)]
    pub k_ref: Option<f64>,
    /// Exit with status 3 when any monitored R-hat exceeds this.
    #[arg(long)]
    pub rhat_threshold: Option<f64>,
    /// Output directory.
    #[arg(long, env = "COSTEFF_OUT_DIR")]
    pub out: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{what} {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{what} {}: {e}", path.display())))
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunManifest, CliError> {
        let mut m = match &self.manifest {
            Some(p) => read_json::<RunManifest>(p, "manifest")?,
            None => RunManifest::default(),
        };
        let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                slot.clone_from(v);
            }
        };
        set(&mut m.data, &self.data);
        set(&mut m.times, &self.times);
        set(&mut m.model_spec, &self.spec);
        set(&mut m.out, &self.out);
        if let Some(f) = self.family {
            m.families = f.families();
        }
        if !self.scenario.is_empty() {
            m.scenarios = self.scenario.iter().map(|s| (*s).into()).collect();
        }
        m.complete_cases |= self.complete_cases;
        let s = &mut m.sampler;
        s.n_chains = self.chains.unwrap_or(s.n_chains);
        s.n_iterations = self.iters.unwrap_or(s.n_iterations);
        s.burn_in = self.burnin.unwrap_or(s.burn_in);
        s.thin = self.thin.unwrap_or(s.thin);
        s.seed = self.seed.unwrap_or(s.seed);
        m.wtp_max = self.wtp_max.unwrap_or(m.wtp_max);
        m.wtp_step = self.wtp_step.unwrap_or(m.wtp_step);
        m.k_ref = self.k_ref.unwrap_or(m.k_ref);
        m.rhat_threshold = self.rhat_threshold.unwrap_or(m.rhat_threshold);
        m.validate()?;
        Ok(m)
    }
}

/// Inputs loaded from a manifest.
pub struct Inputs {
    pub dataset: TrialDataset,
    pub grid: TimeGrid,
    pub base_spec: Option<ModelSpec>,
    pub wtp: WtpGrid,
}

impl RunManifest {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.families.is_empty() {
            return Err(CliError::Input("no model family selected".into()));
        }
        self.sampler
            .validate()
            .map_err(|e| CliError::Input(e.to_string()))?;
        if !(self.rhat_threshold >= 1.0) {
            return Err(CliError::Input(format!(
                "R-hat threshold must be at least 1, got {}",
                self.rhat_threshold
            )));
        }
        if !(self.k_ref >= 0.0 && self.k_ref.is_finite()) {
            return Err(CliError::Input(format!(
                "reference willingness to pay must be non-negative, got {}",
                self.k_ref
            )));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn scenarios_or(&self, default: &[MnarScenario]) -> Vec<MnarScenario> {
        if self.scenarios.is_empty() {
            default.to_vec()
        } else {
            self.scenarios.clone()
        }
    }

    pub fn load(&self) -> Result<Inputs, CliError> {
        let path = self
            .data
            .as_ref()
            .ok_or_else(|| CliError::Input("no data file given (--data)".into()))?;
        let mut dataset = load_trial_csv(path)?;
        if self.complete_cases {
            dataset = dataset.complete_cases();
        }
        let grid = match &self.times {
            Some(p) => TimeGrid::from_json_file(p)?,
            None => TimeGrid::quarterly_year(),
        };
        let base_spec = match &self.model_spec {
            Some(p) => Some(read_json::<ModelSpec>(p, "model spec")?),
            None => None,
        };
        Ok(Inputs {
            dataset,
            grid,
            base_spec,
            wtp: WtpGrid::regular(self.wtp_max, self.wtp_step)?,
        })
    }
}

impl Inputs {
    pub fn spec_for(&self, family: Family, scenario: &MnarScenario) -> ModelSpec {
        let mut spec = match &self.base_spec {
            Some(s) => ModelSpec {
                family,
                ..s.clone()
            },
            None => ModelSpec::new(family),
        };
        spec.mnar_scenario = scenario.clone();
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct T {
        #[command(flatten)]
        run: RunArgs,
    }

    #[test]
    fn flags_override_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mp = dir.path().join("m.json");
        std::fs::write(
            &mp,
            r#"{"families":["bg"],"scenarios":["mnar1"],"sampler":{"seed":9,"n_iterations":500,"burn_in":100},"k_ref":100}"#,
        )
        .unwrap();
        let t = T::parse_from([
            "x",
            "--manifest",
            mp.to_str().unwrap(),
            "--seed",
            "4",
            "--family",
            "all",
        ]);
        let m = t.run.resolve().unwrap();
        assert_eq!(m.families, Family::ALL.to_vec());
        assert_eq!(m.sampler.seed, 4);
        assert_eq!(m.sampler.n_iterations, 500);
        assert_eq!(m.scenarios, vec![MnarScenario::Mnar1]);
        assert_eq!(m.k_ref, 100.0);
    }

    #[test]
    fn invalid_settings_are_input_errors() {
        let t = T::parse_from(["x", "--iters", "100", "--burnin", "200"]);
        assert!(matches!(t.run.resolve(), Err(CliError::Input(_))));
        let t = T::parse_from(["x", "--rhat-threshold", "0.5"]);
        assert!(matches!(t.run.resolve(), Err(CliError::Input(_))));
        let t = T::parse_from(["x", "--scenario", "mar,mnar2"]);
        assert_eq!(
            t.run.resolve().unwrap().scenarios,
            vec![MnarScenario::Mar, MnarScenario::Mnar2]
        );
    }

    #[test]
    fn unknown_manifest_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mp = dir.path().join("m.json");
        std::fs::write(&mp, r#"{"familes":["bg"]}"#).unwrap();
        let t = T::parse_from(["x", "--manifest", mp.to_str().unwrap()]);
        assert!(matches!(t.run.resolve(), Err(CliError::Input(_))));
    }
}

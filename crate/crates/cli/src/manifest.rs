//! Experiment manifests: a TOML description of the scenario matrix.
//!
//! ```toml
//! seed = 7
//! days = 7
//!
//! [weather]
//! profile = "hot_humid"
//!
//! [[scenario]]
//! label = "latent_limit"
//! controller = "mpc_latent"
//! mode = "power_limit"
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use latentmpc::optimizer::{MpcConfig, PlanMode, PowerLimitSchedule};
use latentmpc::psychro::ComfortAssumptions;
use latentmpc::simkit::{
    ControllerKind, PlantParams, ScenarioConfig, SetpointDither, TrackerConfig, TrainingConfig, WeatherProfile, WeatherSource,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherSpec {
    #[serde(default = "default_profile")]
    pub profile: String,
    /// Defaults to the manifest seed.
    pub seed: Option<u64>,
}

fn default_profile() -> String {
    "hot_humid".into()
}

impl Default for WeatherSpec {
    fn default() -> Self {
        Self { profile: default_profile(), seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    pub days: usize,
    pub mpc_fraction: f64,
    /// Defaults to the scenario weather profile.
    pub profile: Option<String>,
    pub seed: u64,
    pub t_m: f64,
    pub dither: SetpointDither,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        let t = TrainingConfig::default();
        Self { days: t.days, mpc_fraction: t.mpc_fraction, profile: None, seed: t.seed, t_m: t.t_m, dither: t.dither }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub label: String,
    pub controller: ControllerKind,
    #[serde(default)]
    pub mode: PlanMode,
    /// Overrides the manifest duration.
    pub days: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_days")]
    pub days: usize,
    #[serde(default)]
    pub weather: WeatherSpec,
    #[serde(default)]
    pub training: TrainingSpec,
    #[serde(default)]
    pub plant: PlantParams,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub comfort: ComfortAssumptions,
    #[serde(default)]
    pub schedule: PowerLimitSchedule,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<ScenarioSpec>,
}

fn default_seed() -> u64 {
    7
}

fn default_days() -> usize {
    7
}

fn profile(name: &str) -> Result<WeatherProfile, CliError> {
    WeatherProfile::by_name(name).ok_or_else(|| CliError::Input(format!("unknown weather profile `{name}` (expected hot_humid or mild_dry)")))
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let manifest: Self = toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.scenarios.is_empty() {
            return Err(CliError::Input("manifest defines no [[scenario]] entries".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &self.scenarios {
            let ok = !s.label.is_empty() && s.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok {
                return Err(CliError::Input(format!("scenario label `{}` must be non-empty [A-Za-z0-9_-]", s.label)));
            }
            if !seen.insert(s.label.as_str()) {
                return Err(CliError::Input(format!("duplicate scenario label `{}`", s.label)));
            }
        }
        profile(&self.weather.profile)?;
        if let Some(p) = &self.training.profile {
            profile(p)?;
        }
        for s in &self.scenarios {
            self.scenario(s)?.validate().map_err(|e| CliError::Input(format!("scenario `{}`: {e}", s.label)))?;
        }
        Ok(())
    }

    pub fn needs_models(&self) -> bool {
        self.scenarios.iter().any(|s| s.controller != ControllerKind::Benchmark)
    }

    pub fn scenario(&self, spec: &ScenarioSpec) -> Result<ScenarioConfig, CliError> {
        Ok(ScenarioConfig {
            label: spec.label.clone(),
            controller: spec.controller,
            mode: spec.mode,
            days: spec.days.unwrap_or(self.days),
            seed: self.seed,
            weather: WeatherSource::Synthetic { profile: profile(&self.weather.profile)?, seed: self.weather.seed.unwrap_or(self.seed) },
            plant: self.plant.clone(),
            tracker: self.tracker,
            mpc: self.mpc.clone(),
            comfort: self.comfort,
            schedule: self.schedule,
            ..ScenarioConfig::default()
        })
    }

    pub fn training(&self) -> Result<TrainingConfig, CliError> {
        let name = self.training.profile.as_deref().unwrap_or(&self.weather.profile);
        Ok(TrainingConfig {
            days: self.training.days,
            mpc_fraction: self.training.mpc_fraction,
            weather: WeatherSource::Synthetic { profile: profile(name)?, seed: self.training.seed },
            plant: self.plant.clone(),
            tracker: self.tracker,
            dither: self.training.dither,
            t_m: self.training.t_m,
            seed: self.training.seed,
            ..TrainingConfig::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ExperimentManifest, CliError> {
        let m: ExperimentManifest = toml::from_str(s).map_err(|e| CliError::Input(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    #[test]
    fn minimal_manifest_uses_defaults() {
        let m = parse("[[scenario]]\nlabel = \"b\"\ncontroller = \"benchmark\"\n").unwrap();
        assert_eq!(m.seed, 7);
        assert_eq!(m.days, 7);
        assert_eq!(m.scenarios[0].mode, PlanMode::Cost);
        assert!(!m.needs_models());
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let s = "[[scenario]]\nlabel = \"a\"\ncontroller = \"benchmark\"\n[[scenario]]\nlabel = \"a\"\ncontroller = \"mpc_latent\"\n";
        assert!(matches!(parse(s), Err(CliError::Input(m)) if m.contains("duplicate")));
    }

    #[test]
    fn unknown_keys_and_profiles_are_rejected() {
        assert!(parse("bogus = 1\n[[scenario]]\nlabel = \"a\"\ncontroller = \"benchmark\"\n").is_err());
        assert!(parse("[weather]\nprofile = \"arctic\"\n[[scenario]]\nlabel = \"a\"\ncontroller = \"benchmark\"\n").is_err());
        assert!(parse("seed = 1\n").is_err());
    }

    #[test]
    fn overrides_reach_the_scenario() {
        let m = parse("days = 2\n[mpc]\ndelta = 2.0\n[[scenario]]\nlabel = \"a\"\ncontroller = \"mpc_sensible\"\nmode = \"power_limit\"\ndays = 1\n").unwrap();
        let s = m.scenario(&m.scenarios[0]).unwrap();
        assert_eq!(s.days, 1);
        assert_eq!(s.mpc.delta, 2.0);
        assert_eq!(s.mode, PlanMode::PowerLimit);
    }
}

//! TOML run configuration.
//!
//! Every key except `geometry.n` and `geometry.N` has a default. Keys that
//! take lists also accept a single value. Unknown keys are rejected, and
//! every error names the offending key path.

use serde::{Deserialize, Serialize};

use crate::dynamics::{linear_times, log_times, InitialStateKind};
use crate::error::{Error, Result};
use crate::experiments::{ExperimentKind, Profile, SingleRun, SweepSpec};
use crate::lattice::GeometryKind;

/// `(key, default, description)` for every configuration key.
pub const CONFIG_KEYS: &[(&str, &str, &str)] = &[
    ("geometry.kind", "\"rings\"", "\"rings\" (stacked rings) or \"helix\""),
    ("geometry.n", "required", "chromophores per ring (or per helix turn); integer or list"),
    ("geometry.N", "required", "number of rings (or helix turns)"),
    ("geometry.R", "1.0", "ring or helix radius"),
    ("geometry.spacing", "10.0", "ring spacing D or helix pitch d; number or list"),
    ("coupling.J", "1.0", "dipolar coupling strength, J / r^3"),
    ("dynamics.gamma", "0.0", "dephasing rate; number or list"),
    ("dynamics.kappa", "0.0", "recombination rate"),
    ("dynamics.t_max", "1.0", "last sample time"),
    ("dynamics.t_min", "0.001", "first sample time of a log grid"),
    ("dynamics.n_time_samples", "11", "number of sample times"),
    ("dynamics.time_grid", "\"linear\"", "\"linear\" on [0, t_max] or \"log\" on [t_min, t_max]"),
    ("dynamics.renormalize", "false", "divide populations by the surviving trace before computing sigma"),
    ("dynamics.near_field_autoscale", "true", "for spacing <= R, rescale times so the last is 0.1 / ||H||"),
    ("dynamics.integrator.dt_override", "unset", "fixed master-equation step instead of the automatic one"),
    ("disorder.sigma", "0.0", "standard deviation of the on-site energies; number or list"),
    ("disorder.seed", "0", "base seed of the realization streams"),
    ("disorder.realizations", "1", "ensemble size; disorder sweeps default to 500 (50 with --profile fast)"),
    ("experiment.kind", "\"scaling\"", "sweep type: scaling, helix, disorder or dephasing"),
    ("experiment.state", "\"delocalized\"", "\"delocalized\" or \"localized\"; string or list"),
    ("experiment.lambda_window", "5", "samples per sliding local-exponent window (odd)"),
    ("experiment.sigma_levels", "[]", "sigma values whose level curves are extracted by disorder sweeps"),
    ("output.dir", "\"out\"", "output directory"),
    ("output.debug_trajectories", "false", "also write per-point population trajectories (sweep)"),
];

/// Aligned key listing for `--help`.
pub fn config_keys_help() -> String {
    let width = CONFIG_KEYS.iter().map(|(k, _, _)| k.len()).max().unwrap_or(0);
    let dwidth = CONFIG_KEYS.iter().map(|(_, d, _)| d.len()).max().unwrap_or(0);
    CONFIG_KEYS
        .iter()
        .map(|(k, d, desc)| format!("  {k:<width$}  {d:<dwidth$}  {desc}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }

    fn single(&self, key: &str) -> Result<T> {
        match self {
            OneOrMany::One(x) => Ok(x.clone()),
            OneOrMany::Many(v) if v.len() == 1 => Ok(v[0].clone()),
            OneOrMany::Many(_) => Err(config_error(key, "simulate takes a single value")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeGrid {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "default_geometry")]
    pub kind: GeometryKind,
    pub n: OneOrMany<usize>,
    #[serde(rename = "N")]
    pub rings: usize,
    #[serde(rename = "R", default = "one")]
    pub radius: f64,
    #[serde(default = "default_spacing")]
    pub spacing: OneOrMany<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    #[serde(rename = "J", default = "one")]
    pub strength: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig { strength: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(default = "zero_list")]
    pub gamma: OneOrMany<f64>,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "one")]
    pub t_max: f64,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_samples")]
    pub n_time_samples: usize,
    #[serde(default)]
    pub time_grid: TimeGrid,
    #[serde(default)]
    pub renormalize: bool,
    #[serde(default = "yes")]
    pub near_field_autoscale: bool,
    #[serde(default)]
    pub integrator: IntegratorConfig,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            gamma: zero_list(),
            kappa: 0.0,
            t_max: 1.0,
            t_min: default_t_min(),
            n_time_samples: default_samples(),
            time_grid: TimeGrid::Linear,
            renormalize: false,
            near_field_autoscale: true,
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderConfig {
    #[serde(default = "zero_list")]
    pub sigma: OneOrMany<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub realizations: Option<usize>,
}

impl Default for DisorderConfig {
    fn default() -> Self {
        DisorderConfig {
            sigma: zero_list(),
            seed: 0,
            realizations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_kind")]
    pub kind: ExperimentKind,
    #[serde(default = "default_state")]
    pub state: OneOrMany<InitialStateKind>,
    #[serde(default = "default_window")]
    pub lambda_window: usize,
    #[serde(default)]
    pub sigma_levels: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: default_kind(),
            state: default_state(),
            lambda_window: default_window(),
            sigma_levels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default)]
    pub debug_trajectories: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            debug_trajectories: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub disorder: DisorderConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn zero_list() -> OneOrMany<f64> {
    OneOrMany::One(0.0)
}
fn default_geometry() -> GeometryKind {
    GeometryKind::RingStack
}
fn default_spacing() -> OneOrMany<f64> {
    OneOrMany::One(10.0)
}
fn default_t_min() -> f64 {
    1e-3
}
fn default_samples() -> usize {
    11
}
fn default_kind() -> ExperimentKind {
    ExperimentKind::Scaling
}
fn default_state() -> OneOrMany<InitialStateKind> {
    OneOrMany::One(InitialStateKind::Delocalized)
}
fn default_window() -> usize {
    5
}
fn default_dir() -> String {
    "out".into()
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

const REQUIRED: &[(&str, &str)] = &[("geometry", "n"), ("geometry", "N")];

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            config_error("<document>", e.message().to_string())
        })?;
        for (section, key) in REQUIRED {
            let present = table
                .get(*section)
                .and_then(|s| s.as_table())
                .is_some_and(|s| s.contains_key(*key));
            if !present {
                return Err(config_error(&format!("{section}.{key}"), "missing required key"));
            }
        }
        let config: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            config_error(&path, e.into_inner().message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Range checks that the types alone do not express.
    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.n.to_vec().is_empty() || g.n.to_vec().contains(&0) {
            return Err(config_error("geometry.n", "must be a non-empty list of integers >= 1"));
        }
        if g.rings == 0 {
            return Err(config_error("geometry.N", "must be >= 1"));
        }
        if !(g.radius.is_finite() && g.radius > 0.0) {
            return Err(config_error("geometry.R", "must be > 0"));
        }
        let spacing = g.spacing.to_vec();
        if spacing.is_empty() || spacing.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(config_error("geometry.spacing", "must be a non-empty list of values > 0"));
        }
        if !self.coupling.strength.is_finite() {
            return Err(config_error("coupling.J", "must be finite"));
        }
        let d = &self.dynamics;
        let gamma = d.gamma.to_vec();
        if gamma.is_empty() || gamma.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(config_error("dynamics.gamma", "must be a non-empty list of values >= 0"));
        }
        if !(d.kappa.is_finite() && d.kappa >= 0.0) {
            return Err(config_error("dynamics.kappa", "must be >= 0"));
        }
        if !(d.t_max.is_finite() && d.t_max > 0.0) {
            return Err(config_error("dynamics.t_max", "must be > 0"));
        }
        if d.n_time_samples == 0 {
            return Err(config_error("dynamics.n_time_samples", "must be >= 1"));
        }
        if d.time_grid == TimeGrid::Log && !(d.t_min > 0.0 && d.t_min < d.t_max) {
            return Err(config_error("dynamics.t_min", "must satisfy 0 < t_min < t_max on a log grid"));
        }
        if let Some(dt) = d.integrator.dt_override {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(config_error("dynamics.integrator.dt_override", "must be > 0"));
            }
        }
        let sigma = self.disorder.sigma.to_vec();
        if sigma.is_empty() || sigma.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(config_error("disorder.sigma", "must be a non-empty list of values >= 0"));
        }
        if self.disorder.realizations == Some(0) {
            return Err(config_error("disorder.realizations", "must be >= 1"));
        }
        if self.experiment.state.to_vec().is_empty() {
            return Err(config_error("experiment.state", "must not be empty"));
        }
        let w = self.experiment.lambda_window;
        if w < 3 || w % 2 == 0 {
            return Err(config_error("experiment.lambda_window", "must be odd and >= 3"));
        }
        Ok(())
    }

    /// Fills profile-dependent defaults: the ensemble size of disorder
    /// sweeps and, under `Fast`, the cap `n <= 6`.
    pub fn apply_profile(&mut self, profile: Profile) -> Result<()> {
        if self.disorder.realizations.is_none() {
            let r = if self.experiment.kind == ExperimentKind::Disorder {
                profile.realizations()
            } else {
                1
            };
            self.disorder.realizations = Some(r);
        }
        if profile == Profile::Fast {
            let cap = Profile::Fast.n_values().into_iter().max().unwrap_or(1);
            let kept: Vec<usize> = self.geometry.n.to_vec().into_iter().filter(|&n| n <= cap).collect();
            if kept.is_empty() {
                return Err(config_error("geometry.n", format!("no value <= {cap} left under the fast profile")));
            }
            self.geometry.n = OneOrMany::Many(kept);
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        let d = &self.dynamics;
        match d.time_grid {
            TimeGrid::Linear => linear_times(d.t_max, d.n_time_samples),
            TimeGrid::Log => log_times(d.t_min, d.t_max, d.n_time_samples),
        }
    }

    pub fn to_sweep_spec(&self) -> Result<SweepSpec> {
        let spec = SweepSpec {
            kind: self.experiment.kind,
            geometry: self.geometry.kind,
            n_values: self.geometry.n.to_vec(),
            rings: self.geometry.rings,
            radius: self.geometry.radius,
            spacings: self.geometry.spacing.to_vec(),
            coupling: self.coupling.strength,
            gammas: self.dynamics.gamma.to_vec(),
            kappa: self.dynamics.kappa,
            times: self.times(),
            sigmas: self.disorder.sigma.to_vec(),
            realizations: self.disorder.realizations.unwrap_or(1),
            seed: self.disorder.seed,
            states: self.experiment.state.to_vec(),
            near_field_autoscale: self.dynamics.near_field_autoscale,
            renormalize: self.dynamics.renormalize,
            dt_override: self.dynamics.integrator.dt_override,
            lambda_window: self.experiment.lambda_window,
            sigma_levels: self.experiment.sigma_levels.clone(),
        };
        spec.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => config_error(&sweep_key(&name), reason),
            other => other,
        })?;
        Ok(spec)
    }

    pub fn to_single_run(&self) -> Result<SingleRun> {
        Ok(SingleRun {
            geometry: self.geometry.kind,
            n: self.geometry.n.single("geometry.n")?,
            rings: self.geometry.rings,
            radius: self.geometry.radius,
            spacing: self.geometry.spacing.single("geometry.spacing")?,
            coupling: self.coupling.strength,
            gamma: self.dynamics.gamma.single("dynamics.gamma")?,
            kappa: self.dynamics.kappa,
            sigma: self.disorder.sigma.single("disorder.sigma")?,
            seed: self.disorder.seed,
            state: self.experiment.state.single("experiment.state")?,
            times: self.times(),
            near_field_autoscale: self.dynamics.near_field_autoscale,
            renormalize: self.dynamics.renormalize,
            dt_override: self.dynamics.integrator.dt_override,
        })
    }
}

/// Config key for a sweep-spec field name.
fn sweep_key(name: &str) -> String {
    match name {
        "n_values" => "geometry.n",
        "N" => "geometry.N",
        "R" => "geometry.R",
        "spacings" => "geometry.spacing",
        "gammas" | "gamma" => "dynamics.gamma",
        "kappa" => "dynamics.kappa",
        "times" => "dynamics.t_max",
        "sigmas" => "disorder.sigma",
        "realizations" => "disorder.realizations",
        "states" => "experiment.state",
        "lambda_window" => "experiment.lambda_window",
        "J" | "coupling" => "coupling.J",
        other => other,
    }
    .into()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[geometry]\nn = 1\nN = 3\n";

    fn error_path(text: &str) -> String {
        match RunConfig::from_toml_str(text).unwrap_err() {
            Error::Config { path, .. } => path,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.geometry.kind, GeometryKind::RingStack);
        assert_eq!(c.geometry.radius, 1.0);
        assert_eq!(c.geometry.spacing, OneOrMany::One(10.0));
        assert_eq!(c.coupling.strength, 1.0);
        assert_eq!(c.times(), linear_times(1.0, 11));
        assert_eq!(c.output.dir, "out");
        let run = c.to_single_run().unwrap();
        assert_eq!((run.n, run.rings, run.gamma), (1, 3, 0.0));
    }

    #[test]
    fn missing_required_keys() {
        assert_eq!(error_path("[geometry]\nN = 3\n"), "geometry.n");
        assert_eq!(error_path("[geometry]\nn = 3\n"), "geometry.N");
        assert_eq!(error_path("[dynamics]\ngamma = 1.0\n"), "geometry.n");
    }

    #[test]
    fn errors_are_path_qualified() {
        assert_eq!(error_path("[geometry]\nn = 1\nN = 3\nR = \"big\"\n"), "geometry.R");
        assert_eq!(error_path("[geometry]\nn = 1\nN = 3\n[dynamics]\ngamma = -1.0\n"), "dynamics.gamma");
        assert_eq!(error_path("[geometry]\nn = 1\nN = 3\n[dynamics]\ntypo = 1\n"), "dynamics.typo");
        assert_eq!(
            error_path("[geometry]\nn = 1\nN = 3\n[dynamics.integrator]\ndt_override = \"x\"\n"),
            "dynamics.integrator.dt_override"
        );
        assert_eq!(error_path("[geometry]\nn = 1\nN = 3\n[experiment]\nkind = \"nope\"\n"), "experiment.kind");
        assert_eq!(error_path("[geometry\n"), "<document>");
    }

    #[test]
    fn lists_and_profiles() {
        let text = "[geometry]\nn = [1, 2, 3, 8]\nN = 5\nspacing = [10.0, 1.0]\n[experiment]\nkind = \"disorder\"\n[disorder]\nsigma = [0.0, 1.0]\n";
        let mut c = RunConfig::from_toml_str(text).unwrap();
        c.apply_profile(Profile::Fast).unwrap();
        assert_eq!(c.geometry.n.to_vec(), vec![1, 2, 3]);
        assert_eq!(c.disorder.realizations, Some(50));
        let spec = c.to_sweep_spec().unwrap();
        assert_eq!(spec.spacings, vec![10.0, 1.0]);
        assert!(c.to_single_run().is_err());

        let mut c = RunConfig::from_toml_str(text).unwrap();
        c.apply_profile(Profile::Paper).unwrap();
        assert_eq!(c.disorder.realizations, Some(500));
    }

    #[test]
    fn sweep_spec_errors_map_to_keys() {
        let text = "[geometry]\nn = 2\nN = 5\n[experiment]\nkind = \"scaling\"\n[dynamics]\ngamma = 0.5\n";
        let mut c = RunConfig::from_toml_str(text).unwrap();
        c.apply_profile(Profile::Paper).unwrap();
        match c.to_sweep_spec().unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "dynamics.gamma"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn defaults_round_trip_through_json() {
        let mut c = RunConfig::from_toml_str(MINIMAL).unwrap();
        c.apply_profile(Profile::Paper).unwrap();
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(json["geometry"]["N"], 3);
        assert_eq!(json["disorder"]["realizations"], 1);
        let back: RunConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn help_lists_every_key() {
        let help = config_keys_help();
        for (k, _, _) in CONFIG_KEYS {
            assert!(help.contains(k));
        }
    }
}

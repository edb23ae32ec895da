//! `key = value` run configuration with optional `[experiment]` sections.
//!
//! Keys before the first section header apply to every experiment; keys inside
//! `[spectrum]`, `[sweep-corruption]` or `[sweep-snr]` apply only when that
//! experiment runs. Precedence, lowest first: experiment preset, global keys,
//! section keys, command-line flags.

use std::collections::hash_map::DefaultHasher;
use std::fmt::{self, Write as _};
use std::hash::Hasher;
use std::path::PathBuf;

use crate::doa::AngularGrid;
use crate::experiments::presets::{self, Preset};
use crate::experiments::{Algorithm, Estimator, Experiment};
use crate::model::{OutlierSpec, PhysicalConstants, Scene, SnrConvention};
use crate::retrieval::{InitWeighting, RetrievalConfig};

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Spectrum,
    SweepCorruption,
    SweepSnr,
}

impl ExperimentKind {
    pub const ALL: [Self; 3] = [Self::Spectrum, Self::SweepCorruption, Self::SweepSnr];

    pub fn name(self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::SweepCorruption => "sweep-corruption",
            Self::SweepSnr => "sweep-snr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    fn preset(self, seed: u64) -> Preset {
        match self {
            Self::Spectrum => presets::spectrum(seed),
            Self::SweepCorruption => presets::corruption_sweep(seed),
            Self::SweepSnr => presets::snr_sweep(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

impl Scale {
    pub fn name(self) -> &'static str {
        match self {
            Self::Desk => "desk",
            Self::Paper => "paper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PenaltySet {
    L1,
    L2,
    #[default]
    Both,
}

impl PenaltySet {
    pub fn name(self) -> &'static str {
        match self {
            Self::L1 => "l1",
            Self::L2 => "l2",
            Self::Both => "both",
        }
    }

    pub fn algorithms(self) -> Vec<Algorithm> {
        match self {
            Self::L1 => vec![Algorithm::RobQMusic],
            Self::L2 => vec![Algorithm::QMusic],
            Self::Both => vec![Algorithm::QMusic, Algorithm::RobQMusic],
        }
    }
}

pub const DEFAULT_SEED: u64 = 1;

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub scale: Scale,
    /// Monte-Carlo trials per sweep point.
    pub mc: usize,
    pub sensors: usize,
    pub snapshots: usize,
    pub doas_deg: Vec<f64>,
    pub user_power: f64,
    pub lo_power_ratio: f64,
    pub path_loss: Vec<f64>,
    pub noise_var: f64,
    pub eta_pct: Vec<f64>,
    pub delta: f64,
    pub snr_db: Vec<f64>,
    pub snr_convention: SnrConvention,
    pub penalty: PenaltySet,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub epsilon: f64,
    pub inner_tol: Option<f64>,
    pub outer_tol: f64,
    pub init_weighting: InitWeighting,
    pub grid_points: usize,
    pub gnuplot: bool,
    /// Where artifacts go. Not part of the digest or `run.meta`.
    pub out: PathBuf,
}

/// Where a setting came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { line: usize, col: usize },
    Flag(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::File { line, col } => write!(f, "{line}:{col}"),
            Self::Flag(name) => write!(f, "{name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub key: String,
    pub value: String,
    pub origin: Origin,
    /// Column of the value, for file settings.
    pub value_col: usize,
}

impl Setting {
    pub fn flag(name: &str, key: &str, value: impl Into<String>) -> Self {
        Self {
            key: key.to_string(),
            value: value.into(),
            origin: Origin::Flag(name.to_string()),
            value_col: 0,
        }
    }

    fn value_origin(&self) -> Origin {
        match &self.origin {
            Origin::File { line, .. } => Origin::File {
                line: *line,
                col: self.value_col,
            },
            o => o.clone(),
        }
    }
}

/// A parsed config file: global settings plus per-experiment sections.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub global: Vec<Setting>,
    pub sections: Vec<(ExperimentKind, Vec<Setting>)>,
}

pub const KEYS: &[&str] = &[
    "experiment",
    "seed",
    "scale",
    "mc",
    "sensors",
    "snapshots",
    "doas_deg",
    "user_power",
    "lo_power_ratio",
    "path_loss",
    "noise_var",
    "eta_pct",
    "delta",
    "snr_db",
    "snr_convention",
    "penalty",
    "outer_iters",
    "inner_iters",
    "epsilon",
    "inner_tol",
    "outer_tol",
    "init_weighting",
    "grid_points",
    "gnuplot",
];

fn parse_error(origin: &Origin, msg: impl fmt::Display) -> CliError {
    CliError::Parse(format!("{origin}: {msg}"))
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

/// Columns are 1-based character positions.
pub fn parse_file(text: &str) -> Result<ConfigFile, CliError> {
    let mut file = ConfigFile::default();
    let mut current: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let indent = content.len() - content.trim_start().len();
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let col = raw[..indent].chars().count() + 1;
        let origin = Origin::File { line, col };
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| parse_error(&origin, "unterminated section header"))?
                .trim();
            let kind = ExperimentKind::parse(name)
                .ok_or_else(|| parse_error(&origin, format!("unknown section `[{name}]`")))?;
            if file.sections.iter().any(|(k, _)| *k == kind) {
                return Err(parse_error(
                    &origin,
                    format!("section `[{name}]` appears twice"),
                ));
            }
            file.sections.push((kind, Vec::new()));
            current = Some(file.sections.len() - 1);
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| {
            parse_error(
                &origin,
                format!("expected `key = value`, found `{trimmed}`"),
            )
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(parse_error(&origin, "missing key before `=`"));
        }
        if !KEYS.contains(&key) {
            return Err(parse_error(&origin, format!("unknown key `{key}`")));
        }
        let eq = content.find('=').unwrap_or(0);
        let after = &content[eq + 1..];
        let value_col = raw[..eq + 1 + (after.len() - after.trim_start().len())]
            .chars()
            .count()
            + 1;
        let setting = Setting {
            key: key.to_string(),
            value: value.trim().to_string(),
            origin: origin.clone(),
            value_col,
        };
        let target = match current {
            Some(s) => {
                if key == "experiment" {
                    return Err(parse_error(
                        &origin,
                        "`experiment` is only allowed before the first section",
                    ));
                }
                &mut file.sections[s].1
            }
            None => &mut file.global,
        };
        if target.iter().any(|s| s.key == key) {
            return Err(parse_error(&origin, format!("duplicate key `{key}`")));
        }
        target.push(setting);
    }
    Ok(file)
}

impl ConfigFile {
    pub fn experiment(&self) -> Result<Option<ExperimentKind>, CliError> {
        match self.global.iter().find(|s| s.key == "experiment") {
            None => Ok(None),
            Some(s) => ExperimentKind::parse(&s.value).map(Some).ok_or_else(|| {
                parse_error(
                    &s.value_origin(),
                    format!("unknown experiment `{}`", s.value),
                )
            }),
        }
    }

    fn section(&self, kind: ExperimentKind) -> &[Setting] {
        self.sections
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, s)| s.as_slice())
            .unwrap_or(&[])
    }
}

fn number<T: std::str::FromStr>(s: &Setting) -> Result<T, CliError> {
    s.value.parse().map_err(|_| {
        parse_error(
            &s.value_origin(),
            format!("`{}` is not a valid value for `{}`", s.value, s.key),
        )
    })
}

fn list(s: &Setting) -> Result<Vec<f64>, CliError> {
    if s.value.is_empty() {
        return Ok(Vec::new());
    }
    s.value
        .split(',')
        .map(|v| {
            v.trim().parse().map_err(|_| {
                parse_error(
                    &s.value_origin(),
                    format!("`{}` is not a number in `{}`", v.trim(), s.key),
                )
            })
        })
        .collect()
}

fn boolean(s: &Setting) -> Result<bool, CliError> {
    match s.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(parse_error(
            &s.value_origin(),
            format!("`{}` expects true or false", s.key),
        )),
    }
}

fn choice<T>(s: &Setting, options: &[(&str, T)]) -> Result<T, CliError>
where
    T: Copy,
{
    options
        .iter()
        .find(|(n, _)| *n == s.value)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            parse_error(
                &s.value_origin(),
                format!("`{}` expects one of {}", s.key, names.join(", ")),
            )
        })
}

/// Settings before preset-dependent defaults are filled in.
#[derive(Debug, Default)]
struct Draft {
    seed: Option<u64>,
    scale: Option<Scale>,
    mc: Option<usize>,
    sensors: Option<usize>,
    snapshots: Option<usize>,
    doas_deg: Option<Vec<f64>>,
    user_power: Option<f64>,
    lo_power_ratio: Option<f64>,
    path_loss: Option<Vec<f64>>,
    noise_var: Option<f64>,
    eta_pct: Option<Vec<f64>>,
    delta: Option<f64>,
    snr_db: Option<Vec<f64>>,
    snr_convention: Option<SnrConvention>,
    penalty: Option<PenaltySet>,
    outer_iters: Option<usize>,
    inner_iters: Option<usize>,
    epsilon: Option<f64>,
    inner_tol: Option<Option<f64>>,
    outer_tol: Option<f64>,
    init_weighting: Option<InitWeighting>,
    grid_points: Option<usize>,
    gnuplot: Option<bool>,
}

impl Draft {
    fn apply(&mut self, s: &Setting) -> Result<(), CliError> {
        match s.key.as_str() {
            "experiment" => {}
            "seed" => self.seed = Some(number(s)?),
            "scale" => {
                self.scale = Some(choice(
                    s,
                    &[("desk", Scale::Desk), ("paper", Scale::Paper)],
                )?)
            }
            "mc" => self.mc = Some(number(s)?),
            "sensors" => self.sensors = Some(number(s)?),
            "snapshots" => self.snapshots = Some(number(s)?),
            "doas_deg" => self.doas_deg = Some(list(s)?),
            "user_power" => self.user_power = Some(number(s)?),
            "lo_power_ratio" => self.lo_power_ratio = Some(number(s)?),
            "path_loss" => self.path_loss = Some(list(s)?),
            "noise_var" => self.noise_var = Some(number(s)?),
            "eta_pct" => self.eta_pct = Some(list(s)?),
            "delta" => self.delta = Some(number(s)?),
            "snr_db" => self.snr_db = Some(list(s)?),
            "snr_convention" => {
                let options: Vec<(&str, SnrConvention)> =
                    SnrConvention::ALL.iter().map(|c| (c.name(), *c)).collect();
                self.snr_convention = Some(choice(s, &options)?);
            }
            "penalty" => {
                self.penalty = Some(choice(
                    s,
                    &[
                        ("l1", PenaltySet::L1),
                        ("l2", PenaltySet::L2),
                        ("both", PenaltySet::Both),
                    ],
                )?)
            }
            "outer_iters" => self.outer_iters = Some(number(s)?),
            "inner_iters" => self.inner_iters = Some(number(s)?),
            "epsilon" => self.epsilon = Some(number(s)?),
            "inner_tol" => {
                self.inner_tol = Some(if s.value == "none" {
                    None
                } else {
                    Some(number(s)?)
                });
            }
            "outer_tol" => self.outer_tol = Some(number(s)?),
            "init_weighting" => {
                self.init_weighting = Some(choice(
                    s,
                    &[
                        ("magnitude", InitWeighting::Magnitude),
                        ("squared", InitWeighting::SquaredMagnitude),
                    ],
                )?)
            }
            "grid_points" => self.grid_points = Some(number(s)?),
            "gnuplot" => self.gnuplot = Some(boolean(s)?),
            other => return Err(parse_error(&s.origin, format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    fn finish(self, experiment: ExperimentKind, out: Option<PathBuf>) -> RunConfig {
        let seed = self.seed.unwrap_or(DEFAULT_SEED);
        let preset = experiment.preset(seed);
        let scale = self.scale.unwrap_or_default();
        let defaults = RetrievalConfig::<f64>::robust();
        let k = self
            .doas_deg
            .as_ref()
            .map_or(preset.scene.num_users(), Vec::len);
        let mut path_loss = self.path_loss.unwrap_or_else(|| vec![1.0; k]);
        if path_loss.len() == 1 && k > 1 {
            path_loss = vec![path_loss[0]; k];
        }
        RunConfig {
            experiment,
            seed,
            scale,
            mc: self.mc.unwrap_or(match scale {
                Scale::Desk => preset.trials_desk,
                Scale::Paper => preset.trials_paper,
            }),
            sensors: self.sensors.unwrap_or(preset.scene.num_sensors),
            snapshots: self.snapshots.unwrap_or(preset.scene.num_snapshots),
            doas_deg: self.doas_deg.unwrap_or(preset.scene.doas_deg.clone()),
            user_power: self.user_power.unwrap_or(preset.scene.user_power),
            lo_power_ratio: self.lo_power_ratio.unwrap_or(preset.scene.lo_power_ratio),
            path_loss,
            noise_var: self.noise_var.unwrap_or(preset.scene.noise_var),
            eta_pct: self
                .eta_pct
                .unwrap_or_else(|| preset.fractions.iter().map(|f| f * 100.0).collect()),
            delta: self.delta.unwrap_or(preset.delta),
            snr_db: self.snr_db.unwrap_or(preset.snrs_db),
            snr_convention: self.snr_convention.unwrap_or_default(),
            penalty: self.penalty.unwrap_or_default(),
            outer_iters: self.outer_iters.unwrap_or(defaults.outer_iters),
            inner_iters: self.inner_iters.unwrap_or(defaults.inner_iters),
            epsilon: self.epsilon.unwrap_or(defaults.epsilon),
            inner_tol: self.inner_tol.unwrap_or(defaults.inner_tol),
            outer_tol: self.outer_tol.unwrap_or(defaults.outer_tol),
            init_weighting: self.init_weighting.unwrap_or(defaults.init_weighting),
            grid_points: self.grid_points.unwrap_or(presets::GRID_POINTS),
            gnuplot: self.gnuplot.unwrap_or(false),
            out: out.unwrap_or_else(|| PathBuf::from("out").join(experiment.name())),
        }
    }
}

/// Resolves `file` and `flags` for `experiment`, then validates the result.
///
/// `experiment` comes from the subcommand; when absent the file's
/// `experiment` key decides.
pub fn resolve(
    experiment: Option<ExperimentKind>,
    file: &ConfigFile,
    flags: &[Setting],
    out: Option<PathBuf>,
) -> Result<RunConfig, CliError> {
    let declared = file.experiment()?;
    let experiment = match (experiment, declared) {
        (Some(a), Some(b)) if a != b => {
            return Err(invalid(format!(
                "config declares experiment `{}` but `{}` was requested",
                b.name(),
                a.name()
            )));
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => {
            return Err(invalid(
                "no experiment given; set `experiment` in the config",
            ))
        }
    };
    for s in flags {
        if !KEYS.contains(&s.key.as_str()) || s.key == "experiment" {
            return Err(parse_error(&s.origin, format!("unknown key `{}`", s.key)));
        }
    }
    let mut draft = Draft::default();
    for s in file
        .global
        .iter()
        .chain(file.section(experiment))
        .chain(flags)
    {
        draft.apply(s)?;
    }
    // settings for other experiments must still be well-formed
    for (kind, settings) in &file.sections {
        if *kind != experiment {
            let mut scratch = Draft::default();
            settings.iter().try_for_each(|s| scratch.apply(s))?;
        }
    }
    let config = draft.finish(experiment, out);
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn scene(&self) -> Scene<f64> {
        let mut scene = Scene::new(
            self.sensors,
            self.snapshots,
            self.doas_deg.clone(),
            self.user_power,
            self.noise_var,
            self.seed,
        );
        scene.lo_power_ratio = self.lo_power_ratio;
        scene.path_loss = self.path_loss.clone();
        scene
    }

    pub fn retrieval(&self) -> RetrievalConfig<f64> {
        RetrievalConfig {
            outer_iters: self.outer_iters,
            inner_iters: self.inner_iters,
            epsilon: self.epsilon,
            inner_tol: self.inner_tol,
            outer_tol: self.outer_tol,
            init_weighting: self.init_weighting,
            ..RetrievalConfig::robust()
        }
    }

    /// The experiment with no outliers; sweeps set their own.
    pub fn experiment(&self) -> Result<Experiment<f64>, CliError> {
        let template = self.retrieval();
        let wanted = self.penalty.algorithms();
        let estimators = Estimator::pair(&template)
            .into_iter()
            .filter(|e| wanted.contains(&e.algorithm))
            .collect();
        Ok(Experiment {
            scene: self.scene(),
            constants: PhysicalConstants::default(),
            outliers: OutlierSpec::none(),
            estimators,
            grid: AngularGrid::new(self.grid_points).map_err(|e| invalid(e.to_string()))?,
        })
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.eta_pct.iter().map(|e| e / 100.0).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for &eta in &self.eta_pct {
            if !(0.0..=100.0).contains(&eta) {
                return Err(invalid(format!("eta_pct = {eta} is outside [0, 100]")));
            }
        }
        if self.eta_pct.is_empty() {
            return Err(invalid("eta_pct must list at least one value"));
        }
        if self.experiment == ExperimentKind::SweepSnr && self.snr_db.is_empty() {
            return Err(invalid("snr_db must list at least one value"));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(invalid("snr_db values must be finite"));
        }
        if self.mc == 0 {
            return Err(invalid("mc must be at least 1"));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(invalid(format!(
                "delta = {} must be finite and non-negative",
                self.delta
            )));
        }
        let k = self.doas_deg.len();
        if self.path_loss.len() != k {
            return Err(invalid(format!(
                "path_loss has {} entries but there are {k} users",
                self.path_loss.len()
            )));
        }
        let exp = self.experiment()?;
        exp.validate().map_err(|e| invalid(e.to_string()))?;
        for &eta in &self.fractions() {
            OutlierSpec::new(eta, self.delta)
                .validate()
                .map_err(|e| invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Canonical `key = value` form; feeding it back as a config reproduces this run.
    pub fn to_meta(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = if v.is_empty() {
                writeln!(s, "{k} =")
            } else {
                writeln!(s, "{k} = {v}")
            };
        };
        put("experiment", self.experiment.name().into());
        put("seed", self.seed.to_string());
        put("scale", self.scale.name().into());
        put("mc", self.mc.to_string());
        put("sensors", self.sensors.to_string());
        put("snapshots", self.snapshots.to_string());
        put("doas_deg", join(&self.doas_deg));
        put("user_power", real(self.user_power));
        put("lo_power_ratio", real(self.lo_power_ratio));
        put("path_loss", join(&self.path_loss));
        put("noise_var", real(self.noise_var));
        put("eta_pct", join(&self.eta_pct));
        put("delta", real(self.delta));
        put("snr_db", join(&self.snr_db));
        put("snr_convention", self.snr_convention.name().into());
        put("penalty", self.penalty.name().into());
        put("outer_iters", self.outer_iters.to_string());
        put("inner_iters", self.inner_iters.to_string());
        put("epsilon", real(self.epsilon));
        put("inner_tol", self.inner_tol.map_or("none".into(), real));
        put("outer_tol", real(self.outer_tol));
        put(
            "init_weighting",
            match self.init_weighting {
                InitWeighting::Magnitude => "magnitude",
                InitWeighting::SquaredMagnitude => "squared",
            }
            .into(),
        );
        put("grid_points", self.grid_points.to_string());
        put("gnuplot", self.gnuplot.to_string());
        s
    }

    pub fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        h.write(self.to_meta().as_bytes());
        h.finish()
    }
}

/// Shortest round-trip decimal, in exponent form for very small or large magnitudes.
pub fn real(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|&x| real(x)).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve_text(
        kind: Option<ExperimentKind>,
        text: &str,
        flags: &[Setting],
    ) -> Result<RunConfig, CliError> {
        resolve(kind, &parse_file(text)?, flags, None)
    }

    #[test]
    fn empty_file_gives_presets() {
        let c = resolve_text(Some(ExperimentKind::Spectrum), "", &[]).unwrap();
        assert_eq!((c.sensors, c.snapshots, c.delta), (32, 100, 3.0));
        assert_eq!(c.eta_pct, vec![0.0, 20.0]);
        let c = resolve_text(Some(ExperimentKind::SweepSnr), "scale = paper\n", &[]).unwrap();
        assert_eq!((c.sensors, c.snapshots, c.delta, c.mc), (8, 200, 39.0, 500));
        assert_eq!(c.snr_db, vec![0.0, 4.0, 8.0, 12.0, 16.0, 20.0]);
        let c = resolve_text(Some(ExperimentKind::SweepCorruption), "", &[]).unwrap();
        assert_eq!((c.sensors, c.snapshots, c.delta, c.mc), (32, 500, 10.0, 20));
        assert_eq!(c.eta_pct.len(), 10);
    }

    #[test]
    fn precedence_and_sections() {
        let text = "mc = 3\nsensors = 10 # trailing\n[sweep-snr]\nsensors = 12\n[spectrum]\nsensors = 14\n";
        let flags = [Setting::flag("--mc", "mc", "5")];
        let c = resolve_text(Some(ExperimentKind::SweepSnr), text, &flags).unwrap();
        assert_eq!((c.mc, c.sensors), (5, 12));
        let c = resolve_text(Some(ExperimentKind::SweepCorruption), text, &[]).unwrap();
        assert_eq!((c.mc, c.sensors), (3, 10));
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = resolve_text(None, "seed = 1\n  bogus = 3\n", &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(
            err.to_string().contains("2:3") && err.to_string().contains("bogus"),
            "{err}"
        );
        let err = resolve_text(Some(ExperimentKind::Spectrum), "mc = many\n", &[]).unwrap_err();
        assert!(err.to_string().contains("1:6"), "{err}");
        for bad in [
            "just words\n",
            "[nowhere]\n",
            "[spectrum\n",
            "mc = 1\nmc = 2\n",
            "[spectrum]\nexperiment = spectrum\n",
        ] {
            assert_eq!(
                parse_file(bad).map_err(|e| e.exit_code()),
                Err(2),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn semantic_errors() {
        let eta = [Setting::flag("--eta", "eta_pct", "150")];
        let err = resolve_text(Some(ExperimentKind::Spectrum), "", &eta).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("[0, 100]"), "{err}");
        let err = resolve_text(Some(ExperimentKind::Spectrum), "sensors = 2\n", &[]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let err = resolve_text(
            Some(ExperimentKind::Spectrum),
            "experiment = sweep-snr\n",
            &[],
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert_eq!(resolve_text(None, "", &[]).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn meta_round_trip_and_digest() {
        let text = "seed = 9\nuser_power = 2e-18\ninner_tol = none\nsnr_db = 0,2.5\n";
        let a = resolve_text(Some(ExperimentKind::SweepSnr), text, &[]).unwrap();
        let b = resolve_text(Some(ExperimentKind::SweepSnr), text, &[]).unwrap();
        assert_eq!(a.digest(), b.digest());
        let again = resolve_text(None, &a.to_meta(), &[]).unwrap();
        assert_eq!(again, a);
        assert_eq!(again.to_meta(), a.to_meta());
        assert_eq!(a.inner_tol, None);
        let other = resolve_text(Some(ExperimentKind::SweepSnr), "seed = 10\n", &[]).unwrap();
        assert_ne!(other.digest(), a.digest());
    }

    #[test]
    fn real_formatting_round_trips() {
        for x in [1e-18, 10f64.powf(-19.1), 0.25, 40.0, -60.0, 0.0, 1e20] {
            assert_eq!(real(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(real(1e-18), "1e-18");
        assert_eq!(real(-60.0), "-60");
    }
}

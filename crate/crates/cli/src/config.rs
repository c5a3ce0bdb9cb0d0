//! Pipeline configuration file.

use std::path::{Path, PathBuf};

use maintien::fitting::{FitConfig, KnotSpec};
use maintien::ingest::LoadOptions;
use maintien::reserving::{ReserveConfig, TailClosure};
use maintien::survival::Weighting;
use maintien::validation::{ClassGrouping, Reading};
use maintien::whittaker::WhConfig;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;
use crate::pipeline::{MANIFEST, OUTPUTS};

pub const DEFAULT_MODEL: &str = "decay:base=0.002,amp=0.02,scale=120,slope=-0.01,ref=42.5";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Claim file; when absent, claims are simulated from `synthetic`.
    pub claims: Option<PathBuf>,
    /// External reserve table to compare against; when absent, the
    /// Whittaker-Henderson table is the reference.
    pub reference: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub synthetic: SyntheticSettings,
    pub load: LoadSettings,
    pub study: StudyWindow,
    pub weighting: Weighting,
    pub fit: FitConfig,
    pub whittaker: WhConfig,
    pub validation: ValidationSettings,
    pub expectancy: ExpectancySettings,
    pub reserve: ReserveSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            claims: None,
            reference: None,
            out_dir: PathBuf::from("out"),
            synthetic: SyntheticSettings::default(),
            load: LoadSettings::default(),
            study: StudyWindow::default(),
            weighting: Weighting::Exposure,
            fit: FitConfig { knots: calendar_knots(), ..FitConfig::default() },
            whittaker: WhConfig::default(),
            validation: ValidationSettings::default(),
            expectancy: ExpectancySettings::default(),
            reserve: ReserveSettings::default(),
        }
    }
}

/// Duration lines at one month, one quarter, six months, one and two years;
/// one age line.
pub fn calendar_knots() -> KnotSpec {
    KnotSpec::Fixed { t_knots: vec![30.0, 90.0, 180.0, 365.0, 730.0], x_knots: vec![42.0] }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSettings {
    pub model: String,
    pub claims: usize,
    pub censoring_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSettings {
    fn default() -> Self {
        Self { model: DEFAULT_MODEL.into(), claims: 20_000, censoring_rate: 0.3, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadSettings {
    pub delimiter: char,
    pub age_min: i32,
    pub age_max: i32,
    pub franchise_days: u32,
    pub durations_include_franchise: bool,
}

impl Default for LoadSettings {
    fn default() -> Self {
        let d = LoadOptions::default();
        Self {
            delimiter: d.delimiter as char,
            age_min: d.age_min,
            age_max: d.age_max,
            franchise_days: d.franchise_days,
            durations_include_franchise: d.durations_include_franchise,
        }
    }
}

impl LoadSettings {
    pub fn options(&self) -> Result<LoadOptions, Failure> {
        if !self.delimiter.is_ascii() {
            return Err(Failure::usage("config", format_args!("delimiter `{}` must be ASCII", self.delimiter)));
        }
        Ok(LoadOptions {
            delimiter: self.delimiter as u8,
            age_min: self.age_min,
            age_max: self.age_max,
            franchise_days: self.franchise_days,
            durations_include_franchise: self.durations_include_franchise,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyWindow {
    pub age_min: i32,
    pub age_max: i32,
    pub horizon_days: u32,
}

impl Default for StudyWindow {
    fn default() -> Self {
        Self { age_min: 25, age_max: 60, horizon_days: 1095 }
    }
}

impl StudyWindow {
    pub fn ages(&self) -> Vec<i32> {
        (self.age_min..=self.age_max).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationSettings {
    pub age_edges: Vec<i32>,
    pub day_edges: Vec<u32>,
    pub level: f64,
    pub reading: Reading,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        let g = ClassGrouping::default();
        Self { age_edges: g.age_edges, day_edges: g.day_edges, level: 0.95, reading: Reading::Marginal }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpectancySettings {
    pub enabled: bool,
    pub tail: TailClosure,
}

impl Default for ExpectancySettings {
    fn default() -> Self {
        Self { enabled: true, tail: TailClosure::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReserveMode {
    #[default]
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReserveSettings {
    pub rate: f64,
    pub mode: ReserveMode,
    pub table: ReserveConfig,
}

impl Default for ReserveSettings {
    fn default() -> Self {
        Self { rate: 0.03, mode: ReserveMode::Discrete, table: ReserveConfig::default() }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::usage("config", format_args!("invalid configuration: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage("config", format_args!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        // Input paths are relative to the configuration file.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.claims, &mut config.reference].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn output_paths(&self) -> Vec<PathBuf> {
        OUTPUTS.iter().chain([&MANIFEST]).map(|f| self.out_dir.join(f)).collect()
    }

    /// Input files must not coincide with any output file.
    pub fn check_paths(&self) -> Result<(), Failure> {
        let outputs: Vec<PathBuf> = self.output_paths().iter().map(|p| normalize(p)).collect();
        for input in self.claims.iter().chain(&self.reference) {
            let n = normalize(input);
            if let Some(o) = outputs.iter().find(|o| **o == n) {
                return Err(Failure::usage(
                    "config",
                    format_args!("input {} would be overwritten by output {}", input.display(), o.display()),
                ));
            }
        }
        Ok(())
    }
}

/// Absolute path with `.` and `..` resolved lexically.
fn normalize(p: &Path) -> PathBuf {
    let abs = std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let mut out = PathBuf::new();
    for c in abs.components() {
        match c {
            std::path::Component::CurDir => {}
            std::path::Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}

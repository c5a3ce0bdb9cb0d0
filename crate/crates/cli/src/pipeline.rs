//! End-to-end run from claims to reserve tables.

use std::path::{Path, PathBuf};

use log::{info, warn};
use maintien::fitting::{fit_surface, FitReport};
use maintien::ingest::{build_cohorts, generate_synthetic, load_claims, ClaimRecord, ParametricHazard, SyntheticDesign};
use maintien::io::{read_reserve_table, write_maintenance_table, write_raw_surface, write_reserve_table};
use maintien::reserving::{
    compare_tables, fit_expectancy_pipeline, maintenance_table, ExpectancyConfig, ReserveError, ReserveTable,
};
use maintien::survival::{exit_rates, trim_ages};
use maintien::validation::{validate, ClassGrouping, TestDecision, ValidationReport};
use maintien::whittaker::{wh2d_smooth, WhConfig};
use maintien::DailyRates;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{PipelineConfig, ReserveMode, StudyWindow};
use crate::failure::{read_bytes, render, to_json, write_bytes, Failure, StageExt};

pub const OUTPUTS: [&str; 6] = [
    "raw_surface.csv",
    "fitted_surface.json",
    "validation.json",
    "maintenance_table.csv",
    "reserve_table.csv",
    "comparison.csv",
];
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub stage: String,
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub complete: bool,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub config_sha256: String,
    pub outputs: Vec<OutputEntry>,
}

#[derive(Debug)]
pub struct PipelineFailure {
    pub failure: Failure,
    /// Written to the output directory when it could be created.
    pub manifest: Option<Box<Manifest>>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Outputs {
    dir: PathBuf,
    entries: Vec<OutputEntry>,
}

impl Outputs {
    fn emit(&mut self, stage: &'static str, file: &str, bytes: &[u8]) -> Result<(), Failure> {
        write_bytes(&self.dir.join(file), bytes, stage)?;
        info!("{stage}: wrote {file} ({} bytes)", bytes.len());
        self.entries.push(OutputEntry {
            stage: stage.into(),
            file: file.into(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }
}

/// One chi-square line of the validation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareLine {
    pub model: String,
    pub statistic: f64,
    pub df: usize,
    pub threshold: f64,
    pub accept: bool,
}

impl ChiSquareLine {
    fn of(model: &str, d: &TestDecision) -> Self {
        Self { model: model.into(), statistic: d.statistic, df: d.df, threshold: d.threshold, accept: d.accept }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhittakerSection {
    pub config: WhConfig,
    pub residual: f64,
    pub validation: ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectancySection {
    pub fit: FitReport,
    pub clamp_count: usize,
    pub validation: ValidationReport,
}

/// The expectancy-first comparison is diagnostic: a failure is recorded,
/// not raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum ExpectancyStatus {
    Disabled,
    Failed { error: String },
    Done(Box<ExpectancySection>),
}

/// Contents of `validation.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationBundle {
    pub summary: Vec<ChiSquareLine>,
    pub fit: FitReport,
    pub spline: ValidationReport,
    pub whittaker: WhittakerSection,
    pub expectancy: ExpectancyStatus,
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<Manifest, PipelineFailure> {
    config.check_paths().map_err(|failure| PipelineFailure { failure, manifest: None })?;
    std::fs::create_dir_all(&config.out_dir).map_err(|e| PipelineFailure {
        failure: Failure::data("setup", format_args!("cannot create {}: {e}", config.out_dir.display())),
        manifest: None,
    })?;
    let mut out = Outputs { dir: config.out_dir.clone(), entries: Vec::new() };
    let result = stages(config, &mut out);
    let manifest = Manifest {
        complete: result.is_ok(),
        failed_stage: result.as_ref().err().map(|f| f.stage.to_string()),
        error: result.as_ref().err().map(|f| format!("{:#}", f.error)),
        config_sha256: sha256_hex(config.to_toml().as_bytes()),
        outputs: out.entries,
    };
    let written = write_bytes(&config.out_dir.join(MANIFEST), &to_json(&manifest), "manifest");
    match (result, written) {
        (Ok(()), Ok(())) => Ok(manifest),
        (Ok(()), Err(failure)) => Err(PipelineFailure { failure, manifest: None }),
        (Err(failure), w) => Err(PipelineFailure { failure, manifest: w.ok().map(|_| Box::new(manifest)) }),
    }
}

pub fn load_or_simulate(config: &PipelineConfig) -> Result<Vec<ClaimRecord>, Failure> {
    match &config.claims {
        Some(path) => {
            let bytes = read_bytes(path, "ingest")?;
            let loaded = load_claims(bytes.as_slice(), &config.load.options()?).stage("ingest")?;
            if !loaded.report.is_empty() {
                warn!("{} claim rows rejected in {}", loaded.report.len(), path.display());
            }
            Ok(loaded.records)
        }
        None => {
            let s = &config.synthetic;
            let model: ParametricHazard = s.model.parse().stage("ingest")?;
            let w = config.study;
            let design = SyntheticDesign::even(w.age_min, w.age_max, s.claims, s.censoring_rate, w.horizon_days, s.seed);
            generate_synthetic(&model, &design).stage("ingest")
        }
    }
}

fn grouping(config: &PipelineConfig) -> Result<ClassGrouping, Failure> {
    let v = &config.validation;
    ClassGrouping::new(v.age_edges.clone(), v.day_edges.clone()).stage("validation")
}

/// Reserve table of `rates` over the study ages in the configured mode.
pub fn reserves<R: DailyRates + Sync + ?Sized>(
    rates: &R,
    ages: &[i32],
    mode: ReserveMode,
    i: f64,
    cfg: &maintien::reserving::ReserveConfig,
) -> Result<ReserveTable, ReserveError> {
    use rayon::prelude::*;
    match mode {
        ReserveMode::Discrete => maintien::reserving::reserve_table(&maintenance_table(rates, ages, cfg)?, i),
        ReserveMode::Continuous => {
            let months: Vec<u32> = (0..=cfg.horizon_months).collect();
            let values = ages
                .par_iter()
                .map(|&x| {
                    months
                        .iter()
                        .map(|&y| maintien::reserving::reserve_continuous(rates, i, x as f64, y as f64, cfg).map(|r| r.value))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ReserveTable { ages: ages.to_vec(), months, values })
        }
    }
}

fn stages(config: &PipelineConfig, out: &mut Outputs) -> Result<(), Failure> {
    let records = load_or_simulate(config)?;
    info!("ingest: {} claims", records.len());

    let StudyWindow { age_min, age_max, horizon_days } = config.study;
    let cohorts = build_cohorts(&records, horizon_days);
    let raw = trim_ages(&exit_rates(&cohorts, config.weighting).stage("km")?, age_min, age_max).stage("km")?;
    out.emit("km", OUTPUTS[0], &render("km", |b| write_raw_surface(&raw, b))?)?;

    let fitted = fit_surface(&raw, &config.fit).stage("fit")?;
    if !fitted.report.out_of_range_cells.is_empty() {
        warn!("fit: {} fitted values outside [0, 1]", fitted.report.out_of_range_cells.len());
    }
    out.emit("fit", OUTPUTS[1], fitted.surface.to_json().as_bytes())?;

    let groups = grouping(config)?;
    let (level, reading) = (config.validation.level, config.validation.reading);
    let spline = validate(&fitted.surface, &cohorts, &groups, level, reading).stage("validation")?;
    let wh = wh2d_smooth(&raw, &config.whittaker).stage("whittaker")?;
    let wh_report = validate(&wh.grid, &cohorts, &groups, level, reading).stage("validation")?;
    let expectancy = if config.expectancy.enabled {
        let cfg = ExpectancyConfig { fit: config.fit.clone(), tail: config.expectancy.tail };
        match fit_expectancy_pipeline(&raw, &cfg) {
            Ok(alt) => {
                let report = validate(&alt.rates, &cohorts, &groups, level, reading).stage("validation")?;
                ExpectancyStatus::Done(Box::new(ExpectancySection { fit: alt.fit.report, clamp_count: alt.clamp_count, validation: report }))
            }
            Err(e) => {
                warn!("expectancy comparison skipped: {e}");
                ExpectancyStatus::Failed { error: e.to_string() }
            }
        }
    } else {
        ExpectancyStatus::Disabled
    };
    let mut summary = vec![ChiSquareLine::of("spline", &spline.decision), ChiSquareLine::of("whittaker", &wh_report.decision)];
    if let ExpectancyStatus::Done(e) = &expectancy {
        summary.push(ChiSquareLine::of("expectancy", &e.validation.decision));
    }
    let bundle = ValidationBundle {
        summary,
        fit: fitted.report.clone(),
        spline,
        whittaker: WhittakerSection { config: config.whittaker, residual: wh.residual, validation: wh_report },
        expectancy,
    };
    out.emit("validation", OUTPUTS[2], &to_json(&bundle))?;

    let ages = config.study.ages();
    let r = &config.reserve;
    let table = maintenance_table(&fitted.surface, &ages, &r.table).stage("maintenance")?;
    out.emit("maintenance", OUTPUTS[3], &render("maintenance", |b| write_maintenance_table(&table, b))?)?;

    let candidate = reserves(&fitted.surface, &ages, r.mode, r.rate, &r.table).stage("reserve")?;
    out.emit("reserve", OUTPUTS[4], &render("reserve", |b| write_reserve_table(&candidate, b))?)?;

    let reference = match &config.reference {
        Some(path) => read_reserve_table(read_bytes(path, "compare")?.as_slice()).stage("compare")?,
        None => reserves(&wh.grid, &ages, r.mode, r.rate, &r.table).stage("compare")?,
    };
    let cmp = compare_tables(&candidate, &reference).stage("compare")?;
    if !cmp.dropped_ages.is_empty() || !cmp.dropped_months.is_empty() {
        warn!("compare: dropped ages {:?}, months {:?} not shared by both tables", cmp.dropped_ages, cmp.dropped_months);
    }
    out.emit("compare", OUTPUTS[5], &render("compare", |b| write_reserve_table(&cmp.table, b))?)?;
    Ok(())
}

/// Reads a finished run's validation bundle.
pub fn read_validation(dir: &Path) -> Result<ValidationBundle, Failure> {
    let bytes = read_bytes(&dir.join(OUTPUTS[2]), "validation")?;
    serde_json::from_slice(&bytes).map_err(|e| Failure::data("validation", e))
}

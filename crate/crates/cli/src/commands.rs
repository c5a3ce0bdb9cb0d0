//! Subcommand implementations.

use std::path::Path;

use log::{info, warn};
use maintien::fitting::{auto_knots, fit_surface, FitConfig, KnotSpec, WeightScale};
use maintien::ingest::{build_cohorts, generate_synthetic, load_claims, write_claims, CohortData, LoadOptions, ParametricHazard, SyntheticDesign};
use maintien::io::{
    read_rate_grid, read_raw_surface, read_reserve_table, write_grid, write_maintenance_table, write_rate_grid,
    write_raw_surface, write_reserve_table, write_variance,
};
use maintien::reserving::{compare_tables, maintenance_table, ReserveConfig};
use maintien::survival::{estimate_all, exit_rates, trim_ages, RawRateSurface, Weighting};
use maintien::validation::{validate, ClassGrouping};
use maintien::whittaker::{wh2d_smooth, WhConfig};
use maintien::{DailyRates, PPSurface};

use crate::args::*;
use crate::config::PipelineConfig;
use crate::export::{sample_rates, sample_table};
use crate::failure::{read_bytes, render, to_json, write_bytes, Failure, FailureKind, StageExt};
use crate::pipeline::{reserves, run_pipeline};

pub fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage("setup", format_args!("cannot configure {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Km(a) => km(a),
        Command::Fit(a) => fit(a),
        Command::Wh(a) => wh(a),
        Command::Validate(a) => validate_cmd(a),
        Command::Reserve(a) => reserve(a),
        Command::Compare(a) => compare(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Export(a) => export(a),
    }
}

fn synth(a: SynthArgs) -> Result<(), Failure> {
    let model: ParametricHazard = a.model.parse().stage("synth")?;
    let design = SyntheticDesign::even(a.age_min, a.age_max, a.n, a.censoring, a.horizon, a.seed);
    let records = generate_synthetic(&model, &design).stage("synth")?;
    let bytes = render("synth", |b| write_claims(&records, b))?;
    write_bytes(&a.out, &bytes, "synth")
}

fn load_options(o: &ClaimOptions) -> Result<LoadOptions, Failure> {
    if !o.delimiter.is_ascii() {
        return Err(Failure::usage("ingest", format_args!("delimiter `{}` must be ASCII", o.delimiter)));
    }
    Ok(LoadOptions {
        delimiter: o.delimiter as u8,
        franchise_days: o.franchise_days,
        durations_include_franchise: o.durations_include_franchise,
        ..LoadOptions::default()
    })
}

fn cohorts_from(path: &Path, o: &ClaimOptions) -> Result<CohortData, Failure> {
    let bytes = read_bytes(path, "ingest")?;
    let loaded = load_claims(bytes.as_slice(), &load_options(o)?).stage("ingest")?;
    if !loaded.report.is_empty() {
        warn!("{} rows rejected in {}", loaded.report.len(), path.display());
    }
    Ok(build_cohorts(&loaded.records, o.horizon))
}

fn km(a: KmArgs) -> Result<(), Failure> {
    let cohorts = cohorts_from(&a.claims, &a.claim_options)?;
    let weighting = match a.weighting {
        WeightingArg::Exposure => Weighting::Exposure,
        WeightingArg::Uniform => Weighting::Uniform,
    };
    let raw = trim_ages(&exit_rates(&cohorts, weighting).stage("km")?, a.age_min, a.age_max).stage("km")?;
    let estimates: Vec<_> = estimate_all(&cohorts)
        .into_iter()
        .filter(|(c, _)| (a.age_min..=a.age_max).contains(&c.age))
        .collect();
    write_bytes(&a.out_surface, &render("km", |b| write_raw_surface(&raw, b))?, "km")?;
    write_bytes(&a.out_variance, &render("km", |b| write_variance(&estimates, b))?, "km")
}

fn read_raw(path: &Path, stage: &'static str) -> Result<RawRateSurface, Failure> {
    read_raw_surface(read_bytes(path, stage)?.as_slice()).stage(stage)
}

fn knot_spec(h: &KnotArg, v: &KnotArg, raw: &RawRateSurface) -> Result<KnotSpec, Failure> {
    Ok(match (h, v) {
        (KnotArg::Lines(x), KnotArg::Lines(t)) => KnotSpec::Fixed { t_knots: t.clone(), x_knots: x.clone() },
        (KnotArg::Auto(h), KnotArg::Auto(v)) => KnotSpec::Auto { h: *h, v: *v },
        _ => {
            let count = |k: &KnotArg| if let KnotArg::Auto(n) = k { *n } else { 0 };
            let grid = auto_knots(raw, count(h), count(v)).stage("fit")?;
            let pick = |k: &KnotArg, auto: Vec<f64>| if let KnotArg::Lines(l) = k { l.clone() } else { auto };
            KnotSpec::Fixed { t_knots: pick(v, grid.t_knots), x_knots: pick(h, grid.x_knots) }
        }
    })
}

fn fit(a: FitArgs) -> Result<(), Failure> {
    let raw = read_raw(&a.surface, "fit")?;
    let config = FitConfig {
        alpha: a.alpha,
        degree: a.degree,
        smoothness: a.smoothness,
        knots: knot_spec(&a.knots_h, &a.knots_v, &raw)?,
        lambda: None,
        stride: a.stride,
        weight_scale: match a.weight_scale {
            WeightScaleArg::Count => WeightScale::Count,
            WeightScaleArg::Unit => WeightScale::Unit,
        },
    };
    let out = fit_surface(&raw, &config).stage("fit")?;
    write_bytes(&a.out, out.surface.to_json().as_bytes(), "fit")?;
    let report = to_json(&out.report);
    match &a.report {
        Some(path) => write_bytes(path, &report, "fit"),
        None => {
            print!("{}", String::from_utf8_lossy(&report));
            Ok(())
        }
    }
}

fn wh(a: WhArgs) -> Result<(), Failure> {
    let raw = read_raw(&a.surface, "whittaker")?;
    let config = WhConfig { order_t: a.order.0, order_x: a.order.1, lambda_t: a.lambda.0, lambda_x: a.lambda.1 };
    let out = wh2d_smooth(&raw, &config).stage("whittaker")?;
    info!("whittaker: normal-equation residual {:e}", out.residual);
    write_bytes(&a.out, &render("whittaker", |b| write_rate_grid(&out.grid, b))?, "whittaker")
}

/// A fitted surface (`.json`) or a rate grid (any other extension).
pub fn load_rates(path: &Path, stage: &'static str) -> Result<Box<dyn DailyRates + Sync>, Failure> {
    let bytes = read_bytes(path, stage)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let text = String::from_utf8(bytes).map_err(|e| Failure::data(stage, e))?;
        Ok(Box::new(PPSurface::from_json(&text).stage(stage)?))
    } else {
        Ok(Box::new(read_rate_grid(bytes.as_slice()).stage(stage)?))
    }
}

fn validate_cmd(a: ValidateArgs) -> Result<(), Failure> {
    let rates = load_rates(&a.surface, "validation")?;
    let cohorts = cohorts_from(&a.claims, &a.claim_options)?;
    let d = ClassGrouping::default();
    let age_edges = match &a.age_classes {
        Some(s) => parse_list(s).map_err(|e| Failure::usage("validation", e))?,
        None => d.age_edges,
    };
    let day_edges = match &a.dur_classes {
        Some(s) => parse_list(s).map_err(|e| Failure::usage("validation", e))?,
        None => d.day_edges,
    };
    let grouping = ClassGrouping::new(age_edges, day_edges)
        .stage("validation")?;
    let report = validate(rates.as_ref(), &cohorts, &grouping, a.level, a.reading).stage("validation")?;
    let dec = report.decision;
    info!(
        "W = {:.4}, df = {}, threshold {:.4}: {}",
        dec.statistic,
        dec.df,
        dec.threshold,
        if dec.accept { "accept" } else { "reject" }
    );
    write_bytes(&a.out, &to_json(&report), "validation")
}

fn reserve(a: ReserveArgs) -> Result<(), Failure> {
    let rates = load_rates(&a.surface, "reserve")?;
    let cfg = ReserveConfig { horizon_months: a.horizon_months, radix: a.radix, ..ReserveConfig::default() };
    let ages: Vec<i32> = a.ages.points().iter().map(|&x| x.round() as i32).collect();
    if let Some(path) = &a.out_maintenance {
        let table = maintenance_table(rates.as_ref(), &ages, &cfg).stage("maintenance")?;
        write_bytes(path, &render("maintenance", |b| write_maintenance_table(&table, b))?, "maintenance")?;
    }
    let table = reserves(rates.as_ref(), &ages, a.mode, a.rate, &cfg).stage("reserve")?;
    write_bytes(&a.out, &render("reserve", |b| write_reserve_table(&table, b))?, "reserve")
}

fn compare(a: CompareArgs) -> Result<(), Failure> {
    let candidate = read_reserve_table(read_bytes(&a.candidate, "compare")?.as_slice()).stage("compare")?;
    let reference = read_reserve_table(read_bytes(&a.reference, "compare")?.as_slice()).stage("compare")?;
    let cmp = compare_tables(&candidate, &reference).stage("compare")?;
    if !cmp.dropped_ages.is_empty() || !cmp.dropped_months.is_empty() {
        warn!("dropped ages {:?}, months {:?} not shared by both tables", cmp.dropped_ages, cmp.dropped_months);
    }
    write_bytes(&a.out, &render("compare", |b| write_reserve_table(&cmp.table, b))?, "compare")
}

/// File configuration with command-line overrides applied.
pub fn effective_config(a: &PipelineArgs) -> Result<PipelineConfig, Failure> {
    let mut c = match &a.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = &a.claims {
        c.claims = Some(p.clone());
    }
    if let Some(p) = &a.reference {
        c.reference = Some(p.clone());
    }
    if let Some(p) = &a.out_dir {
        c.out_dir = p.clone();
    }
    if let Some(s) = a.seed {
        c.synthetic.seed = s;
    }
    if let Some(v) = a.alpha {
        c.fit.alpha = v;
    }
    if let Some(v) = a.rate {
        c.reserve.rate = v;
    }
    if let Some(m) = a.mode {
        c.reserve.mode = m;
    }
    if let Some(v) = a.level {
        c.validation.level = v;
    }
    Ok(c)
}

fn pipeline(a: PipelineArgs) -> Result<(), Failure> {
    let config = effective_config(&a)?;
    if a.print_config {
        print!("{}", config.to_toml());
        return Ok(());
    }
    match run_pipeline(&config) {
        Ok(m) => {
            info!("pipeline complete: {} outputs in {}", m.outputs.len(), config.out_dir.display());
            Ok(())
        }
        Err(f) => {
            if f.manifest.is_some() {
                warn!("partial manifest written to {}", config.out_dir.join(crate::pipeline::MANIFEST).display());
            }
            Err(f.failure)
        }
    }
}

fn export(a: ExportArgs) -> Result<(), Failure> {
    let samples = match (&a.surface, &a.table) {
        (Some(path), _) => sample_rates(load_rates(path, "export")?.as_ref(), &a.ages, &a.durations),
        (None, Some(path)) => {
            let table = read_reserve_table(read_bytes(path, "export")?.as_slice()).stage("export")?;
            if table.ages.is_empty() || table.months.is_empty() {
                return Err(Failure::new(FailureKind::Data, "export", anyhow::anyhow!("table {} is empty", path.display())));
            }
            sample_table(&table, &a.ages, &a.durations)
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    let flagged = samples.iter().filter(|s| s.extrapolated).count();
    if flagged > 0 {
        warn!("{flagged} of {} samples lie outside the source's domain", samples.len());
    }
    write_bytes(&a.out, &render("export", |b| write_grid(&samples, b))?, "export")
}

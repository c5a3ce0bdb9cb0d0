use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClaimRecord, IngestError};
use crate::rates::DailyRates;

/// Simple parametric daily exit-rate models for simulation.
///
/// Textual forms (used by the `synth` command):
/// - `const:<rate>`
/// - `decay:base=<b>,amp=<a>,scale=<days>[,slope=<g>][,ref=<age>]`, i.e.
///   `q(x, t) = (b + a * exp(-(t - 1) / scale)) * (1 + g * (x - ref))`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParametricHazard {
    Constant {
        rate: f64,
    },
    Decay {
        base: f64,
        amplitude: f64,
        scale_days: f64,
        age_slope: f64,
        reference_age: f64,
    },
}

impl DailyRates for ParametricHazard {
    fn daily_rate(&self, age: f64, day: f64) -> f64 {
        match *self {
            ParametricHazard::Constant { rate } => rate,
            ParametricHazard::Decay {
                base,
                amplitude,
                scale_days,
                age_slope,
                reference_age,
            } => (base + amplitude * (-(day - 1.0) / scale_days).exp()) * (1.0 + age_slope * (age - reference_age)),
        }
    }
}

impl FromStr for ParametricHazard {
    type Err = IngestError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let bad = |reason: &str| IngestError::InvalidModelSpec {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        let (kind, args) = spec.split_once(':').ok_or_else(|| bad("expected `<kind>:<parameters>`"))?;
        match kind.trim() {
            "const" => {
                let rate: f64 = args.trim().parse().map_err(|_| bad("rate is not a number"))?;
                Ok(ParametricHazard::Constant { rate })
            }
            "decay" => {
                let (mut base, mut amp, mut scale) = (None, None, None);
                let (mut slope, mut reference) = (0.0, 40.0);
                for kv in args.split(',') {
                    let (k, v) = kv.split_once('=').ok_or_else(|| bad("expected key=value"))?;
                    let v: f64 = v.trim().parse().map_err(|_| bad("parameter is not a number"))?;
                    match k.trim() {
                        "base" => base = Some(v),
                        "amp" => amp = Some(v),
                        "scale" => scale = Some(v),
                        "slope" => slope = v,
                        "ref" => reference = v,
                        other => return Err(bad(&format!("unknown parameter `{other}`"))),
                    }
                }
                let scale = scale.ok_or_else(|| bad("missing scale"))?;
                if scale <= 0.0 {
                    return Err(bad("scale must be positive"));
                }
                Ok(ParametricHazard::Decay {
                    base: base.ok_or_else(|| bad("missing base"))?,
                    amplitude: amp.ok_or_else(|| bad("missing amp"))?,
                    scale_days: scale,
                    age_slope: slope,
                    reference_age: reference,
                })
            }
            _ => Err(bad("unknown model kind")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDesign {
    /// (entry age, number of claims) pairs, emitted in this order.
    pub cohorts: Vec<(i32, usize)>,
    /// Probability that a claim is exposed to a uniform random censoring day.
    pub censoring_rate: f64,
    pub horizon: u32,
    pub seed: u64,
}

impl SyntheticDesign {
    /// `total` claims spread evenly over `age_min..=age_max`; earlier ages
    /// take the remainder.
    pub fn even(age_min: i32, age_max: i32, total: usize, censoring_rate: f64, horizon: u32, seed: u64) -> Self {
        let n_ages = (age_max - age_min + 1).max(0) as usize;
        let cohorts = (0..n_ages)
            .map(|i| {
                let share = total / n_ages + usize::from(i < total % n_ages);
                (age_min + i as i32, share)
            })
            .collect();
        Self {
            cohorts,
            censoring_rate,
            horizon,
            seed,
        }
    }
}

/// Simulates right-censored claim durations from a daily exit-rate model.
///
/// Exit days are drawn by inverting the discrete survival function; claims
/// selected for random censoring get a uniform censoring day on
/// `1..=horizon`, and a claim whose exit falls on its censoring day is
/// recorded as an exit. Claims still open at the horizon are censored there.
pub fn generate_synthetic<R: DailyRates + ?Sized>(
    hazard: &R,
    design: &SyntheticDesign,
) -> Result<Vec<ClaimRecord>, IngestError> {
    if design.horizon == 0 {
        return Err(IngestError::InvalidDesign("horizon must be positive".into()));
    }
    if !(0.0..=1.0).contains(&design.censoring_rate) {
        return Err(IngestError::InvalidDesign("censoring rate must lie in [0, 1]".into()));
    }
    let h = design.horizon as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let total: usize = design.cohorts.iter().map(|c| c.1).sum();
    let mut out = Vec::with_capacity(total);
    let mut survival = vec![0.0; h];

    for &(age, count) in &design.cohorts {
        let mut s = 1.0;
        for (t, slot) in survival.iter_mut().enumerate() {
            let day = t as u32 + 1;
            let q = hazard.daily_rate(age as f64, day as f64);
            if !q.is_finite() || !(0.0..=1.0).contains(&q) {
                return Err(IngestError::InvalidHazard { age, day, value: q });
            }
            s *= 1.0 - q;
            *slot = s;
        }
        for _ in 0..count {
            // v is uniform on (0, 1]; exit on the first day with S(t) < v.
            let v = 1.0 - rng.random::<f64>();
            let exit_idx = survival.partition_point(|&s| s >= v);
            let exit_day = (exit_idx < h).then_some(exit_idx as u32 + 1);
            let censor_day = if rng.random_bool(design.censoring_rate) {
                Some(rng.random_range(1..=design.horizon))
            } else {
                None
            };
            let record = match (exit_day, censor_day) {
                (Some(e), Some(c)) if c < e => (c, true),
                (Some(e), _) => (e, false),
                (None, Some(c)) => (c, true),
                (None, None) => (design.horizon, true),
            };
            out.push(ClaimRecord {
                entry_age: age,
                duration_days: record.0,
                censored: record.1,
            });
        }
    }
    Ok(out)
}

use super::{raw_domain, FitError};
use crate::spline::KnotGrid;
use crate::survival::RawRateSurface;

/// Minimum distance in grid steps between two knot lines, and between a
/// line and the domain boundary.
const MIN_SPACING: usize = 3;

/// Weighted squared second differences aggregated per duration column and
/// per age row. Differences touching a masked cell are skipped.
pub fn curvature_energy(raw: &RawRateSurface) -> (Vec<f64>, Vec<f64>) {
    let (na, nd) = (raw.n_ages, raw.n_days);
    let at = |a: usize, d: usize| a * nd + d;
    let mut by_day = vec![0.0; nd];
    let mut by_age = vec![0.0; na];
    for a in 0..na {
        for d in 1..nd.saturating_sub(1) {
            let (i0, i1, i2) = (at(a, d - 1), at(a, d), at(a, d + 1));
            if raw.masked[i0] || raw.masked[i1] || raw.masked[i2] {
                continue;
            }
            let s = raw.q[i0] - 2.0 * raw.q[i1] + raw.q[i2];
            by_day[d] += raw.weight[i1] * s * s;
        }
    }
    for d in 0..nd {
        for a in 1..na.saturating_sub(1) {
            let (i0, i1, i2) = (at(a - 1, d), at(a, d), at(a + 1, d));
            if raw.masked[i0] || raw.masked[i1] || raw.masked[i2] {
                continue;
            }
            let s = raw.q[i0] - 2.0 * raw.q[i1] + raw.q[i2];
            by_age[a] += raw.weight[i1] * s * s;
        }
    }
    (by_day, by_age)
}

/// Places `h` horizontal (age) and `v` vertical (duration) knot lines at the
/// rows and columns with the largest curvature energy, keeping lines at
/// least three grid steps apart. Ties are broken towards positions splitting
/// the exposure into equal quantiles, then towards the lower index.
pub fn auto_knots(raw: &RawRateSurface, h: usize, v: usize) -> Result<KnotGrid<f64>, FitError> {
    let domain = raw_domain(raw)?;
    let (by_day, by_age) = curvature_energy(raw);
    let (na, nd) = (raw.n_ages, raw.n_days);
    let mut day_mass = vec![0.0; nd];
    let mut age_mass = vec![0.0; na];
    for i in 0..raw.len() {
        day_mass[i % nd] += raw.weight[i];
        age_mass[i / nd] += raw.weight[i];
    }
    let t_idx = place(&by_day, &day_mass, v).map_err(|e| FitError::Knots(format!("duration axis: {e}")))?;
    let x_idx = place(&by_age, &age_mass, h).map_err(|e| FitError::Knots(format!("age axis: {e}")))?;
    let t_knots = t_idx.iter().map(|&j| (raw.day_min as usize + j) as f64).collect();
    let x_knots = x_idx.iter().map(|&a| (raw.age_min as i64 + a as i64) as f64).collect();
    Ok(KnotGrid::new(domain, t_knots, x_knots)?)
}

fn place(energy: &[f64], mass: &[f64], budget: usize) -> Result<Vec<usize>, String> {
    if budget == 0 {
        return Ok(Vec::new());
    }
    let n = energy.len();
    if n < 2 * MIN_SPACING + 1 {
        return Err(format!("{n} grid positions leave no room for interior knots"));
    }
    let lo = MIN_SPACING;
    let hi = n - 1 - MIN_SPACING;
    let capacity = (hi - lo) / MIN_SPACING + 1;
    if budget > capacity {
        return Err(format!(
            "budget {budget} exceeds the {capacity} positions available at spacing {MIN_SPACING}"
        ));
    }
    let targets = quantile_targets(mass, budget);
    let dist = |j: usize| targets.iter().map(|&t| t.abs_diff(j)).min().unwrap_or(0);
    let mut candidates: Vec<usize> = (lo..=hi).collect();
    candidates.sort_by(|&a, &b| {
        energy[b]
            .partial_cmp(&energy[a])
            .expect("finite curvature")
            .then(dist(a).cmp(&dist(b)))
            .then(a.cmp(&b))
    });
    let mut chosen: Vec<usize> = Vec::with_capacity(budget);
    for j in candidates {
        if chosen.iter().all(|&c| c.abs_diff(j) >= MIN_SPACING) {
            chosen.push(j);
            if chosen.len() == budget {
                break;
            }
        }
    }
    if chosen.len() < budget {
        return Err(format!("only {} of {budget} knots could be placed at spacing {MIN_SPACING}", chosen.len()));
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Positions splitting the marginal mass into `budget + 1` equal parts.
fn quantile_targets(mass: &[f64], budget: usize) -> Vec<usize> {
    let total: f64 = mass.iter().sum();
    let n = mass.len();
    (1..=budget)
        .map(|k| {
            let p = k as f64 / (budget + 1) as f64;
            if total <= 0.0 {
                return ((n - 1) as f64 * p).round() as usize;
            }
            let mut acc = 0.0;
            for (j, m) in mass.iter().enumerate() {
                acc += m;
                if acc >= p * total * (1.0 - 1e-12) {
                    return j;
                }
            }
            n - 1
        })
        .collect()
}

#![allow(clippy::needless_range_loop)]

use maintien::fitting::{FitConfig, KnotSpec};
use maintien::ingest::ParametricHazard;
use maintien::quadrature::adaptive_simpson;
use maintien::reserving::{
    compare_tables, convergence_order, expectancy_from_survival, fit_expectancy_pipeline, invert_expectancy,
    maintenance_table, reserve_continuous, reserve_discrete, reserve_refined_discrete, reserve_table, residual_expectancy,
    ExpectancyConfig, MaintenanceTable, ReserveConfig, ReserveError, ReserveTable, TailClosure,
};
use maintien::survival::RawRateSurface;
use proptest::prelude::*;

fn hazard() -> ParametricHazard {
    ParametricHazard::Decay { base: 0.002, amplitude: 0.02, scale_days: 120.0, age_slope: -0.01, reference_age: 42.5 }
}

fn ages() -> Vec<i32> {
    (25..=60).collect()
}

/// Neumaier-compensated sum.
fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in terms {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

#[test]
fn last_month_pays_once() {
    let t = maintenance_table(&hazard(), &ages(), &ReserveConfig::default()).unwrap();
    for &x in &ages() {
        for i in [0.0, 0.01, 0.03, 0.05] {
            assert_eq!(reserve_discrete(&t, i, x, 36).unwrap(), 1.0);
        }
    }
}

#[test]
fn flat_table_counts_payments() {
    let t = maintenance_table(&|_: f64, _: f64| 0.0, &[40], &ReserveConfig::default()).unwrap();
    for y in 0..=36 {
        assert_eq!(reserve_discrete(&t, 0.0, 40, y).unwrap(), (37 - y) as f64);
    }
}

#[test]
fn discounting_lowers_reserves() {
    let t = maintenance_table(&hazard(), &ages(), &ReserveConfig::default()).unwrap();
    let rates = [0.0, 0.01, 0.03, 0.05];
    let tables: Vec<ReserveTable> = rates.iter().map(|&i| reserve_table(&t, i).unwrap()).collect();
    for w in tables.windows(2) {
        for (a, b) in w[0].values.iter().flatten().zip(w[1].values.iter().flatten()) {
            assert!(a >= b, "{a} < {b}");
        }
    }
    for (y, v) in tables[0].values[0].iter().enumerate() {
        assert!(*v >= 1.0 && *v <= (37 - y) as f64);
    }
}

#[test]
fn geometric_table_matches_high_precision_sum() {
    let cfg = ReserveConfig::default();
    let row: Vec<f64> = (0..=36).map(|m| 10000.0 * 0.99f64.powi(m)).collect();
    let table = MaintenanceTable { ages: vec![40], config: cfg, survivors: vec![row], clamp_count: 0, extrapolated_days: 0 };
    let pm = reserve_discrete(&table, 0.03, 40, 0).unwrap();
    let v = 1.03f64.powf(-1.0 / 12.0);
    let direct = compensated_sum((0..=36).map(|k| 0.99f64.powi(k) * (-(k as f64) / 12.0 * 1.03f64.ln()).exp()));
    let closed = (1.0 - (0.99 * v).powi(37)) / (1.0 - 0.99 * v);
    assert!((pm - direct).abs() < 1e-13 * direct, "{pm} vs {direct}");
    assert!((pm - closed).abs() < 1e-13 * closed, "{pm} vs {closed}");
}

#[test]
fn survivors_match_daily_products() {
    let cfg = ReserveConfig::default();
    let t = maintenance_table(&hazard(), &[25, 33, 47, 60], &cfg).unwrap();
    assert_eq!(cfg.day_of_month(1), 30);
    assert_eq!(cfg.day_of_month(12), 365);
    for (row, &x) in t.survivors.iter().zip(&t.ages) {
        let mut s = 1.0;
        let mut day = 0;
        for m in 0..=36u32 {
            let target = (m as f64 * 365.25 / 12.0).round() as u32;
            while day < target {
                day += 1;
                s *= 1.0 - hazard().daily_rate(x as f64, day as f64);
            }
            let want = 10000.0 * s;
            assert!((row[m as usize] - want).abs() < 1e-10 * want, "age {x} month {m}");
            if m > 0 {
                assert!(row[m as usize] <= row[m as usize - 1]);
            }
        }
        assert_eq!(row[0], 10000.0);
    }
}

use maintien::rates::DailyRates;

#[test]
fn continuous_is_the_limit_of_refined_sums() {
    let cfg = ReserveConfig::default();
    for (x, y, i) in [(40.0, 0.0, 0.03), (37.3, 2.5, 0.01), (55.0, 12.0, 0.05), (28.9, 30.0, 0.0)] {
        let exact = reserve_continuous(&hazard(), i, x, y, &cfg).unwrap();
        assert!(exact.error_estimate < 1e-8);
        let seq: Vec<f64> = (1..=15)
            .map(|k| reserve_refined_discrete(&hazard(), i, x, y, 0.5f64.powi(k), &cfg).unwrap())
            .collect();
        for p in convergence_order(&seq, exact.value) {
            assert!(p >= 0.95, "({x}, {y}, {i}): order {p}");
        }
        let last = *seq.last().unwrap();
        assert!((last - exact.value).abs() < 1e-4, "({x}, {y}, {i}): {last} vs {}", exact.value);
    }
}

#[test]
fn constant_force_closed_form() {
    let cfg = ReserveConfig::default();
    let (c, i) = (0.0015, 0.04);
    let mu = -(1.0f64 - c).ln() * cfg.days_per_month;
    let r = (1.0f64 + i).ln() / 12.0;
    for y in [0.0, 7.25, 20.0] {
        let span = 36.0 - y;
        let want = (1.0 - (-(mu + r) * span).exp()) / (mu + r);
        let got = reserve_continuous(&|_: f64, _: f64| c, i, 41.5, y, &cfg).unwrap().value;
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
    let got = reserve_continuous(&|_: f64, _: f64| 0.0, 0.0, 41.5, 0.0, &cfg).unwrap().value;
    assert!((got - 36.0).abs() < 1e-10);
}

/// Integrating the month-step survival and discount, piece by piece over
/// the payment months, gives back the discrete sum.
#[test]
fn step_survival_integral_reproduces_discrete() {
    let cfg = ReserveConfig::default();
    let t = maintenance_table(&hazard(), &[30, 50], &cfg).unwrap();
    for (row, &x) in t.survivors.iter().zip(&t.ages) {
        for i in [0.0, 0.03] {
            let v = (1.0f64 + i).powf(-1.0 / 12.0);
            for y in [0u32, 5, 35, 36] {
                let total: f64 = (0..=36 - y)
                    .map(|k| {
                        let level = row[(y + k) as usize] / row[y as usize] * v.powi(k as i32);
                        let piece = k as f64;
                        adaptive_simpson(|_| level, piece, piece + 1.0, 1e-12, 20).unwrap().value
                    })
                    .sum();
                let pm = reserve_discrete(&t, i, x, y).unwrap();
                assert!((total - pm).abs() < 1e-10 * pm, "{total} vs {pm}");
            }
        }
    }
}

#[test]
fn zero_rate_expectancy_bridge() {
    let cfg = ReserveConfig::default();
    let t = maintenance_table(&hazard(), &ages(), &cfg).unwrap();
    for (row, &x) in t.survivors.iter().zip(&t.ages) {
        let s: Vec<f64> = row.iter().map(|l| l / cfg.radix).collect();
        let e = expectancy_from_survival(&s).unwrap();
        for y in 0..=36u32 {
            let pm = reserve_discrete(&t, 0.0, x, y).unwrap();
            assert!((e[y as usize] - (pm - 1.0)).abs() < 1e-12 * pm, "age {x} month {y}");
        }
    }
}

#[test]
fn radix_only_scales_the_table() {
    let base = ReserveConfig::default();
    let unit = ReserveConfig { radix: 1.0, ..base };
    let a = maintenance_table(&hazard(), &ages(), &base).unwrap();
    let b = maintenance_table(&hazard(), &ages(), &unit).unwrap();
    for (ra, rb) in a.survivors.iter().zip(&b.survivors) {
        for (la, lb) in ra.iter().zip(rb) {
            assert!((la / base.radix - lb).abs() <= 2.0 * f64::EPSILON * lb);
        }
    }
    let (pa, pb) = (reserve_table(&a, 0.03).unwrap(), reserve_table(&b, 0.03).unwrap());
    for (x, y) in pa.values.iter().flatten().zip(pb.values.iter().flatten()) {
        assert!((x - y).abs() < 1e-13 * x);
    }
}

#[test]
fn table_comparison_examples() {
    let t = maintenance_table(&hazard(), &[30, 40], &ReserveConfig::default()).unwrap();
    let cand = reserve_table(&t, 0.03).unwrap();
    let same = compare_tables(&cand, &cand).unwrap();
    assert!(same.table.values.iter().flatten().all(|&v| v == 0.0));
    assert!(same.dropped_ages.is_empty() && same.dropped_months.is_empty());

    let scaled = ReserveTable { values: cand.values.iter().map(|r| r.iter().map(|v| v * 1.07).collect()).collect(), ..cand.clone() };
    let c = compare_tables(&cand, &scaled).unwrap();
    assert!(c.table.values.iter().flatten().all(|v| (v - 0.07).abs() < 1e-14));

    let other = ReserveTable { ages: vec![70], months: vec![0], values: vec![vec![1.0]] };
    assert_eq!(compare_tables(&cand, &other), Err(ReserveError::NoOverlap));
}

fn constant_raw(c: f64, n_ages: usize, n_days: usize) -> RawRateSurface {
    let len = n_ages * n_days;
    RawRateSurface::from_weighted(30, n_ages, 1, n_days, vec![c; len], vec![100.0; len]).unwrap()
}

#[test]
fn residual_expectancy_matches_survival_route() {
    let raw = constant_raw(0.01, 3, 50);
    let e = residual_expectancy(&raw, TailClosure::Truncate).unwrap();
    let s: Vec<f64> = (0..=50).map(|t| 0.99f64.powi(t)).collect();
    let want = expectancy_from_survival(&s).unwrap();
    assert_eq!(e.day_min, 0);
    for a in 0..3 {
        for t in 0..=50 {
            assert!((e.values[a * 51 + t] - want[t]).abs() < 1e-12);
        }
    }
    let geometric = residual_expectancy(&raw, TailClosure::default()).unwrap();
    assert!(geometric.values.iter().all(|v| (v - 99.0).abs() < 1e-9));
}

#[test]
fn constant_hazard_round_trip() {
    let c = 0.003;
    let raw = constant_raw(c, 10, 200);
    let cfg = ExpectancyConfig {
        fit: FitConfig { knots: KnotSpec::Fixed { t_knots: vec![60.0, 120.0], x_knots: vec![34.5] }, ..FitConfig::default() },
        ..ExpectancyConfig::default()
    };
    let out = fit_expectancy_pipeline(&raw, &cfg).unwrap();
    assert_eq!(out.clamp_count, 0);
    for v in &out.rates.values {
        assert!((v - c).abs() < 1e-6, "{v}");
    }
}

/// A cubic expectancy in `t` is reproduced exactly by an unpenalized cubic
/// fit, so the recovered rates are the exact inversion. The coefficients make
/// `e(T - 1) = e(T)`, which is what a one-day geometric tail closure returns.
#[test]
fn interpolable_expectancy_is_inverted_exactly() {
    let (n_ages, n_days) = (4usize, 40usize);
    let e_of = |t: usize| {
        let s = (n_days - t) as f64;
        2.0 - 0.00505 * s + 0.005 * s * s + 0.00005 * s * s * s
    };
    let e_exact: Vec<f64> = (0..=n_days).map(e_of).collect();
    let q_row = invert_expectancy(&e_exact);
    assert!(q_row.iter().all(|q| (0.0..=1.0).contains(q)));
    let q: Vec<f64> = (0..n_ages).flat_map(|_| q_row.clone()).collect();
    let raw = RawRateSurface::from_weighted(30, n_ages, 1, n_days, q, vec![10.0; n_ages * n_days]).unwrap();
    let tail = TailClosure::Geometric { window: 1 };
    let e = residual_expectancy(&raw, tail).unwrap();
    for (got, want) in e.values[..=n_days].iter().zip(&e_exact) {
        assert!((got - want).abs() < 1e-12 * want);
    }
    let cfg = ExpectancyConfig {
        fit: FitConfig {
            alpha: 1.0,
            knots: KnotSpec::Fixed { t_knots: vec![20.5], x_knots: vec![] },
            ..FitConfig::default()
        },
        tail,
    };
    let out = fit_expectancy_pipeline(&raw, &cfg).unwrap();
    for a in 0..n_ages {
        for t in 0..n_days {
            let got = out.rates.values[a * n_days + t];
            assert!((got - q_row[t]).abs() < 1e-9, "day {}: {got} vs {}", t + 1, q_row[t]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reserve_bounds_and_monotonicity(base in 0.0f64..0.01, amp in 0.0f64..0.05, scale in 10.0f64..400.0,
                                       i1 in 0.0f64..0.1, di in 0.0f64..0.1, y in 0u32..=36) {
        let h = ParametricHazard::Decay { base, amplitude: amp, scale_days: scale, age_slope: 0.0, reference_age: 40.0 };
        let t = maintenance_table(&h, &[40], &ReserveConfig::default()).unwrap();
        let (a, b) = (reserve_discrete(&t, i1, 40, y).unwrap(), reserve_discrete(&t, i1 + di, 40, y).unwrap());
        prop_assert!(a >= b);
        prop_assert!(b >= 1.0 && a <= (37 - y) as f64 + 1e-12);
    }

    #[test]
    fn expectancy_inversion_round_trip(q in prop::collection::vec(0.0f64..0.5, 2..60)) {
        let mut s = vec![1.0];
        for v in &q {
            s.push(s.last().unwrap() * (1.0 - v));
        }
        let e = expectancy_from_survival(&s).unwrap();
        for (a, b) in invert_expectancy(&e).iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

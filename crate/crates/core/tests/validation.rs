use maintien::fitting::{fit_surface, FitConfig, KnotSpec};
use maintien::ingest::{build_cohorts, generate_synthetic, ParametricHazard, SyntheticDesign};
use maintien::rates::Clamped;
use maintien::survival::{exit_rates, Weighting};
use maintien::validation::{
    chi_square_quantile, chi_square_stat, chi_square_test, expected_exits, merge_sparse, validate, ClassGrouping, Reading,
    ValidationError, MIN_EXPECTED,
};
use proptest::prelude::*;

/// `Gamma(df / 2)` from the integer and half-integer recursions.
fn half_gamma(df: usize) -> f64 {
    let (mut g, mut a) = if df.is_multiple_of(2) { (1.0, 1.0) } else { (std::f64::consts::PI.sqrt(), 0.5) };
    while a < df as f64 / 2.0 {
        g *= a;
        a += 1.0;
    }
    g
}

/// Chi-square CDF from the lower incomplete gamma series.
fn chi2_cdf(df: usize, x: f64) -> f64 {
    let (a, y) = (df as f64 / 2.0, x / 2.0);
    let (mut term, mut sum, mut n) = (1.0 / a, 1.0 / a, 0.0);
    while term > sum * 1e-17 {
        n += 1.0;
        term *= y / (a + n);
        sum += term;
    }
    sum * (-y).exp() * y.powf(a) / half_gamma(df)
}

fn chi2_pdf(df: usize, x: f64) -> f64 {
    let a = df as f64 / 2.0;
    (x / 2.0).powf(a - 1.0) * (-x / 2.0).exp() / (2.0 * half_gamma(df))
}

/// Wilson-Hilferty start refined by Newton steps on the series CDF.
fn chi2_quantile_oracle(df: usize, level: f64) -> f64 {
    let z = normal_quantile(level);
    let k = df as f64;
    let mut x = k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3);
    x = x.max(1e-3);
    for _ in 0..100 {
        let step = (chi2_cdf(df, x) - level) / chi2_pdf(df, x);
        x = (x - step).max(x / 10.0);
        if step.abs() < 1e-14 * x {
            break;
        }
    }
    x
}

/// Standard normal quantile by bisection on the error-function series.
fn normal_quantile(p: f64) -> f64 {
    let cdf = |z: f64| {
        // Maclaurin series of erf; only moderate z are needed here.
        let x = z / std::f64::consts::SQRT_2;
        let (mut term, mut sum, mut n) = (x, x, 0.0);
        while term.abs() > 1e-17 * sum.abs().max(1e-300) {
            n += 1.0;
            term *= -x * x / n;
            sum += term / (2.0 * n + 1.0);
        }
        0.5 * (1.0 + 2.0 / std::f64::consts::PI.sqrt() * sum)
    };
    let (mut lo, mut hi) = (-6.0, 6.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn quantile_matches_series_oracle() {
    for df in 1..=60 {
        for level in [0.5, 0.9, 0.95, 0.99] {
            let got = chi_square_quantile(df, level).unwrap();
            let want = chi2_quantile_oracle(df, level);
            assert!((got - want).abs() < 1e-6 * want, "df {df} level {level}: {got} vs {want}");
        }
    }
    let t24 = chi_square_quantile(24, 0.95).unwrap();
    assert!((t24 - 36.415).abs() < 1e-3, "{t24}");
}

#[test]
fn statistic_examples() {
    assert!((chi_square_stat(&[4.0, 9.0], &[5.0, 8.0]).unwrap() - 0.325).abs() < 1e-15);
    assert_eq!(chi_square_stat(&[2.0, 3.0, 5.0], &[2.0, 3.0, 5.0]).unwrap(), 0.0);
    assert!(chi_square_stat(&[1.0], &[0.0]).is_err());
    assert!(chi_square_stat(&[1.0, 2.0], &[1.0]).is_err());
}

#[test]
fn decision_rule() {
    let accept = chi_square_test(0.0, 15, 9, 0.95).unwrap();
    assert!(accept.accept && accept.df == 22);
    let reject = chi_square_test(50.0, 15, 9, 0.95).unwrap();
    assert!(!reject.accept);
    assert!((reject.margin - (reject.threshold - 50.0)).abs() < 1e-12);
    assert!(matches!(chi_square_test(1.0, 1, 1, 0.95), Err(ValidationError::NonPositiveDf(0))));
    assert!(matches!(chi_square_test(1.0, 3, 3, 1.0), Err(ValidationError::Level(_))));
}

#[test]
fn zero_rates_give_zero_expected() {
    let recs: Vec<_> = (0..50)
        .map(|i| maintien::ingest::ClaimRecord { entry_age: 30 + i % 5, duration_days: 1 + i as u32 % 20, censored: false })
        .collect();
    let cohort = build_cohorts(&recs, 20);
    let g = ClassGrouping::new(vec![30, 35], vec![1, 21]).unwrap();
    let cells = expected_exits(&|_: f64, _: f64| 0.0, &cohort, &g).unwrap();
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0].expected, 0.0);
    assert_eq!(cells[0].observed, 50.0);
}

#[test]
fn empty_class_is_reported() {
    let recs = vec![maintien::ingest::ClaimRecord { entry_age: 30, duration_days: 3, censored: false }];
    let cohort = build_cohorts(&recs, 10);
    let g = ClassGrouping::new(vec![30, 31, 32], vec![1, 11]).unwrap();
    assert!(matches!(
        expected_exits(&|_: f64, _: f64| 0.1, &cohort, &g),
        Err(ValidationError::EmptyExposure { age_class: 1, .. })
    ));
}

fn truth() -> ParametricHazard {
    ParametricHazard::Decay { base: 0.002, amplitude: 0.02, scale_days: 120.0, age_slope: -0.01, reference_age: 42.5 }
}

#[test]
fn expected_tracks_observed_under_the_true_rates() {
    let recs = generate_synthetic(&truth(), &SyntheticDesign::even(25, 60, 200_000, 0.3, 1095, 9)).unwrap();
    let cohort = build_cohorts(&recs, 1095);
    let cells = expected_exits(&truth(), &cohort, &ClassGrouping::default()).unwrap();
    for c in cells.iter().filter(|c| c.expected > 20.0) {
        // Variance of the observed count is sum n q (1 - q) <= expected.
        assert!((c.observed - c.expected).abs() < 4.5 * c.expected.sqrt(), "{c:?}");
    }
    let (o, e): (f64, f64) = cells.iter().fold((0.0, 0.0), |(o, e), c| (o + c.observed, e + c.expected));
    assert!((o - e).abs() < 3.0 * e.sqrt(), "{o} vs {e}");
}

/// Simulating from a fitted surface and testing that same surface should
/// accept at roughly the nominal level.
#[test]
fn calibrated_on_data_from_the_fitted_surface() {
    let recs = generate_synthetic(&truth(), &SyntheticDesign::even(25, 60, 200_000, 0.3, 1095, 0)).unwrap();
    let raw = exit_rates(&build_cohorts(&recs, 1095), Weighting::Exposure).unwrap();
    let cfg = FitConfig {
        knots: KnotSpec::Fixed { t_knots: vec![30.0, 90.0, 180.0, 365.0, 730.0], x_knots: vec![42.0] },
        ..FitConfig::default()
    };
    let fitted = fit_surface(&raw, &cfg).unwrap().surface;
    let source = Clamped(fitted.clone());
    let grouping = ClassGrouping::default();
    let accepted = (1..=100u64)
        .filter(|&seed| {
            let recs = generate_synthetic(&source, &SyntheticDesign::even(25, 60, 200_000, 0.3, 1095, seed)).unwrap();
            let report = validate(&fitted, &build_cohorts(&recs, 1095), &grouping, 0.95, Reading::Marginal).unwrap();
            report.decision.accept
        })
        .count();
    eprintln!("calibration: accepted {accepted} of 100");
    assert!(accepted >= 90, "accepted {accepted} of 100");
}

proptest! {
    #[test]
    fn statistic_ignores_relabelling(pairs in prop::collection::vec((0.0f64..50.0, 0.1f64..50.0), 1..30), seed in any::<u64>()) {
        let (obs, exp): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
        let mut idx: Vec<usize> = (0..obs.len()).collect();
        let mut s = seed;
        for i in (1..idx.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            idx.swap(i, (s >> 33) as usize % (i + 1));
        }
        let w = chi_square_stat(&obs, &exp).unwrap();
        let wp = chi_square_stat(&idx.iter().map(|&i| obs[i]).collect::<Vec<_>>(), &idx.iter().map(|&i| exp[i]).collect::<Vec<_>>()).unwrap();
        prop_assert!((w - wp).abs() <= 1e-12 * w.max(1.0));
    }

    #[test]
    fn merging_partitions_and_clears_sparse_classes(exp in prop::collection::vec(0.01f64..20.0, 2..40)) {
        let obs: Vec<f64> = exp.iter().map(|e| e.round()).collect();
        let before = exp.iter().filter(|&&e| e < MIN_EXPECTED).count();
        let total: f64 = exp.iter().sum();
        match merge_sparse(&obs, &exp, |i, j| i.abs_diff(j) == 1) {
            Ok(m) => {
                let mut all: Vec<usize> = m.groups.iter().flatten().copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..exp.len()).collect::<Vec<_>>());
                for g in &m.groups {
                    prop_assert!(g.windows(2).all(|w| w[1] == w[0] + 1), "groups stay contiguous");
                }
                let after = m.expected.iter().filter(|&&e| e < MIN_EXPECTED).count();
                prop_assert!(after <= before);
                prop_assert_eq!(after, 0);
                prop_assert!((m.expected.iter().sum::<f64>() - total).abs() < 1e-9);
                prop_assert!((m.observed.iter().sum::<f64>() - obs.iter().sum::<f64>()).abs() < 1e-9);
            }
            Err(ValidationError::Unmergeable(_)) => prop_assert!(total < MIN_EXPECTED),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}

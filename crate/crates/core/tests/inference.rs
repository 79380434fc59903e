use std::f64::consts::PI;

use gammkit::dataio::Dataset;
use gammkit::engine::{fit, FittedGamm};
use gammkit::formula::{parse_formula, validate_against};
use gammkit::inference::{
    adjusted_r2, aic, compare, evaluate_difference, evaluate_smooth, evaluate_smooth_with,
    summarize, SummaryTable,
};
use gammkit::simlab::{generate, Design, Scenario, Shape};
use gammkit::GammError;

fn sine_data(seed: u64, n: usize) -> Dataset {
    generate(&Scenario {
        name: "sine".into(),
        seed,
        noise_sd: 0.3,
        ar_rho: 0.0,
        curve_k: 8,
        design: Design::Single {
            n_series: 1,
            series_length: n,
            signal: Shape::Sine {
                amplitude: 1.0,
                cycles: 1.0,
            },
        },
    })
    .unwrap()
    .data
}

fn fit_formula(data: &Dataset, formula: &str) -> FittedGamm {
    fit(&validate_against(&parse_formula(formula).unwrap(), data).unwrap(), data).unwrap()
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn smooth_bands_cover_the_centred_truth() {
    let mut covered = 0.0;
    for seed in 0..5 {
        let data = sine_data(seed, 400);
        let model = fit_formula(&data, "y ~ s(x)");
        let x = data.numeric("x").unwrap();
        let (lo, hi) = x.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
        let g = grid(lo, hi, 50);
        let curve = evaluate_smooth(&model, "s(x)", &g).unwrap();
        let shift = x.iter().map(|v| (2.0 * PI * v).sin()).sum::<f64>() / x.len() as f64;
        let (low, up) = (curve.lower(), curve.upper());
        covered += g
            .iter()
            .enumerate()
            .filter(|(i, v)| {
                let truth = (2.0 * PI * *v).sin() - shift;
                low[*i] <= truth && truth <= up[*i]
            })
            .count() as f64
            / g.len() as f64;
    }
    assert!(covered / 5.0 >= 0.85, "mean coverage {}", covered / 5.0);
}

#[test]
fn grids_outside_the_data_are_rejected_unless_allowed() {
    let data = sine_data(1, 200);
    let model = fit_formula(&data, "y ~ s(x)");
    let err = evaluate_smooth(&model, "s(x)", &[-0.5, 0.5]).unwrap_err();
    assert!(matches!(err, GammError::InvalidArgument(_)));
    let ok = evaluate_smooth_with(&model, "s(x)", &[-0.5, 0.5], true).unwrap();
    assert_eq!(ok.fit.len(), 2);
    assert!(evaluate_smooth(&model, "s(nope)", &[0.5]).is_err());
}

fn group_data() -> Dataset {
    generate(&Scenario {
        name: "groups".into(),
        seed: 4,
        noise_sd: 0.5,
        ar_rho: 0.0,
        curve_k: 8,
        design: Design::Groups {
            n_items: 8,
            n_subjects: 4,
            series_length: 15,
            base: Shape::Sine {
                amplitude: 1.0,
                cycles: 1.0,
            },
            group_difference: Shape::Constant { value: 2.0 },
            item_intercept_sd: 0.1,
            item_curve_scale: 0.1,
        },
    })
    .unwrap()
    .data
}

#[test]
fn difference_curves_for_ordered_factors() {
    let data = group_data();
    let model = fit_formula(&data, "y ~ Group + s(Time) + s(Time, by=Group)");
    let g = grid(0.0, 1.0, 20);
    let reference = evaluate_difference(&model, "s(Time,by=Group)", "A", &g, false).unwrap();
    assert!(reference.reference);
    assert!(reference.fit.iter().chain(&reference.se).all(|v| *v == 0.0));
    let diff = evaluate_difference(&model, "s(Time,by=Group)", "B", &g, false).unwrap();
    let mean = diff.fit.iter().sum::<f64>() / diff.fit.len() as f64;
    assert!((mean - 2.0).abs() < 0.3, "mean difference {mean}");
    assert_eq!(diff.zero_containment, Some(diff.zero_coverage()));
    assert!(evaluate_difference(&model, "s(Time)", "B", &g, false).is_err());
}

#[test]
fn summary_round_trips_through_json() {
    let data = sine_data(2, 150);
    let summary = summarize(&fit_formula(&data, "y ~ s(x)"));
    let back: SummaryTable = serde_json::from_str(&summary.to_json()).unwrap();
    assert_eq!(back, summary);
    assert!(summary.to_text().ends_with('\n'));
    assert_eq!(summary.parametric[0].name, "(Intercept)");
    assert_eq!(summary.smooths[0].label, "s(x)");
}

#[test]
fn fit_statistics_of_a_linear_model() {
    let data = sine_data(3, 150);
    let model = fit_formula(&data, "y ~ x");
    let y = data.numeric("y").unwrap();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let tss = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let rss: f64 = model.residuals_raw.iter().map(|r| r * r).sum();
    let r2_adj = 1.0 - (rss / (n - 2.0)) / (tss / (n - 1.0));
    assert!((adjusted_r2(&model) - r2_adj).abs() < 1e-12);
    let s2 = rss / (n - 2.0);
    let loglik: f64 = model
        .residuals_raw
        .iter()
        .map(|r| -0.5 * (2.0 * PI * s2).ln() - r * r / (2.0 * s2))
        .sum();
    assert!((aic(&model) - (-2.0 * loglik + 4.0)).abs() < 1e-8);
}

#[test]
fn comparison_reports_differences_against_the_first_model() {
    let data = sine_data(5, 200);
    let linear = fit_formula(&data, "y ~ x");
    let smooth = fit_formula(&data, "y ~ s(x)");
    let c = compare(&[("linear", &linear), ("smooth", &smooth)]).unwrap();
    assert_eq!(c.rows[0].delta_aic, 0.0);
    assert!(c.rows[1].delta_aic < 0.0);
    assert!(c.rows[1].delta_adjusted_r2 > 0.0);
    assert!(c.notes.is_empty());
    let other = fit_formula(&sine_data(5, 100), "y ~ x");
    assert!(compare(&[("a", &linear), ("b", &other)]).is_err());
}

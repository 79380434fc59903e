use gammkit::dataio::{build_series_index, Column, Dataset, SeriesIndex};
use gammkit::diagnostics::{acf, acf_by_series, persistent_event_filter, rho_sweep, POOLED};
use gammkit::engine::FitOptions;
use gammkit::formula::parse_formula;
use gammkit::simlab::{generate, simulate_ar1, Design, Scenario, Shape};

#[test]
fn pooled_acf_sums_lag_products_across_series() {
    let a = [1.0, 3.0, 2.0, 5.0, 4.0];
    let b = [2.0, -1.0, 0.5, 1.5];
    let mut values = a.to_vec();
    values.extend(b);
    let flags: Vec<bool> = (0..9).map(|i| i == 0 || i == 5).collect();
    let index = SeriesIndex::from_flags(&flags).unwrap();
    let r = acf_by_series(&values, &index, 2).unwrap();
    assert_eq!(r.series.len(), 2);
    assert_eq!(r.pooled.series, POOLED);
    assert_eq!(r.series[0].acf, acf(&a, 2).unwrap().acf);

    let centred = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| v - m).collect::<Vec<_>>()
    };
    let (ca, cb) = (centred(&a), centred(&b));
    let lag = |x: &[f64], k: usize| (k..x.len()).map(|t| x[t] * x[t - k]).sum::<f64>();
    let expected = (lag(&ca, 1) + lag(&cb, 1)) / (lag(&ca, 0) + lag(&cb, 0));
    assert!((r.pooled.acf[1] - expected).abs() < 1e-12);
}

fn mixed_series() -> (Vec<f64>, SeriesIndex) {
    let mut values = simulate_ar1(200, 0.9, 1.0, 1).unwrap();
    for s in 0..4 {
        values.extend(simulate_ar1(200, 0.0, 1.0, 10 + s).unwrap());
    }
    let flags: Vec<bool> = (0..1000).map(|i| i % 200 == 0).collect();
    (values, SeriesIndex::from_flags(&flags).unwrap())
}

#[test]
fn persistent_series_are_dropped() {
    let (values, index) = mixed_series();
    let r = acf_by_series(&values, &index, 10).unwrap();
    assert_eq!(r.most_autocorrelated(1)[0].series, "1");
    let mask = persistent_event_filter(&r, &index);
    assert!(mask[..200].iter().all(|m| !m));
    assert!(mask[200..].iter().all(|m| *m));
}

#[test]
fn csv_lists_every_lag_of_every_series() {
    let (values, index) = mixed_series();
    let r = acf_by_series(&values, &index, 3).unwrap();
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "series,lag,acf,ci,significant");
    assert_eq!(lines.len(), 1 + 6 * 4);
}

#[test]
fn sweep_prefers_the_generating_rho() {
    let data = generate(&Scenario {
        name: "ar".into(),
        seed: 8,
        noise_sd: 0.5,
        ar_rho: 0.6,
        curve_k: 8,
        design: Design::Single {
            n_series: 10,
            series_length: 200,
            signal: Shape::Sine {
                amplitude: 1.0,
                cycles: 1.0,
            },
        },
    })
    .unwrap()
    .data;
    let spec = parse_formula("y ~ s(x)")
        .unwrap()
        .with_ar(0.0, Some("NewTimeSeries".into()))
        .unwrap();
    let report = rho_sweep(&spec, &data, &[0.0, 0.3, 0.6, 0.95], 5, &FitOptions::default()).unwrap();
    assert_eq!(report.n_series, 10);
    assert_eq!(report.candidates.len(), 4);
    assert!(report.failures.is_empty());
    let at = |rho: f64| report.candidates.iter().find(|c| c.rho == rho).unwrap();
    assert!(at(0.6).pooled_lag1.abs() < 0.05);
    let (r, g1, g2) = (0.95, 0.6, 0.36);
    let over = (g1 * (1.0 + r * r) - r * (1.0 + g2)) / (1.0 + r * r - 2.0 * r * g1);
    assert!((at(0.95).pooled_lag1 - over).abs() < 0.05, "{} vs {over}", at(0.95).pooled_lag1);
    assert!(at(0.0).n_significant > at(0.6).n_significant);
    assert_eq!(report.recommended, Some(0.6));
    assert!(rho_sweep(&spec, &data, &[1.5], 5, &FitOptions::default()).is_err());
}

#[test]
fn series_index_comes_from_the_start_column() {
    let data = Dataset::new(vec![
        Column::boolean("start", vec![true, false, false, true, false]),
        Column::numeric("y", vec![1.0, 2.0, 3.0, 4.0, 5.0]),
    ])
    .unwrap();
    let index = build_series_index(&data, "start").unwrap();
    assert_eq!(index.series_lengths(), &[3, 2]);
}

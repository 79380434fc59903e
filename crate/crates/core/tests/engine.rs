use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use gammkit::basis::assemble_design;
use gammkit::dataio::{Column, Dataset, SeriesIndex};
use gammkit::engine::{fit, fit_with, reml_score, whiten, whiten_vector, FitOptions};
use gammkit::formula::{parse_formula, validate_against, BoundSpec};
use gammkit::simlab::rng_for;
use gammkit::GammError;

/// `y = sin(2πa) + (b − ½)² + noise` over uniform `a`, `b`, with a
/// three-level factor `f` and a logical series-start column.
fn surface_data(n: usize, seed: u64) -> Dataset {
    let mut rng = rng_for(seed, 0);
    let a: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let f: Vec<&str> = (0..n).map(|i| ["p", "q", "r"][i % 3]).collect();
    let y = (0..n)
        .map(|i| {
            let e: f64 = rng.sample(StandardNormal);
            (2.0 * std::f64::consts::PI * a[i]).sin() + (b[i] - 0.5).powi(2) + 0.3 * e
        })
        .collect();
    let start = (0..n).map(|i| i % 50 == 0).collect();
    Dataset::new(vec![
        Column::numeric("a", a),
        Column::numeric("b", b),
        Column::factor("f", &f),
        Column::boolean("start", start),
        Column::numeric("y", y),
    ])
    .unwrap()
}

fn bind(formula: &str, data: &Dataset) -> BoundSpec {
    validate_against(&parse_formula(formula).unwrap(), data).unwrap()
}

#[test]
fn refits_are_bitwise_identical() {
    let data = surface_data(300, 1);
    let spec = parse_formula("y ~ f + s(a) + s(b)")
        .unwrap()
        .with_ar(0.4, Some("start".into()))
        .unwrap();
    let bound = validate_against(&spec, &data).unwrap();
    let m1 = fit(&bound, &data).unwrap();
    let m2 = fit(&bound, &data).unwrap();
    assert_eq!(m1.beta, m2.beta);
    assert_eq!(m1.lambdas, m2.lambdas);
    assert_eq!(m1.reml_score.to_bits(), m2.reml_score.to_bits());
}

#[test]
fn zero_rho_leaves_the_system_untouched() {
    let data = surface_data(120, 2);
    let bound = bind("y ~ s(a)", &data);
    let design = assemble_design(&bound, &data).unwrap();
    let y = data.numeric("y").unwrap();
    let index = SeriesIndex::single(y.len());
    let w = whiten(&design.x, y, &index, 0.0).unwrap();
    assert_eq!(w.x, design.x);
    assert_eq!(w.y, y);
}

#[test]
fn whitening_follows_the_ar1_recursion() {
    let v: Vec<f64> = (0..10).map(|i| (i * i) as f64 * 0.1 - 1.0).collect();
    let starts: Vec<bool> = (0..10).map(|i| i == 0 || i == 4).collect();
    let index = SeriesIndex::from_flags(&starts).unwrap();
    let rho = 0.7;
    let out = whiten_vector(&v, &index, rho).unwrap();
    let scale = (1.0 - rho * rho).sqrt();
    for t in 0..10 {
        let expected = if starts[t] {
            v[t]
        } else {
            (v[t] - rho * v[t - 1]) / scale
        };
        assert!((out[t] - expected).abs() < 1e-14, "row {t}");
    }
}

#[test]
fn parametric_model_is_ordinary_least_squares() {
    let data = surface_data(200, 3);
    let model = fit(&bind("y ~ f + a", &data), &data).unwrap();
    let (codes, _) = data.column("f").unwrap().as_factor().unwrap();
    let a = data.numeric("a").unwrap();
    let n = data.n_rows();
    let x = DMatrix::from_fn(n, 4, |i, j| match j {
        0 => 1.0,
        1 => f64::from(u8::from(codes[i] == 1)),
        2 => f64::from(u8::from(codes[i] == 2)),
        _ => a[i],
    });
    let y = DVector::from_column_slice(data.numeric("y").unwrap());
    let xtx = x.transpose() * &x;
    let inv = xtx.clone().try_inverse().unwrap();
    let beta = &inv * x.transpose() * &y;
    let rss = (&y - &x * &beta).norm_squared();
    let sigma2 = rss / (n - 4) as f64;
    assert!((&model.beta - &beta).norm() < 1e-10 * beta.norm());
    assert!((model.sigma2 - sigma2).abs() < 1e-10 * sigma2);
    assert!((&model.v_beta - sigma2 * inv).norm() < 1e-10);
    assert_eq!(model.edf_total, 4.0);
}

#[test]
fn optimum_is_not_beaten_on_a_two_parameter_grid() {
    let data = surface_data(300, 4);
    let bound = bind("y ~ te(a, b, k=4)", &data);
    let model = fit(&bound, &data).unwrap();
    let design = assemble_design(&bound, &data).unwrap();
    let y = data.numeric("y").unwrap();
    let system = whiten(&design.x, y, &SeriesIndex::single(y.len()), 0.0).unwrap();
    for i in -3..=6 {
        for j in -3..=6 {
            let l = [10f64.powi(i), 10f64.powi(j)];
            let s = reml_score(&system, &design, &l).unwrap();
            assert!(model.reml_score <= s + 1e-6, "grid point {l:?} beats the optimum");
        }
    }
}

#[test]
fn edf_lies_between_null_space_and_width() {
    let data = surface_data(300, 5);
    let model = fit(&bind("y ~ f + s(a) + s(b)", &data), &data).unwrap();
    for block in &model.design.blocks {
        let edf = model.edf_of(&block.label).unwrap();
        assert!(edf >= block.null_space_dim as f64 - 1e-8, "{}", block.label);
        assert!(edf <= block.width() as f64 + 1e-8, "{}", block.label);
    }
    let sum: f64 = model.edf_per_term.iter().map(|t| t.edf).sum();
    assert!((sum - model.edf_total).abs() < 1e-9);
}

#[test]
fn slot_limit_is_enforced() {
    let data = surface_data(200, 6);
    let bound = bind("y ~ te(a, b, k=4)", &data);
    let err = fit_with(
        &bound,
        &data,
        &FitOptions {
            max_slots: 1,
            ..FitOptions::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, GammError::InvalidArgument(_)));
}

#[test]
fn fitted_values_add_up() {
    let data = surface_data(200, 7);
    let model = fit(&bind("y ~ s(a) + s(b)", &data), &data).unwrap();
    let fitted = &model.design.x * &model.beta;
    for i in 0..model.n() {
        assert!((fitted[i] - model.fitted[i]).abs() < 1e-12);
        assert!((model.response[i] - model.fitted[i] - model.residuals_raw[i]).abs() < 1e-12);
    }
}

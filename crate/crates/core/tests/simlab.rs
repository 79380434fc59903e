use gammkit::dataio::read_csv;
use gammkit::diagnostics::acf;
use gammkit::simlab::{generate, simulate_ar1, Design, Scenario, Shape};

fn groups(seed: u64) -> Scenario {
    Scenario {
        name: "groups".into(),
        seed,
        noise_sd: 0.5,
        ar_rho: 0.3,
        curve_k: 6,
        design: Design::Groups {
            n_items: 6,
            n_subjects: 3,
            series_length: 10,
            base: Shape::Linear { slope: 1.0 },
            group_difference: Shape::Zero,
            item_intercept_sd: 0.5,
            item_curve_scale: 0.5,
        },
    }
}

#[test]
fn same_seed_same_data() {
    let (a, b) = (generate(&groups(3)).unwrap(), generate(&groups(3)).unwrap());
    assert_eq!(a.data, b.data);
    assert_eq!(a.truth, b.truth);
    let c = generate(&groups(4)).unwrap();
    assert_ne!(a.data.numeric("y").unwrap(), c.data.numeric("y").unwrap());
}

#[test]
fn group_layout() {
    let g = generate(&groups(1)).unwrap();
    assert_eq!(g.data.n_rows(), 6 * 3 * 10);
    let group = g.data.column("Group").unwrap();
    assert_eq!(group.levels().unwrap(), ["A", "B"]);
    let offsets = &g.truth.offsets["Item"];
    assert_eq!(offsets.len(), 6);
    let noise: Vec<f64> = g
        .data
        .numeric("y")
        .unwrap()
        .iter()
        .zip(&g.signal)
        .map(|(y, s)| y - s)
        .collect();
    assert!(noise.iter().any(|e| *e != 0.0));
}

#[test]
fn ar1_noise_has_the_requested_lag1() {
    let e = simulate_ar1(20_000, 0.7, 1.0, 5).unwrap();
    let r = acf(&e, 1).unwrap().acf[1];
    assert!((r - 0.7).abs() < 0.03, "lag-1 {r}");
    let var = e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64;
    assert!((var - 1.0 / (1.0 - 0.49)).abs() < 0.15, "variance {var}");
}

#[test]
fn csv_with_schema_reloads_the_dataset() {
    let g = generate(&groups(2)).unwrap();
    let mut buf = Vec::new();
    g.data.write_csv(&mut buf).unwrap();
    let back = read_csv(buf.as_slice(), &g.data.schema()).unwrap();
    assert_eq!(back.columns().len(), g.data.columns().len());
    for (a, b) in back.columns().iter().zip(g.data.columns()) {
        assert_eq!(a.kind(), b.kind(), "{}", a.name());
        assert_eq!(a.levels(), b.levels(), "{}", a.name());
        for row in 0..back.n_rows() {
            assert_eq!(a.cell(row), b.cell(row));
        }
    }
}

#[test]
fn scenario_files_parse() {
    for name in ["naming", "pitch", "eeg", "groups", "single"] {
        let path = format!("{}/../../scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"));
        let s = gammkit::simlab::load_scenario(&path).unwrap();
        assert_eq!(s.name, name);
    }
}

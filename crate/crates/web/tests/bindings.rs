use vortex_web::{configuration_report, spiral_trajectory, PatchDemo};

#[test]
fn spiral_rows_have_time_and_positions() {
    let rows = spiral_trajectory(vec![], vec![], 1.0, 4.0, 3).unwrap();
    assert_eq!(rows.len(), 4 * 7);
    assert_eq!(rows[0], 1.0);
    assert!((rows[21] - 4.0).abs() < 1e-12);
    // Self-similar expansion: distances double from t = 1 to t = 4.
    let d = |r: &[f64]| ((r[1] - r[3]).powi(2) + (r[2] - r[4]).powi(2)).sqrt();
    let ratio = d(&rows[21..28]) / d(&rows[0..7]);
    assert!((ratio - 2.0).abs() < 1e-8, "{ratio}");
}

#[test]
fn spiral_rejects_bad_input() {
    assert!(spiral_trajectory(vec![1.0, 1.0], vec![0.0, 0.0, 1.0], 0.0, 1.0, 2).is_err());
    assert!(spiral_trajectory(vec![1.0, 1.0], vec![0.0, 0.0, 0.0, 0.0], 0.0, 1.0, 2).is_err());
}

#[test]
fn configuration_report_passes_for_the_example() {
    let seed = vec![-1.0, 0.0, 1.0, 0.0, 1.0, 2f64.sqrt()];
    let json: serde_json::Value = serde_json::from_str(&configuration_report(vec![-2.0, -2.0, 1.0], seed.clone()).unwrap()).unwrap();
    assert_eq!(json["passed"], true);
    assert!(json["alpha"].as_f64().unwrap() > 0.0);
    let e = configuration_report(vec![1.0, 1.0, 1.0], seed).unwrap_err();
    assert!(e.contains("harmonic"), "{e}");
}

#[test]
fn patch_demo_follows_the_centres() {
    let mut demo = PatchDemo::new(30, 1.0, 100.0, 101.0).unwrap();
    assert_eq!(demo.patch_sizes().len(), 3);
    assert_eq!(demo.positions().len(), 2 * demo.patch_sizes().iter().sum::<u32>() as usize);
    while !demo.finished() {
        demo.advance(4).unwrap();
    }
    assert_eq!(demo.time(), 101.0);
    let got = demo.centers().unwrap();
    let want = demo.predicted_centers().unwrap();
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-3, "{g} vs {w}");
    }
    let total: f64 = demo.circulations().iter().sum();
    assert!((total - -3.0).abs() < 1e-12);
}

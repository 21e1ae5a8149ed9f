use nslb::dynamics::{simulate, weak_strong_bound, SolverConfig};
use nslb::flows::{random_solenoidal, taylor_green, SpectrumShape};
use nslb::spectral::TorusGrid;

fn calibrated_constant(dt: f64) -> Option<f64> {
    let grid = TorusGrid::new(2, 32).unwrap();
    let base = taylor_green(&grid, 1.0)
        .unwrap()
        .axpy(1.0, &random_solenoidal(&grid, SpectrumShape::band(3), 0.5, 5).unwrap())
        .unwrap();
    let gap = random_solenoidal(&grid, SpectrumShape::band(6), 1e-3, 7).unwrap();
    let perturbed = base.axpy(1.0, &gap).unwrap();
    let cfg = SolverConfig::new(0.002, dt, 1.0)
        .unwrap()
        .with_save_every((0.02 / dt).round() as usize);
    let a = simulate(&perturbed, &cfg).unwrap();
    let b = simulate(&base, &cfg).unwrap();
    let report = weak_strong_bound(&a, &b).unwrap();
    assert!((report.gap[0] - 1e-6).abs() < 1e-12);
    report.c_min
}

#[test]
fn perturbed_runs_give_a_stable_finite_constant() {
    let coarse = calibrated_constant(2e-3).expect("finite constant");
    let fine = calibrated_constant(1e-3).expect("finite constant");
    assert!(coarse > 0.0 && fine > 0.0);
    assert!((coarse - fine).abs() <= 0.2 * fine, "{coarse} vs {fine}");
}

use skinheal::config::load_config;
use skinheal::evolution::{evolve, log_growth_rate, InitialState};
use skinheal::skin::build_skin_modes;
use skinheal::spectra::{compute_threshold, obc_gbz_scan};
use std::path::Path;

/// Long-window slope of `ln ||xi||^2` in the unhealed regime against `2 E_m1`.
#[test]
fn deviation_growth_matches_saddle_rate() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/five_term_no_heal.toml");
    let mut cfg = load_config(&path).unwrap();
    let model = cfg.model().unwrap();
    let gbz = obc_gbz_scan(&model, &cfg.scan.grid, cfg.scan.tol).unwrap();
    let th = compute_threshold(&model, &gbz, &cfg.scan.grid).unwrap();

    cfg.lattice.n = 3000;
    cfg.integrate.dt = 0.01;
    cfg.integrate.t_end = 240.0;
    cfg.integrate.snapshot_times = vec![240.0];
    let mode = build_skin_modes(&model, cfg.initial.as_ref().unwrap().energy(), cfg.lattice.n)
        .unwrap()
        .remove(0);
    let trace = evolve(&model, InitialState::Mode(&mode), &cfg.potential_spec(), &cfg.evolve_params()).unwrap();
    assert!(trace.run_valid());
    let slope = log_growth_rate(&trace.times, &trace.xi_norm_log, (150.0, 230.0)).unwrap();
    let rel = (slope - 2.0 * th.e_m1).abs() / (2.0 * th.e_m1);
    assert!(rel < 0.05, "slope {slope} vs 2 E_m1 {}", 2.0 * th.e_m1);
}

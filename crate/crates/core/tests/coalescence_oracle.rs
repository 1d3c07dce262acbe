//! Binned coalescence against the closed-form constant-kernel solution
//! `N(t) = N0 / (1 + C N0 t / 2)`.

use romcp::dataset::{
    number_concentration, sample_initial_dsd, sample_seeds, simulate_coalescence, BinGrid, InitialDsdParams,
    Kernel, SolverOptions, TimeGrid,
};

fn closed_form(n0: f64, c: f64, t: f64) -> f64 {
    n0 / (1.0 + c * n0 * t / 2.0)
}

#[test]
fn constant_kernel_number_decay_matches_closed_form() {
    let grid = BinGrid::default();
    let time = TimeGrid::default();
    let c = 6e-12;
    let mut worst = 0.0f64;
    let mut deepest = 1.0f64;
    for seed in sample_seeds(11, 100) {
        let init = sample_initial_dsd(seed, &grid, &InitialDsdParams::default()).unwrap();
        let traj = simulate_coalescence(&init, &grid, &time, Kernel::Constant { c }, SolverOptions::default()).unwrap();
        let n0 = number_concentration(&grid, &init);
        let t_end = time.t_end();
        let sim = number_concentration(&grid, &traj.row(time.n_steps - 1));
        let exact = closed_form(n0, c, t_end);
        worst = worst.max((sim - exact).abs() / exact);
        deepest = deepest.min(exact / n0);
    }
    eprintln!("worst relative error {worst:.4}, strongest decay N/N0 = {deepest:.3}");
    assert!(deepest < 0.8, "decay too weak to test anything: {deepest}");
    assert!(worst < 0.05, "{worst}");
}

#[test]
fn mass_is_conserved_for_random_initial_conditions() {
    let grid = BinGrid::default();
    let time = TimeGrid::default();
    for seed in sample_seeds(5, 100) {
        let init = sample_initial_dsd(seed, &grid, &InitialDsdParams::default()).unwrap();
        let traj = simulate_coalescence(&init, &grid, &time, Kernel::default(), SolverOptions::default()).unwrap();
        let m0 = traj.total_mass[0];
        for (t, m) in traj.total_mass.iter().enumerate() {
            assert!((m - m0).abs() <= 1e-8 * m0, "seed {seed} step {t}: {m} vs {m0}");
        }
    }
}

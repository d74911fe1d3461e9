mod common;

use common::*;
use proptest::prelude::*;
use varlind::exact::{
    evolve_exact, midpoint_step, trajectory_run, trajectory_run_from, ExactOptions, MidpointConfig, TrajectoryConfig,
};
use varlind::model::{Boundary, Lattice, Liouvillian, ModelParams};
use varlind::qops::DensityMatrix;

fn pair() -> Lattice {
    Lattice::new(2, 1, Boundary::Open).unwrap()
}

fn exact_curve(p: &ModelParams, lattice: &Lattice, tau: f64, t_final: f64, every: usize) -> Vec<(f64, f64)> {
    let rho0 = DensityMatrix::all_ground(lattice.n_sites());
    let opts = ExactOptions { record_pair: None, record_every: every };
    let run = evolve_exact(&rho0, p, lattice, t_final, &MidpointConfig::with_tau(tau), &opts).unwrap();
    run.series.rows().iter().map(|r| (r[0], r[1])).collect()
}

fn oracle_density(p: &ModelParams, n: usize, bonds: &[(usize, usize)], t: f64) -> f64 {
    let s = model_superoperator(p.omega, p.delta, p.v, p.gamma, n, bonds);
    rydberg_density(&propagate_exp(&s, &all_ground(n), t), n)
}

#[test]
fn two_site_curve_matches_matrix_exponential() {
    let p = ModelParams::new(1.0, 0.0, 2.0, 1.0);
    let s = model_superoperator(1.0, 0.0, 2.0, 1.0, 2, &[(0, 1)]);
    let step = (s * c(0.1)).exp();
    let mut v = vec_rows(&all_ground(2));
    let curve = exact_curve(&p, &pair(), 0.001, 10.0, 100);
    let mut worst = 0.0f64;
    for (k, &(t, n_r)) in curve.iter().enumerate() {
        assert!((t - 0.1 * k as f64).abs() < 1e-9);
        worst = worst.max((n_r - rydberg_density(&unvec_rows(&v, 4), 2)).abs());
        v = &step * v;
    }
    assert!(worst < 1e-6, "max deviation {worst:e}");
}

#[test]
fn global_error_is_second_order() {
    let p = ModelParams::new(1.0, 0.0, 2.0, 1.0);
    let want = oracle_density(&p, 2, &[(0, 1)], 10.0);
    let err = |tau: f64| (exact_curve(&p, &pair(), tau, 10.0, 1).last().unwrap().1 - want).abs();
    let ratio = err(0.02) / err(0.01);
    assert!((ratio - 4.0).abs() <= 0.8, "ratio {ratio}");
}

#[test]
fn single_step_error_is_third_order() {
    let p = ModelParams::new(1.3, 0.2, 1.7, 1.0);
    let l = Liouvillian::new(&p, 2, &[(0, 1)]).unwrap();
    let s = model_superoperator(1.3, 0.2, 1.7, 1.0, 2, &[(0, 1)]);
    let vals: Vec<f64> = (0..32).map(|k| ((k * 37 % 19) as f64 / 9.5) - 1.0).collect();
    let rho = DensityMatrix::new(density_from(&vals, 4), 2).unwrap();
    let err = |tau: f64| {
        let got = midpoint_step(&rho, &l, &MidpointConfig::with_tau(tau)).unwrap();
        trace_norm_hermitian(&(got.matrix() - propagate_exp(&s, rho.matrix(), tau)))
    };
    let ratio = err(0.02) / err(0.01);
    assert!((ratio - 8.0).abs() < 0.8, "ratio {ratio}");
}

#[test]
fn single_site_steady_state_is_optical_bloch_value() {
    let p = ModelParams::new(1.0, 0.0, 0.0, 1.0);
    let lattice = Lattice::new(1, 1, Boundary::Open).unwrap();
    let curve = exact_curve(&p, &lattice, 0.01, 30.0, 100);
    assert!((curve.last().unwrap().1 - 1.0 / 3.0).abs() < 1e-6);
    for &(t, n_r) in &curve {
        assert!((n_r - optical_bloch_population(1.0, 1.0, t)).abs() < 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn midpoint_step_preserves_trace_and_hermiticity(pv in reals(4), rv in reals(32), tau in 0.001f64..0.05) {
        let p = ModelParams::new(2.0 * pv[0], pv[1], 3.0 * pv[2], pv[3].abs());
        let l = Liouvillian::new(&p, 2, &[(0, 1)]).unwrap();
        let rho = DensityMatrix::new(density_from(&rv, 4), 2).unwrap();
        let cfg = MidpointConfig::with_tau(tau);
        let next = midpoint_step(&rho, &l, &cfg).unwrap();
        let m = next.matrix();
        prop_assert!((m.trace().re - 1.0).abs() < cfg.solver_tol);
        prop_assert!(max_abs(&(m - m.adjoint())) < 1e-12);
        // the implicit relation holds
        let resid = m - rho.matrix() - (l.apply(rho.matrix()) + l.apply(m)) * c(tau / 2.0);
        prop_assert!(trace_norm_hermitian(&resid) < 1e-10);
    }
}

#[test]
fn trajectories_agree_with_exact_on_two_by_two() {
    let p = ModelParams::new(1.0, 0.0, 2.0, 1.0);
    let lattice = Lattice::new(2, 2, Boundary::Open).unwrap();
    let cfg = TrajectoryConfig { n_traj: 2000, seed: 7, dt: 0.01, t_final: 5.0, record_every: 10 };
    let traj = trajectory_run(&p, &lattice, &cfg).unwrap();
    assert!(traj.max_norm_error < 1e-10);
    let s = model_superoperator(1.0, 0.0, 2.0, 1.0, 4, lattice.bonds());
    let step = (s * c(0.1)).exp();
    let mut v = vec_rows(&all_ground(4));
    for row in traj.series.rows() {
        let want = rydberg_density(&unvec_rows(&v, 16), 4);
        let (mean, se) = (row[1], row[2]);
        // before the first jumps every trajectory is identical and se collapses to zero
        assert!((mean - want).abs() <= 3.0 * se + 1e-5, "t = {}: {mean} vs {want} (se {se})", row[0]);
        v = &step * v;
    }
}

#[test]
fn undamped_trajectory_is_schrodinger_evolution() {
    let p = ModelParams::new(1.0, 0.3, 2.0, 0.0);
    let lattice = Lattice::new(2, 2, Boundary::Open).unwrap();
    let cfg = TrajectoryConfig { n_traj: 3, seed: 1, dt: 0.002, t_final: 3.0, record_every: 50 };
    let traj = trajectory_run(&p, &lattice, &cfg).unwrap();
    assert_eq!(traj.total_jumps, 0);
    let s = model_superoperator(1.0, 0.3, 2.0, 0.0, 4, lattice.bonds());
    for row in traj.series.rows() {
        let want = rydberg_density(&propagate_exp(&s, &all_ground(4), row[0]), 4);
        assert!((row[1] - want).abs() < 1e-8, "t = {}: {} vs {want}", row[0], row[1]);
        assert!(row[2] < 1e-15);
    }
}

#[test]
fn mean_first_jump_time_is_lifetime() {
    let p = ModelParams::new(0.0, 0.0, 0.0, 1.0);
    let lattice = Lattice::new(1, 1, Boundary::Open).unwrap();
    let cfg = TrajectoryConfig { n_traj: 4000, seed: 3, dt: 0.01, t_final: 30.0, record_every: 100 };
    let traj = trajectory_run_from(&p, &lattice, &[true], &cfg).unwrap();
    let times: Vec<f64> = traj.first_jump_times.iter().map(|t| t.expect("jump within 30 lifetimes")).collect();
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let se = (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt();
    assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn identical_seeds_give_identical_output() {
    let p = ModelParams::new(1.0, 0.0, 2.0, 1.0);
    let lattice = Lattice::new(3, 1, Boundary::Periodic).unwrap();
    let cfg = TrajectoryConfig { n_traj: 50, seed: 11, dt: 0.01, t_final: 2.0, record_every: 10 };
    let a = trajectory_run(&p, &lattice, &cfg).unwrap();
    let b = trajectory_run(&p, &lattice, &cfg).unwrap();
    assert_eq!(a.series.rows(), b.series.rows());
    let other = trajectory_run(&p, &lattice, &TrajectoryConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a.series.rows(), other.series.rows());
}

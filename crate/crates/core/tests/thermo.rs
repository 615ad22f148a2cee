mod common;

use lienet::exec::Execution;
use lienet::statmech::{MeanFieldConfig, beta_from_noise, meanfield_rb, orbit_thermo_single, sigma_for_temperature};
use nalgebra::{Matrix3, Vector3};

#[test]
fn single_body_moments_match_quadrature() {
    let inertia = [1.0, 2.0, 3.0];
    let tensor = Matrix3::from_diagonal(&Vector3::from(inertia));
    for (radius, beta) in [(1.0, 2.0), (1.5, 0.5), (0.8, 10.0)] {
        let mc = orbit_thermo_single(&tensor, radius, beta, 400_000, 7, Execution::Parallel).unwrap();
        let (z, e, var) = common::gibbs_moments(inertia, radius, beta, 800);
        assert!(
            (mc.mean_energy - e).abs() < 3.0 * mc.mean_energy_stderr,
            "<E> {} vs {} (se {})",
            mc.mean_energy,
            e,
            mc.mean_energy_stderr
        );
        assert!((mc.log_partition - z.ln()).abs() < 3.0 * mc.log_partition_stderr);
        assert!((mc.energy_var - var).abs() < 3.0 * mc.energy_var_stderr);
        assert!((mc.entropy - (z.ln() + beta * e)).abs() < 3.0 * mc.entropy_stderr);
    }
}

#[test]
fn isotropic_body_has_flat_energy() {
    // Every point of the sphere has energy r^2 / 2.
    let mc = orbit_thermo_single(&Matrix3::identity(), 2.0, 3.0, 1000, 1, Execution::Sequential).unwrap();
    assert!((mc.mean_energy - 2.0).abs() < 1e-12);
    assert!(mc.energy_var.abs() < 1e-12);
    let expected = (4.0 * std::f64::consts::PI * 4.0).ln() - 3.0 * 2.0;
    assert!((mc.log_partition - expected).abs() < 1e-12);
}

#[test]
fn single_body_estimate_is_independent_of_execution() {
    let tensor = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
    let a = orbit_thermo_single(&tensor, 1.0, 2.0, 50_000, 3, Execution::Sequential).unwrap();
    let b = orbit_thermo_single(&tensor, 1.0, 2.0, 50_000, 3, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn temperature_and_noise_round_trip() {
    for (theta, t) in [(1.0, 0.3), (0.25, 2.0), (4.0, 0.01)] {
        let sigma = sigma_for_temperature(theta, t);
        assert!((1.0 / beta_from_noise(theta, sigma) - t).abs() < 1e-12 * t);
    }
}

#[test]
fn isotropic_mean_field_follows_langevin_curve() {
    // For a unit sphere and J = 1 the self-consistency reads m = L(m / T),
    // with L(x) = coth x - 1/x, which orders below T = 1/3.
    let langevin = |x: f64| 1.0 / x.tanh() - 1.0 / x;
    let cfg = MeanFieldConfig { samples: 50_000, tolerance: 1e-6, seed: 5, ..MeanFieldConfig::default() };
    let temps = [0.1, 0.2, 0.3, 0.5];
    let sols: Vec<_> = temps
        .iter()
        .map(|&t| meanfield_rb(&Matrix3::identity(), &Matrix3::identity(), 1.0, t, &cfg, Execution::Parallel).unwrap())
        .collect();
    for (t, s) in temps.iter().zip(&sols) {
        let m = s.order.norm();
        if *t < 1.0 / 3.0 {
            assert!((m - langevin(m / t)).abs() < 0.02, "T={t}: m={m}");
            assert!(m > 0.05);
        } else {
            assert!(m < 0.05, "T={t}: m={m}");
        }
    }
}

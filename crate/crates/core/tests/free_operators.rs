use bdf_core::free::{
    band_projector, effective_velocity, free_energy_density, free_sea_projector, g_function, mean_field_free_symbol, sigma_dot,
    PhysicalParams, TranslationInvariantState, G_TOL,
};
use bdf_core::quadrature::gauss_legendre_on;
use bdf_core::radial::radial_moment;
use bdf_core::BdfError;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

/// Brute-force midpoint rule on the defining double integral.
fn g_riemann(r_max: f64, n: usize) -> f64 {
    let (dr, dt) = (r_max / n as f64, PI / n as f64);
    let mut sum = 0.0;
    for i in 0..n {
        let r = (i as f64 + 0.5) * dr;
        for j in 0..n {
            let t = (j as f64 + 0.5) * dt;
            let c = t.cos();
            sum += r * c / (r * r - 2.0 * r * c + 1.0).sqrt();
        }
    }
    sum * dr * dt / (2.0 * PI)
}

#[test]
fn g_matches_brute_force_oracle() {
    let fast = g_function(2.0, G_TOL).unwrap();
    let slow = g_riemann(2.0, 4000);
    assert!((fast - slow).abs() < 1e-3, "{fast} vs {slow}");
}

#[test]
fn radial_moment_of_first_mode_is_g() {
    for r in [0.05, 0.3, 0.7, 0.95] {
        let moment = radial_moment(1, r, 1.0, 1e-11).unwrap();
        let expected = 4.0 * PI * r * g_function(1.0 / r, G_TOL).unwrap();
        assert!((moment - expected).abs() < 1e-8 * expected.max(1.0), "r = {r}: {moment} vs {expected}");
    }
}

#[test]
fn free_energy_of_the_zero_profile_vanishes() {
    let params = PhysicalParams::new(1.1, 1.0).unwrap();
    let zero = TranslationInvariantState::new(|_| 0.0);
    assert_eq!(free_energy_density(&zero, &params, 64).unwrap(), 0.0);
}

#[test]
fn free_energy_of_the_sea_matches_g_oracle() {
    // For c ≡ -1/2 the exchange double integral collapses through the first
    // radial moment: ℱ = -(2π)⁻² [2π v Λ³/3 + π ∫₀^Λ r² g(Λ/r) dr].
    let params = PhysicalParams::new(1.1, 1.0).unwrap();
    let (r, w) = gauss_legendre_on(80, 0.0, 1.0);
    let tail: f64 = r.iter().zip(&w).map(|(r, w)| w * r * r * g_function(1.0 / r, G_TOL).unwrap()).sum();
    let oracle = -(2.0 * PI * 1.1 / 3.0 + PI * tail) / (4.0 * PI * PI);
    let f = free_energy_density(&TranslationInvariantState::free_sea(), &params, 200).unwrap();
    assert!((f - oracle).abs() < 1e-6 * oracle.abs(), "{f} vs {oracle}");
}

#[test]
fn free_energy_is_quadratic_in_the_profile() {
    let params = PhysicalParams::new(0.8, 1.0).unwrap();
    let base = TranslationInvariantState::new(|r| -0.5 * (1.0 - r * r));
    let f = |eps: f64| free_energy_density(&base.scaled(eps), &params, 120).unwrap();
    let (f1, f2, f3) = (f(0.25), f(0.5), f(0.75));
    // Third finite difference of a quadratic vanishes (with ℱ(0) = 0).
    let third = f3 - 3.0 * f2 + 3.0 * f1;
    assert!(third.abs() < 1e-12, "{third}");
}

#[test]
fn free_sea_beats_its_mirror_and_partial_filling() {
    let params = PhysicalParams::new(1.1, 1.0).unwrap();
    let sea = free_energy_density(&TranslationInvariantState::free_sea(), &params, 100).unwrap();
    for eps in [-1.0, 0.0, 0.5] {
        let other = free_energy_density(&TranslationInvariantState::free_sea().scaled(eps), &params, 100).unwrap();
        assert!(sea < other, "eps = {eps}: {sea} vs {other}");
    }
}

#[test]
fn profile_outside_the_admissible_range_is_rejected() {
    let params = PhysicalParams::new(1.1, 1.0).unwrap();
    let bad = TranslationInvariantState::new(|_| 0.7);
    assert!(matches!(free_energy_density(&bad, &params, 32), Err(BdfError::NotAdmissible(_))));
}

#[test]
fn parameters_are_validated() {
    assert!(PhysicalParams::new(0.0, 1.0).is_err());
    assert!(PhysicalParams::new(1.0, -1.0).is_err());
    assert!(PhysicalParams::new(f64::NAN, 1.0).is_err());
}

fn momentum() -> impl Strategy<Value = [f64; 2]> {
    (0.01f64..1.0, 0.0f64..2.0 * PI).prop_map(|(r, t)| [r * t.cos(), r * t.sin()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn band_projectors_resolve_identity(p in momentum()) {
        let plus = band_projector(p, 1.0).unwrap();
        let minus = band_projector(p, -1.0).unwrap();
        let one = nalgebra::Matrix2::<Complex64>::identity();
        prop_assert!((plus + minus - one).norm() < 1e-14);
        prop_assert!((plus * minus).norm() < 1e-14);
        prop_assert!((minus * minus - minus).norm() < 1e-14);
        prop_assert!((minus.adjoint() - minus).norm() < 1e-15);
        prop_assert!((minus.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn free_symbol_is_diagonal_in_the_bands(p in momentum()) {
        let params = PhysicalParams::new(1.1, 1.0).unwrap();
        let d = mean_field_free_symbol(p, &params).unwrap();
        let sea = free_sea_projector(p, &params).unwrap();
        prop_assert!((d * sea - sea * d).norm() < 1e-12);
        // σ·p squares to |p|², so the eigenvalues are ±v_eff|p|.
        let v = effective_velocity(p, &params).unwrap();
        let norm2 = p[0] * p[0] + p[1] * p[1];
        let s = sigma_dot(p);
        prop_assert!((s * s - nalgebra::Matrix2::identity() * Complex64::new(norm2, 0.0)).norm() < 1e-14);
        let e = (sea * d).trace().re;
        prop_assert!((e + v * norm2.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn effective_velocity_decreases_with_momentum(a in 0.001f64..1.0, b in 0.001f64..1.0) {
        prop_assume!((a - b).abs() > 1e-6);
        let params = PhysicalParams::new(1.0, 1.0).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(effective_velocity([lo, 0.0], &params).unwrap() > effective_velocity([hi, 0.0], &params).unwrap());
    }
}

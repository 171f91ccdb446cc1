//! End-to-end acceptance checks. Every test prints a single line
//!
//!     [PASS] C07 energy conservation (static): ...
//!
//! and then asserts, so a red criterion shows up both in the log and as a
//! failing test. Run with `--nocapture` to see the lines of passing tests.

use bdf_core::critical::{estimate_h, estimate_v_c};
use bdf_core::dynamics::{
    energy_derivative_check, gronwall_envelope, propagate, ExternalCharge, GaussianDefect, PropagatorConfig, Scenario,
};
use bdf_core::energy::bdf_energy;
use bdf_core::free::{effective_velocity, g_function, PhysicalParams, G_TOL};
use bdf_core::invariants::check_state;
use bdf_core::linalg;
use bdf_core::mean_field::{exchange_operator, ExchangeKernel};
use bdf_core::scf::{solve_ground_state, ScfConfig};
use bdf_core::state::{coulomb_energy, deviation, random_admissible_state};
use bdf_core::{ChargeDensity, GridSpec, Model};
use std::f64::consts::PI;
use std::time::{Duration, Instant};

const V_F: f64 = 1.1;

fn report(id: u32, name: &str, passed: bool, detail: String) {
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("[{tag}] C{id:02} {name}: {detail}");
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn model(n: usize) -> Model {
    Model::new(GridSpec::new(1.0, n), V_F).unwrap()
}

/// Least-squares slope of log2(err) against log2(dt).
fn log_slope(dts: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|d| d.log2()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.log2()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn defects() -> [GaussianDefect; 5] {
    [
        GaussianDefect { amplitude: 0.2, sigma: 1.0, center: [0.0, 0.0] },
        GaussianDefect { amplitude: -0.5, sigma: 1.5, center: [0.3, -0.2] },
        GaussianDefect { amplitude: 1.0, sigma: 2.0, center: [0.0, 0.0] },
        GaussianDefect { amplitude: 2.0, sigma: 2.5, center: [-1.0, 0.5] },
        GaussianDefect { amplitude: -1.5, sigma: 3.0, center: [0.5, 0.5] },
    ]
}

#[test]
fn c01_g_at_one() {
    let start = Instant::now();
    let g = g_function(1.0, G_TOL).unwrap();
    let elapsed = start.elapsed();
    let passed = (g - 0.1234).abs() <= 5e-4 && within(elapsed, 5.0);
    report(1, "g(1) anchor", passed, format!("g(1) = {g:.8}, target 0.1234 ± 5e-4, {elapsed:.2?}"));
    assert!(passed);
}

#[test]
fn c02_kohn_anomaly() {
    let start = Instant::now();
    let params = PhysicalParams::new(V_F, 1.0).unwrap();
    // |p|/Λ from 1e-2 down to 1e-6, four points per decade
    let ladder: Vec<f64> = (0..=16).map(|k| 10f64.powf(-2.0 - 0.25 * k as f64)).collect();
    let dev: Vec<f64> = ladder.iter().map(|&x| effective_velocity([x, 0.0], &params).unwrap() - V_F - 0.25 * (1.0 / x).ln()).collect();
    let elapsed = start.elapsed();
    let max = dev.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let monotone = dev.windows(2).all(|w| w[1].abs() <= w[0].abs());
    let passed = max < 0.5 && monotone && within(elapsed, 10.0);
    // Not part of the criterion: distance to the large-R constant ½ln2 - ⅛.
    let limit = 0.5 * 2f64.ln() - 0.125;
    let settling = dev.windows(2).all(|w| (w[1] - limit).abs() <= (w[0] - limit).abs());
    report(
        2,
        "Kohn anomaly",
        passed,
        format!(
            "max |dev| = {max:.6} (< 0.5), |dev| non-increasing toward small |p| = {monotone}, dev(1e-2) = {:.9}, dev(1e-6) = {:.9}, \
             |dev - (ln2/2 - 1/8)| non-increasing = {settling}, {elapsed:.2?}",
            dev[0],
            dev[dev.len() - 1]
        ),
    );
    assert!(passed);
}

#[test]
fn c03_critical_velocity() {
    let start = Instant::now();
    let report_ = estimate_v_c(1e-4, 400, 2, &[0.2, 0.5, 1.1, 2.0, 3.0]).unwrap();
    let elapsed = start.elapsed();
    let v_c = report_.v_c;
    let location = (0.30..=0.42).contains(&v_c);
    let ceiling = v_c < 2.0560;
    let coupling = (2.4..=3.3).contains(&report_.alpha_c);
    let passed = location && ceiling && coupling && within(elapsed, 600.0);
    report(
        3,
        "critical velocity",
        passed,
        format!(
            "v_c = {v_c:.5} (in [0.30, 0.42]: {location}; < 2.056: {ceiling}), alpha_c = {:.4} (in [2.4, 3.3]: {coupling}), \
             resolution change {:.2e}, {elapsed:.2?}",
            report_.alpha_c, report_.resolution_change
        ),
    );
    assert!(passed);
}

#[test]
fn c04_free_sea_fixed_point() {
    let start = Instant::now();
    let m = model(12);
    let nu = ChargeDensity::zeros(m.lattice());
    let result = solve_ground_state(&m, &nu, &ScfConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let q_norm = linalg::operator_norm(result.q.matrix());
    let passed = q_norm <= 1e-10 && result.iterations <= 2 && within(elapsed, 60.0);
    report(4, "free-sea fixed point", passed, format!("||Q|| = {q_norm:.2e}, iterations = {}, {elapsed:.2?}", result.iterations));
    assert!(passed);
}

#[test]
fn c05_energy_lower_bound() {
    let start = Instant::now();
    let m = model(12);
    let mut worst = f64::INFINITY;
    for seed in 0..50u64 {
        let strength = 0.1 + 0.9 * (seed as f64 / 49.0);
        let gamma = random_admissible_state(&m, seed, strength);
        let q = deviation(&m, &gamma);
        for d in defects() {
            let nu = d.density(m.lattice(), 1.0);
            let e = bdf_energy(&m, &q, &nu).unwrap().total;
            worst = worst.min(e + 0.5 * coulomb_energy(&nu));
        }
    }
    let elapsed = start.elapsed();
    let passed = worst >= -1e-8 && within(elapsed, 300.0);
    report(5, "energy lower bound", passed, format!("min E + D(nu,nu)/2 = {worst:.4e} over 250 pairs (>= -1e-8), {elapsed:.2?}"));
    assert!(passed);
}

#[test]
fn c06_projector_preservation() {
    let start = Instant::now();
    let m = model(12);
    let gamma0 = random_admissible_state(&m, 6, 0.5);
    let ext = ExternalCharge::new(Scenario::StaticDefect { defect: defects()[2] }, m.lattice()).unwrap();
    let config = PropagatorConfig { dt: 0.05, t_final: 25.0, record_every: 10, ..PropagatorConfig::default() };
    let traj = propagate(&m, &gamma0, &ext, &config).unwrap();
    let elapsed = start.elapsed();
    let worst = traj.max_projector_defect();
    let steps = config.steps();
    let passed = steps >= 500 && worst <= 1e-9 && traj.failure.is_none() && within(elapsed, 600.0);
    report(6, "projector preservation", passed, format!("max ||γ² - γ|| = {worst:.2e} over {steps} midpoint steps, {elapsed:.2?}"));
    assert!(passed);
}

/// max_t |E(t) - E(0)| under a static defect at step sizes h, h/2, h/4.
#[test]
fn c07_energy_conservation_static() {
    let start = Instant::now();
    let m = model(12);
    let gamma0 = random_admissible_state(&m, 7, 0.5);
    let ext = ExternalCharge::new(Scenario::StaticDefect { defect: defects()[2] }, m.lattice()).unwrap();
    let h = 0.2;
    let dts = [h, h / 2.0, h / 4.0];
    let errs: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let config = PropagatorConfig { dt, t_final: 2.0, predictor_iterations: 4, ..PropagatorConfig::default() };
            let traj = propagate(&m, &gamma0, &ext, &config).unwrap();
            let e0 = traj.records[0].energy.total;
            traj.records.iter().map(|r| (r.energy.total - e0).abs()).fold(0.0, f64::max)
        })
        .collect();
    let elapsed = start.elapsed();
    let slopes = [(errs[0] / errs[1]).log2(), (errs[1] / errs[2]).log2()];
    let fit = log_slope(&dts, &errs);
    let passed = slopes.iter().all(|s| (s - 2.0).abs() <= 0.2) && within(elapsed, 900.0);
    report(
        7,
        "energy conservation (static)",
        passed,
        format!(
            "max |E - E0| = {}, Richardson slopes = [{:.3}, {:.3}] (2.0 ± 0.2), fit {fit:.3}, {elapsed:.2?}",
            sci(&errs),
            slopes[0],
            slopes[1]
        ),
    );
    assert!(passed);
}

fn ramped_runs() -> (Vec<f64>, Vec<Vec<f64>>, Vec<usize>, Vec<f64>, Duration) {
    let start = Instant::now();
    let m = model(12);
    let gamma0 = random_admissible_state(&m, 8, 0.3);
    let ext = ExternalCharge::new(Scenario::RampedDefect { defect: defects()[2], ramp_time: 1.0 }, m.lattice()).unwrap();
    let h = 0.1;
    let dts = vec![h, h / 2.0, h / 4.0];
    let mut residuals = Vec::new();
    let mut violations = Vec::new();
    let mut margins = Vec::new();
    for &dt in &dts {
        let config = PropagatorConfig { dt, t_final: 1.5, predictor_iterations: 4, ..PropagatorConfig::default() };
        let traj = propagate(&m, &gamma0, &ext, &config).unwrap();
        residuals.push(energy_derivative_check(&traj, &ext).unwrap());
        violations.push(traj.gronwall_violations.len());
        let g0 = traj.records[0].lyapunov.abs();
        let margin = gronwall_envelope(&traj, &ext).iter().map(|m| m + 1e-6 * g0).fold(f64::INFINITY, f64::min);
        margins.push(margin);
    }
    (dts, residuals, violations, margins, start.elapsed())
}

#[test]
fn c08_c09_energy_derivative_and_gronwall() {
    let (dts, residuals, violations, margins, elapsed) = ramped_runs();
    let maxes: Vec<f64> = residuals.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect();
    let slopes = [(maxes[0] / maxes[1]).log2(), (maxes[1] / maxes[2]).log2()];
    let fit = log_slope(&dts, &maxes);
    let c8 = slopes.iter().all(|s| (s - 2.0).abs() <= 0.2) && within(elapsed, 900.0);
    report(
        8,
        "energy-derivative identity (ramped)",
        c8,
        format!("max residual = {}, refinement slopes = [{:.3}, {:.3}], fit {fit:.3}, {elapsed:.2?}", sci(&maxes), slopes[0], slopes[1]),
    );
    let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let c9 = violations.iter().all(|&v| v == 0) && worst >= 0.0;
    report(9, "Grönwall envelope", c9, format!("violations per run = {violations:?}, min margin alpha e^t + 1e-6 G0 - G = {worst:.4e}"));
    assert!(c8 && c9);
}

#[test]
fn c10_operator_inequality_suite() {
    let start = Instant::now();
    let m = model(12);
    let h = estimate_h(V_F, 400, 2).unwrap().h;
    let groups: [(&str, &[&str]); 5] = [
        ("Q++ - Q-- >= Q^2", &["operator_inequality"]),
        ("[V', P]++/-- = 0", &["commutator_plus_plus", "commutator_minus_minus"]),
        ("rho_[phi,Q] = 0", &["potential_commutator_density"]),
        ("exchange <= h/2 kinetic", &["exchange_vs_kinetic"]),
        ("HS chain", &["exchange_hs_bound"]),
    ];
    let mut worst = vec![(f64::NEG_INFINITY, 0.0, true); groups.len()];
    let mut others_failed = Vec::new();
    for seed in 0..50u64 {
        let strength = 0.1 + 0.9 * (seed as f64 / 49.0);
        let gamma = random_admissible_state(&m, 1000 + seed, strength);
        let nu = defects()[(seed % 5) as usize].density(m.lattice(), 1.0);
        for c in check_state(&m, &gamma, &nu, h).unwrap() {
            match groups.iter().position(|(_, names)| names.contains(&c.name)) {
                Some(g) => {
                    // Track the check closest to (or furthest past) its bound.
                    let slack = c.value - c.bound;
                    if slack > worst[g].0 - worst[g].1 {
                        worst[g] = (c.value, c.bound, worst[g].2);
                    }
                    worst[g].2 &= c.passed;
                }
                None if !c.passed => others_failed.push(format!("{}@{seed}", c.name)),
                None => {}
            }
        }
    }
    let elapsed = start.elapsed();
    let parts: Vec<String> = groups
        .iter()
        .zip(&worst)
        .map(|((label, _), (v, b, ok))| format!("{label}: {} ({v:.2e} vs {b:.2e})", if *ok { "ok" } else { "FAIL" }))
        .collect();
    let passed = worst.iter().all(|w| w.2) && within(elapsed, 300.0);
    report(10, "operator-inequality suite", passed, format!("h(1.1) = {h:.5}; {}; {elapsed:.2?}", parts.join("; ")));
    if !others_failed.is_empty() {
        println!("      auxiliary checks failed: {}", others_failed.join(", "));
    }
    assert!(passed);
}

#[test]
fn c11_stationarity() {
    let start = Instant::now();
    let m = model(12);
    // weak enough that the Fermi level stays in a gap
    let defect = GaussianDefect::new(0.2, 2.0);
    let nu = defect.density(m.lattice(), 1.0);
    let config = ScfConfig::default();
    let ground = solve_ground_state(&m, &nu, &config).unwrap();
    let ext = ExternalCharge::new(Scenario::StaticDefect { defect }, m.lattice()).unwrap();
    let prop = PropagatorConfig { dt: 0.05, t_final: 5.0, ..PropagatorConfig::default() };
    let mut drift = 0.0f64;
    let traj = bdf_core::dynamics::propagate_with(&m, &ground.gamma, &ext, &prop, |_, gamma| {
        drift = drift.max(linalg::hermitian_norm(&(gamma.matrix() - ground.gamma.matrix())));
    })
    .unwrap();
    let elapsed = start.elapsed();
    let bound = 10.0 * config.tol_commutator;
    let passed = traj.records.len() == 101 && drift <= bound && within(elapsed, 600.0);
    report(
        11,
        "stationarity of the minimizer",
        passed,
        format!("max ||γ(t) - γ*|| = {drift:.2e} over 100 steps (<= {bound:.0e}), SCF iterations {}, {elapsed:.2?}", ground.iterations),
    );
    assert!(passed);
}

#[test]
fn c12_gaussian_coulomb_norm() {
    let start = Instant::now();
    let m = model(32);
    let mut rows = Vec::new();
    let mut passed = true;
    for sigma in [8.0, 10.0, 12.0] {
        let d = GaussianDefect::new(1.0, sigma);
        let discrete = coulomb_energy(&d.density(m.lattice(), 1.0));
        let exact = 2.0 * PI.powf(2.5) / sigma;
        let rel = (discrete / exact - 1.0).abs();
        passed &= rel <= 0.02;
        rows.push(format!("σ={sigma}: rel err {rel:.3e}"));
    }
    let elapsed = start.elapsed();
    passed &= within(elapsed, 60.0);
    report(12, "Gaussian Coulomb norm", passed, format!("{} (<= 2%), {elapsed:.2?}", rows.join(", ")));
    assert!(passed);
}

#[test]
fn c13_exchange_kernel_equivalence() {
    let start = Instant::now();
    let m = model(24);
    let mut worst = 0.0f64;
    let (mut naive_time, mut blocked_time) = (Duration::ZERO, Duration::ZERO);
    for seed in 0..10u64 {
        let q = deviation(&m, &random_admissible_state(&m, 500 + seed, 0.5));
        let t = Instant::now();
        let a = exchange_operator(&m, &q, ExchangeKernel::Naive);
        naive_time += t.elapsed();
        let t = Instant::now();
        let b = exchange_operator(&m, &q, ExchangeKernel::Blocked);
        blocked_time += t.elapsed();
        worst = worst.max(linalg::frobenius(&(a.matrix() - b.matrix())));
    }
    let elapsed = start.elapsed();
    let speedup = naive_time.as_secs_f64() / blocked_time.as_secs_f64();
    let passed = worst <= 1e-10 && speedup >= 2.0 && within(elapsed, 600.0);
    report(
        13,
        "exchange-kernel equivalence",
        passed,
        format!("max ||naive - blocked||_F = {worst:.2e}, speedup {speedup:.1}x at n=24 (>= 2x), {elapsed:.2?}"),
    );
    assert!(passed);
}

use bdf_core::critical::{estimate_h, estimate_v_c, ChannelSet};
use bdf_core::dynamics::{propagate, ExternalCharge, GaussianDefect, PropagatorConfig, Scenario, Scheme};
use bdf_core::free::{g_function, G_TOL};
use bdf_core::invariants::KATO_HALF;
use bdf_core::linalg;
use bdf_core::scf::{solve_ground_state, ScfConfig};
use bdf_core::state::{coulomb_energy, projector_defect, random_admissible_state};
use bdf_core::{BdfError, ChargeDensity, GridSpec, Model};

fn model(n: usize) -> Model {
    Model::new(GridSpec::new(1.0, n), 1.1).unwrap()
}

#[test]
fn scf_small_defect_energy_is_bracketed() {
    let m = model(10);
    let nu = GaussianDefect::new(0.15, 2.0).density(m.lattice(), 1.0);
    let r = solve_ground_state(&m, &nu, &ScfConfig::default()).unwrap();
    let floor = -0.5 * coulomb_energy(&nu);
    assert!(r.energy.total <= 0.0 && r.energy.total >= floor, "{} not in [{floor}, 0]", r.energy.total);
    assert!(projector_defect(&r.gamma) <= 1e-10);
    // accepted steps never raise the energy
    for w in r.history.windows(2) {
        assert!(w[1].energy <= w[0].energy + 1e-10 * w[0].energy.abs());
    }
    let last = r.history.last().unwrap();
    assert!(last.commutator_norm <= 1e-9 && last.step_norm <= 1e-10);
}

#[test]
fn scf_reports_history_on_non_convergence() {
    let m = model(8);
    let nu = GaussianDefect::new(0.3, 1.5).density(m.lattice(), 1.0);
    let cfg = ScfConfig { max_iterations: 2, ..ScfConfig::default() };
    match solve_ground_state(&m, &nu, &cfg) {
        Err(BdfError::NonConvergence { iterations, history, .. }) => {
            assert_eq!(iterations, 2);
            assert_eq!(history.len(), 2);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn scf_warns_below_critical_velocity() {
    let m = Model::new(GridSpec::new(1.0, 8), 0.5).unwrap();
    let cfg = ScfConfig { critical_velocity: Some(0.82), ..ScfConfig::default() };
    let r = solve_ground_state(&m, &ChargeDensity::zeros(m.lattice()), &cfg).unwrap();
    assert!(r.warnings.iter().any(|w| w.contains("critical")));
}

#[test]
fn free_sea_is_stationary_without_charge() {
    let m = model(8);
    let ext = ExternalCharge::none(m.lattice());
    let cfg = PropagatorConfig { dt: 0.1, t_final: 1.0, ..PropagatorConfig::default() };
    let traj = propagate(&m, &m.free_sea(), &ext, &cfg).unwrap();
    let drift = linalg::operator_norm(&(traj.final_state.matrix() - m.free_sea().matrix()));
    assert!(drift < 1e-12, "{drift}");
    assert!(traj.records.iter().all(|r| r.energy.total.abs() < 1e-12));
}

#[test]
fn propagation_is_deterministic() {
    let m = model(8);
    let g0 = random_admissible_state(&m, 11, 0.4);
    let d = GaussianDefect { amplitude: 0.5, sigma: 1.5, center: [0.2, 0.1] };
    let ext = ExternalCharge::new(Scenario::MovingDefect { defect: d, velocity: [0.4, -0.2] }, m.lattice()).unwrap();
    let cfg = PropagatorConfig { dt: 0.1, t_final: 0.5, ..PropagatorConfig::default() };
    let a = propagate(&m, &g0, &ext, &cfg).unwrap();
    let b = propagate(&m, &g0, &ext, &cfg).unwrap();
    assert_eq!(a.final_state.matrix(), b.final_state.matrix());
    assert_eq!(a.records.len(), 6);
}

#[test]
fn midpoint_beats_the_first_order_reference() {
    let m = model(8);
    let g0 = random_admissible_state(&m, 5, 0.5);
    let ext = ExternalCharge::new(Scenario::StaticDefect { defect: GaussianDefect::new(0.5, 1.5) }, m.lattice()).unwrap();
    let drift = |scheme| {
        let cfg = PropagatorConfig { dt: 0.05, t_final: 1.0, scheme, ..PropagatorConfig::default() };
        let traj = propagate(&m, &g0, &ext, &cfg).unwrap();
        let e0 = traj.records[0].energy.total;
        traj.records.iter().map(|r| (r.energy.total - e0).abs()).fold(0.0, f64::max)
    };
    let (mid, euler) = (drift(Scheme::MidpointUnitary), drift(Scheme::EulerReference));
    assert!(mid * 10.0 < euler, "midpoint {mid:e}, euler {euler:e}");
}

#[test]
fn non_projector_initial_state_is_rejected() {
    let m = model(8);
    let half = m.free_sea().scale(0.5);
    let ext = ExternalCharge::none(m.lattice());
    assert!(matches!(propagate(&m, &half, &ext, &PropagatorConfig::default()), Err(BdfError::NotAdmissible(_))));
}

#[test]
fn h_decreases_along_the_velocity_ladder() {
    let set = ChannelSet::new(200, 4).unwrap();
    let ladder = [0.2, 0.5, 1.1, 2.0, 3.0];
    let values: Vec<(f64, usize)> = ladder.iter().map(|&v| set.h(v)).collect();
    for w in values.windows(2) {
        assert!(w[1].0 < w[0].0);
    }
    // s-wave dominance, recorded rather than assumed
    assert!(values.iter().all(|&(_, m)| m == 0), "{values:?}");
}

#[test]
fn h_is_resolution_stable_and_below_the_kato_bound() {
    let est = estimate_h(1.1, 800, 2).unwrap();
    assert!(est.relative_change < 0.01, "{}", est.relative_change);
    let bound = 2.0 * KATO_HALF / (1.1 + g_function(1.0, G_TOL).unwrap());
    assert!(est.h <= bound, "{} vs {bound}", est.h);
}

#[test]
fn v_c_solves_h_equals_two() {
    let tol_v = 1e-5;
    let report = estimate_v_c(tol_v, 200, 1, &[1.1]).unwrap();
    assert!(report.bracket[1] - report.bracket[0] <= tol_v);
    let set = ChannelSet::new(200, 1).unwrap();
    let slope = (set.h(report.v_c - 1e-3).0 - set.h(report.v_c + 1e-3).0) / 2e-3;
    assert!((set.h(report.v_c).0 - 2.0).abs() <= 2.0 * slope * tol_v);
    assert!((report.alpha_c * report.v_c - 1.0).abs() < 1e-15);
    assert_eq!(report.channel_table.len(), 2);
}

#[test]
fn critical_inputs_are_validated() {
    assert!(estimate_v_c(0.0, 100, 1, &[]).is_err());
    assert!(estimate_v_c(1e-3, 100, 1, &[-1.0]).is_err());
    assert!(ChannelSet::new(2, 1).is_err());
    assert!(ChannelSet::new(100, 99).is_err());
}

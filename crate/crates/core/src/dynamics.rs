//! Time evolution i dγ/dt = [𝒟_{Q(t)}, γ(t)] under a time-dependent external
//! charge, with a projector-preserving exponential integrator.

use crate::energy::{bdf_energy_from_parts, lyapunov, EnergyBreakdown};
use crate::error::{BdfError, Result};
use crate::grid::DifferenceLattice;
use crate::linalg::{self, HermitianEigen};
use crate::mean_field::{interaction_parts, mean_field_from_parts, ExchangeKernel, InteractionParts};
use crate::model::Model;
use crate::state::{coulomb_energy, coulomb_inner, deviation, norms, projector_defect, ChargeDensity, OperatorKernel, StateNorms};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// ν̂(k) = A e^{-σ²|k|²/2} e^{-i k·c}, a Gaussian of width σ centred at c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianDefect {
    pub amplitude: f64,
    pub sigma: f64,
    #[serde(default)]
    pub center: [f64; 2],
}

impl GaussianDefect {
    pub fn new(amplitude: f64, sigma: f64) -> Self {
        GaussianDefect { amplitude, sigma, center: [0.0, 0.0] }
    }

    fn profile(&self, k: [f64; 2], center: [f64; 2]) -> Complex64 {
        let k2 = k[0] * k[0] + k[1] * k[1];
        let phase = -(k[0] * center[0] + k[1] * center[1]);
        Complex64::from_polar((-0.5 * self.sigma * self.sigma * k2).exp(), phase)
    }

    /// Sampled on a lattice with unit amplitude factor `scale`.
    pub fn density(&self, lattice: &Arc<DifferenceLattice>, scale: f64) -> ChargeDensity {
        ChargeDensity::from_fn(lattice, |k| self.profile(k, self.center) * (self.amplitude * scale))
    }

    /// Continuum Coulomb energy D(ν, ν) = 2π^{5/2} A² / σ.
    pub fn coulomb_energy(&self) -> f64 {
        2.0 * PI.powf(2.5) * self.amplitude * self.amplitude / self.sigma
    }
}

/// Time dependence of the external charge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    FreeSea,
    StaticDefect {
        defect: GaussianDefect,
    },
    /// Amplitude switched on smoothly over `ramp_time`, then held constant.
    RampedDefect {
        defect: GaussianDefect,
        ramp_time: f64,
    },
    /// Centre moving with constant `velocity`.
    MovingDefect {
        defect: GaussianDefect,
        velocity: [f64; 2],
    },
}

impl Scenario {
    pub fn id(&self) -> &'static str {
        match self {
            Scenario::FreeSea => "free_sea",
            Scenario::StaticDefect { .. } => "static_defect",
            Scenario::RampedDefect { .. } => "ramped_defect",
            Scenario::MovingDefect { .. } => "moving_defect",
        }
    }

    pub fn defect(&self) -> Option<&GaussianDefect> {
        match self {
            Scenario::FreeSea => None,
            Scenario::StaticDefect { defect } | Scenario::RampedDefect { defect, .. } | Scenario::MovingDefect { defect, .. } => {
                Some(defect)
            }
        }
    }
}

/// Ramp profile s(τ) = τ - sin(2πτ)/(2π) on [0, 1]; s, s′ and s″ match the
/// constant states at both ends.
fn ramp(tau: f64) -> (f64, f64) {
    if tau <= 0.0 {
        (0.0, 0.0)
    } else if tau >= 1.0 {
        (1.0, 0.0)
    } else {
        let a = 2.0 * PI * tau;
        (tau - a.sin() / (2.0 * PI), 1.0 - a.cos())
    }
}

/// A scenario sampled on a difference lattice, with analytic time derivative.
#[derive(Debug, Clone)]
pub struct ExternalCharge {
    scenario: Scenario,
    lattice: Arc<DifferenceLattice>,
}

impl ExternalCharge {
    /// Validates the scenario parameters, including that the Fourier width
    /// 1/σ of the defect spans at least two lattice spacings.
    pub fn new(scenario: Scenario, lattice: &Arc<DifferenceLattice>) -> Result<Self> {
        if let Some(d) = scenario.defect() {
            if !(d.sigma.is_finite() && d.sigma > 0.0) {
                return Err(BdfError::Scenario(format!("defect width must be positive, got {}", d.sigma)));
            }
            if !d.amplitude.is_finite() || !d.center.iter().all(|c| c.is_finite()) {
                return Err(BdfError::Scenario("defect amplitude and centre must be finite".into()));
            }
            let width = 1.0 / d.sigma;
            if width < 2.0 * lattice.spacing() * (1.0 - 1e-12) {
                return Err(BdfError::Scenario(format!(
                    "defect Fourier width 1/sigma = {width} is below two grid spacings ({})",
                    2.0 * lattice.spacing()
                )));
            }
        }
        match scenario {
            Scenario::RampedDefect { ramp_time, .. } if !(ramp_time.is_finite() && ramp_time > 0.0) => {
                return Err(BdfError::Scenario(format!("ramp time must be positive, got {ramp_time}")));
            }
            Scenario::MovingDefect { velocity, .. } if !velocity.iter().all(|v| v.is_finite()) => {
                return Err(BdfError::Scenario("velocity must be finite".into()));
            }
            _ => {}
        }
        Ok(ExternalCharge { scenario, lattice: Arc::clone(lattice) })
    }

    pub fn none(lattice: &Arc<DifferenceLattice>) -> Self {
        ExternalCharge { scenario: Scenario::FreeSea, lattice: Arc::clone(lattice) }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn id(&self) -> &'static str {
        self.scenario.id()
    }

    pub fn is_static(&self) -> bool {
        matches!(self.scenario, Scenario::FreeSea | Scenario::StaticDefect { .. })
    }

    /// ν(t)
    pub fn density(&self, t: f64) -> ChargeDensity {
        match &self.scenario {
            Scenario::FreeSea => ChargeDensity::zeros(&self.lattice),
            Scenario::StaticDefect { defect } => defect.density(&self.lattice, 1.0),
            Scenario::RampedDefect { defect, ramp_time } => defect.density(&self.lattice, ramp(t / ramp_time).0),
            Scenario::MovingDefect { defect, velocity } => {
                let c = [defect.center[0] + velocity[0] * t, defect.center[1] + velocity[1] * t];
                ChargeDensity::from_fn(&self.lattice, |k| defect.profile(k, c) * defect.amplitude)
            }
        }
    }

    /// ν̇(t), in closed form.
    pub fn rate(&self, t: f64) -> ChargeDensity {
        match &self.scenario {
            Scenario::FreeSea | Scenario::StaticDefect { .. } => ChargeDensity::zeros(&self.lattice),
            Scenario::RampedDefect { defect, ramp_time } => defect.density(&self.lattice, ramp(t / ramp_time).1 / ramp_time),
            Scenario::MovingDefect { defect, velocity } => {
                let c = [defect.center[0] + velocity[0] * t, defect.center[1] + velocity[1] * t];
                ChargeDensity::from_fn(&self.lattice, |k| {
                    let kv = k[0] * velocity[0] + k[1] * velocity[1];
                    defect.profile(k, c) * Complex64::new(0.0, -kv * defect.amplitude)
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    MidpointUnitary,
    /// First-order exponential Euler; for cross-checks only.
    EulerReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagatorConfig {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub predictor_iterations: usize,
    pub record_every: usize,
    /// Largest tolerated ‖γ² - γ‖ before the run is marked failed.
    pub max_projector_defect: f64,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        PropagatorConfig {
            dt: 0.05,
            t_final: 1.0,
            scheme: Scheme::MidpointUnitary,
            predictor_iterations: 2,
            record_every: 1,
            max_projector_defect: 1e-9,
        }
    }
}

impl PropagatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(BdfError::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.dt * (1.0 - 1e-12)) {
            return Err(BdfError::InvalidParameter(format!("t_final must be at least dt, got {}", self.t_final)));
        }
        if self.predictor_iterations == 0 || self.record_every == 0 {
            return Err(BdfError::InvalidParameter("predictor_iterations and record_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.t_final / self.dt).round() as usize).max(1)
    }
}

/// Diagnostics of one recorded time.
#[derive(Debug, Clone)]
pub struct Record {
    pub step: usize,
    pub t: f64,
    pub energy: EnergyBreakdown,
    /// 𝒢(t) = ℰ + D(ν, ν)/2
    pub lyapunov: f64,
    /// α(t) e^t with α accumulated by the trapezoid rule at every step.
    pub gronwall_bound: f64,
    /// ‖ρ_Q - ν‖ in the Coulomb norm.
    pub coulomb_residual: f64,
    pub projector_defect: f64,
    pub norms: StateNorms,
    pub density: ChargeDensity,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub final_state: OperatorKernel,
    pub dt: f64,
    pub record_every: usize,
    /// Set when the projector defect exceeded its bound.
    pub failure: Option<String>,
    /// Records at which 𝒢(t) exceeded α(t)e^t beyond the slack.
    pub gronwall_violations: Vec<usize>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn max_projector_defect(&self) -> f64 {
        self.records.iter().map(|r| r.projector_defect).fold(0.0, f64::max)
    }
}

struct Stepper<'a> {
    model: &'a Model,
    ext: &'a ExternalCharge,
    config: PropagatorConfig,
}

impl Stepper<'_> {
    fn parts(&self, gamma: &OperatorKernel) -> InteractionParts {
        interaction_parts(self.model, &deviation(self.model, gamma), ExchangeKernel::Blocked)
    }

    /// e^{-i τ 𝒟} γ e^{+i τ 𝒟}
    fn conjugate(&self, gamma: &OperatorKernel, parts: &InteractionParts, nu: &ChargeDensity, tau: f64) -> Result<OperatorKernel> {
        let mf = mean_field_from_parts(self.model, parts, nu)?;
        let u = HermitianEigen::new(mf.matrix()).propagator(tau);
        let next = linalg::mul3(&u, gamma.matrix(), &u.adjoint());
        Ok(gamma.with_matrix(linalg::hermitian_part(&next)))
    }

    fn step(&self, t: f64, gamma: &OperatorKernel, parts: &InteractionParts) -> Result<OperatorKernel> {
        let dt = self.config.dt;
        match self.config.scheme {
            Scheme::EulerReference => self.conjugate(gamma, parts, &self.ext.density(t), dt),
            Scheme::MidpointUnitary => {
                let nu_half = self.ext.density(t + 0.5 * dt);
                let mut star = gamma.clone();
                let mut star_parts = parts.clone();
                let mut last_change = f64::INFINITY;
                for sweep in 0..self.config.predictor_iterations {
                    let next = self.conjugate(gamma, &star_parts, &nu_half, 0.5 * dt)?;
                    let change = linalg::frobenius(&(next.matrix() - star.matrix()));
                    if sweep > 0 && change > last_change && change > 1e-8 {
                        return Err(BdfError::StepFailure {
                            t,
                            reason: format!("predictor diverging: update {change:e} after {last_change:e}"),
                        });
                    }
                    if !change.is_finite() {
                        return Err(BdfError::StepFailure { t, reason: "non-finite predictor update".into() });
                    }
                    last_change = change;
                    star = next;
                    star_parts = self.parts(&star);
                }
                self.conjugate(gamma, &star_parts, &nu_half, dt)
            }
        }
    }
}

/// Propagate γ₀ over [0, t_final]; see [`propagate_with`].
pub fn propagate(model: &Model, gamma0: &OperatorKernel, ext: &ExternalCharge, config: &PropagatorConfig) -> Result<Trajectory> {
    propagate_with(model, gamma0, ext, config, |_, _| {})
}

/// Propagate γ₀, calling `on_record` with every record and the state it
/// describes as soon as it is available.
///
/// The midpoint scheme approximates γ(t + dt/2) by fixed-point sweeps
/// γ* = e^{-i dt/2 𝒟(γ*)} γ_n e^{+i dt/2 𝒟(γ*)} and then conjugates γ_n with
/// the full-step exponential of 𝒟(γ*) evaluated at ν(t + dt/2). Unitary
/// conjugation keeps γ a projector up to eigensolver accuracy.
pub fn propagate_with<F>(
    model: &Model,
    gamma0: &OperatorKernel,
    ext: &ExternalCharge,
    config: &PropagatorConfig,
    mut on_record: F,
) -> Result<Trajectory>
where
    F: FnMut(&Record, &OperatorKernel),
{
    config.validate()?;
    let defect0 = projector_defect(gamma0);
    if defect0 > 1e-8 {
        return Err(BdfError::NotAdmissible(format!("initial state has projector defect {defect0:e}")));
    }
    let stepper = Stepper { model, ext, config: *config };
    let steps = config.steps();
    let mut gamma = gamma0.clone();
    let mut parts = stepper.parts(&gamma);
    let mut records = Vec::new();
    let mut failure = None;
    let mut violations = Vec::new();
    let half_rate_sq = |t: f64| 0.5 * coulomb_energy(&ext.rate(t));
    let mut alpha = 0.0;
    let mut g0 = 0.0;
    let mut last_rate = half_rate_sq(0.0);
    for n in 0..=steps {
        let t = n as f64 * config.dt;
        if n > 0 {
            gamma = stepper.step(t - config.dt, &gamma, &parts)?;
            parts = stepper.parts(&gamma);
            let rate = half_rate_sq(t);
            alpha += 0.5 * config.dt * (last_rate + rate);
            last_rate = rate;
        }
        if n % config.record_every != 0 && n != steps {
            continue;
        }
        let nu = ext.density(t);
        let q = deviation(model, &gamma);
        let energy = bdf_energy_from_parts(model, &q, &nu, &parts)?;
        let g = lyapunov(&energy, &nu);
        if n == 0 {
            g0 = g;
        }
        let residual = parts.density.sub(&nu)?;
        let record = Record {
            step: n,
            t,
            energy,
            lyapunov: g,
            gronwall_bound: (g0 + alpha) * t.exp(),
            coulomb_residual: coulomb_energy(&residual).sqrt(),
            projector_defect: projector_defect(&gamma),
            norms: norms(model, &q),
            density: parts.density.clone(),
        };
        if record.projector_defect > config.max_projector_defect && failure.is_none() {
            failure = Some(format!("projector defect {:e} at t = {t} exceeds {:e}", record.projector_defect, config.max_projector_defect));
        }
        if record.lyapunov > record.gronwall_bound + 1e-6 * g0.abs() {
            violations.push(records.len());
        }
        on_record(&record, &gamma);
        records.push(record);
    }
    Ok(Trajectory {
        records,
        final_state: gamma,
        dt: config.dt,
        record_every: config.record_every,
        failure,
        gronwall_violations: violations,
    })
}

/// Per-step residuals |ΔE/Δt + D(ν̇(t_mid), ρ_mid)| with ρ_mid the average
/// of the end-point densities.
pub fn energy_derivative_check(traj: &Trajectory, ext: &ExternalCharge) -> Result<Vec<f64>> {
    if traj.record_every != 1 {
        return Err(BdfError::InvalidParameter("energy derivative check needs record_every = 1".into()));
    }
    traj.records
        .windows(2)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            let mid = 0.5 * (w[0].t + w[1].t);
            let rho = w[0].density.axpby(0.5, &w[1].density, 0.5)?;
            let source = coulomb_inner(&ext.rate(mid), &rho)?.re;
            Ok(((w[1].energy.total - w[0].energy.total) / dt + source).abs())
        })
        .collect()
}

/// Margins α(t)e^t - 𝒢(t) per record, with α(t) = 𝒢(0) + ½∫₀^t ‖ν̇‖²_𝒞
/// accumulated by the trapezoid rule over the record times.
pub fn gronwall_envelope(traj: &Trajectory, ext: &ExternalCharge) -> Vec<f64> {
    let Some(first) = traj.records.first() else {
        return Vec::new();
    };
    let g0 = first.lyapunov;
    let mut alpha = g0;
    let mut prev_t = first.t;
    let mut prev_rate = 0.5 * coulomb_energy(&ext.rate(first.t));
    traj.records
        .iter()
        .map(|r| {
            if r.t > prev_t {
                let rate = 0.5 * coulomb_energy(&ext.rate(r.t));
                alpha += 0.5 * (r.t - prev_t) * (prev_rate + rate);
                prev_rate = rate;
                prev_t = r.t;
            }
            alpha * r.t.exp() - r.lyapunov
        })
        .collect()
}

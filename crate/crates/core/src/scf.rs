//! Self-consistent ground states by damped fixed-point iteration on
//! spectral projectors.

use crate::energy::{bdf_energy_with, EnergyBreakdown};
use crate::error::{BdfError, Result};
use crate::linalg::{self, CMatrix, HermitianEigen};
use crate::mean_field::{assemble_mean_field, ExchangeKernel, MeanFieldOperator};
use crate::model::Model;
use crate::state::{deviation, ChargeDensity, OperatorKernel};
use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Eigenvalues of the mean-field operator closer to zero than this are
/// reported; those in (-GAP_WARNING, 0] are counted as occupied.
pub const GAP_WARNING: f64 = 1e-8;
const MAX_REDAMP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScfConfig {
    pub max_iterations: usize,
    /// Weight θ ∈ (0, 1] of the new projector in the density-matrix mix.
    pub mixing: f64,
    pub tol_projector: f64,
    pub tol_commutator: f64,
    /// Warn when the Fermi velocity lies below this value.
    pub critical_velocity: Option<f64>,
}

impl Default for ScfConfig {
    fn default() -> Self {
        ScfConfig { max_iterations: 100, mixing: 1.0, tol_projector: 1e-10, tol_commutator: 1e-9, critical_velocity: None }
    }
}

impl ScfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mixing > 0.0 && self.mixing <= 1.0) {
            return Err(BdfError::InvalidParameter(format!("mixing must lie in (0, 1], got {}", self.mixing)));
        }
        if !(self.tol_projector > 0.0 && self.tol_commutator > 0.0) {
            return Err(BdfError::InvalidParameter("SCF tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(BdfError::InvalidParameter("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Residuals and energy of one accepted iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScfIteration {
    pub iteration: usize,
    /// ‖γ_{n+1} - γ_n‖
    pub step_norm: f64,
    /// ‖[𝒟_{Q_{n+1}}, γ_{n+1}]‖
    pub commutator_norm: f64,
    pub energy: f64,
    /// Mixing weight actually used after re-damping.
    pub mixing: f64,
}

#[derive(Debug, Clone)]
pub struct ScfResult {
    pub q: OperatorKernel,
    pub gamma: OperatorKernel,
    pub iterations: usize,
    pub energy: EnergyBreakdown,
    pub history: Vec<ScfIteration>,
    pub warnings: Vec<String>,
}

/// (‖γ_{n+1} - γ_n‖, ‖[𝒟, γ_{n+1}]‖) in operator norm.
pub fn scf_residuals(previous: &OperatorKernel, next: &OperatorKernel, mean_field: &OperatorKernel) -> Result<(f64, f64)> {
    let step = next.sub(previous)?;
    if !mean_field.same_grid(next) {
        return Err(BdfError::Shape("mean-field operator lives on a different grid".into()));
    }
    let comm = linalg::commutator(mean_field.matrix(), next.matrix());
    Ok((linalg::hermitian_norm(step.matrix()), linalg::anti_hermitian_norm(&comm)))
}

/// Projector onto the eigenvalues of a Hermitian matrix above 1/2.
fn round_to_projector(m: &CMatrix) -> CMatrix {
    let eig = HermitianEigen::new(m);
    linalg::hermitian_part(&eig.projector(|l| l > 0.5))
}

struct Iterate {
    gamma: OperatorKernel,
    q: OperatorKernel,
    mf: MeanFieldOperator,
    energy: EnergyBreakdown,
}

fn evaluate(model: &Model, gamma: OperatorKernel, nu: &ChargeDensity) -> Result<Iterate> {
    let q = deviation(model, &gamma);
    let mf = assemble_mean_field(model, &q, nu, ExchangeKernel::Blocked)?;
    let energy = bdf_energy_with(model, &q, nu, &mf)?;
    Ok(Iterate { gamma, q, mf, energy })
}

/// Solve γ = 𝟙_{(-∞,0)}(𝒟_Q) starting from the free sea.
pub fn solve_ground_state(model: &Model, nu: &ChargeDensity, config: &ScfConfig) -> Result<ScfResult> {
    solve_ground_state_from(model, model.free_sea(), nu, config)
}

pub fn solve_ground_state_from(model: &Model, initial: OperatorKernel, nu: &ChargeDensity, config: &ScfConfig) -> Result<ScfResult> {
    config.validate()?;
    let mut warnings = Vec::new();
    if let Some(vc) = config.critical_velocity {
        if model.params().fermi_velocity < vc {
            let msg = format!(
                "Fermi velocity {} below the critical value {vc}; the energy need not be bounded below",
                model.params().fermi_velocity
            );
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    let mut current = evaluate(model, initial, nu)?;
    let mut history = Vec::new();
    let mut pairs = Vec::new();
    for iteration in 1..=config.max_iterations {
        let eig = HermitianEigen::new(current.mf.matrix());
        let near_zero = eig.values.iter().filter(|l| l.abs() < GAP_WARNING).count();
        if near_zero > 0 {
            let msg = format!("iteration {iteration}: {near_zero} mean-field eigenvalue(s) within {GAP_WARNING:e} of zero");
            warn!("{msg}");
            warnings.push(msg);
        }
        let target = linalg::hermitian_part(&eig.projector(|l| l <= 0.0));
        let mut theta = config.mixing;
        let mut accepted = None;
        for _ in 0..=MAX_REDAMP {
            let mixed = if theta == 1.0 {
                target.clone()
            } else {
                current.gamma.matrix() * Complex64::new(1.0 - theta, 0.0) + &target * Complex64::new(theta, 0.0)
            };
            let next = evaluate(model, current.gamma.with_matrix(round_to_projector(&mixed)), nu)?;
            let slack = 1e-10 * current.energy.total.abs().max(1e-12);
            if next.energy.total <= current.energy.total + slack {
                accepted = Some(next);
                break;
            }
            theta *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(BdfError::NonConvergence {
                iterations: iteration,
                reason: "energy increased at every damping level".into(),
                history: pairs,
            });
        };
        let (step, comm) = scf_residuals(&current.gamma, &next.gamma, next.mf.operator())?;
        pairs.push([step, comm]);
        history.push(ScfIteration { iteration, step_norm: step, commutator_norm: comm, energy: next.energy.total, mixing: theta });
        current = next;
        if step <= config.tol_projector && comm <= config.tol_commutator {
            return Ok(ScfResult { q: current.q, gamma: current.gamma, iterations: iteration, energy: current.energy, history, warnings });
        }
    }
    Err(BdfError::NonConvergence { iterations: config.max_iterations, reason: "residuals above tolerance".into(), history: pairs })
}

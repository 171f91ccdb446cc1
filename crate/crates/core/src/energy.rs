//! The BDF energy and the Lyapunov functional 𝒢 = ℰ + D(ν, ν)/2.

use crate::error::Result;
use crate::linalg;
use crate::mean_field::{exchange_operator, ExchangeKernel, InteractionParts, MeanFieldOperator};
use crate::model::Model;
use crate::state::{coulomb_energy, coulomb_inner, density, diagonal_difference, ChargeDensity, OperatorKernel};
use serde::Serialize;

/// The four terms of the BDF energy and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    /// tr(|𝒟⁰|(Q⁺⁺ - Q⁻⁻)) = tr(𝒟⁰ Q)
    pub kinetic: f64,
    /// -Re D(ρ_Q, ν)
    pub external: f64,
    /// D(ρ_Q, ρ_Q) / 2
    pub direct: f64,
    /// -tr(R_Q Q) / 2
    pub exchange: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn from_terms(kinetic: f64, external: f64, direct: f64, exchange: f64) -> Self {
        EnergyBreakdown { kinetic, external, direct, exchange, total: kinetic + external + direct + exchange }
    }
}

/// Kinetic term tr(|𝒟⁰|(Q⁺⁺ - Q⁻⁻)); only the diagonal blocks contribute.
pub fn kinetic_energy(model: &Model, q: &OperatorKernel) -> f64 {
    let diff = diagonal_difference(model, q);
    (0..model.grid().len()).map(|i| model.free_modulus(i) * diff.block(i, i).trace().re).sum()
}

/// ℰ(Q) for the external density ν.
pub fn bdf_energy(model: &Model, q: &OperatorKernel, nu: &ChargeDensity) -> Result<EnergyBreakdown> {
    let rho = density(q, model.lattice());
    let exchange = exchange_operator(model, q, ExchangeKernel::Blocked);
    energy_from_parts(model, q, nu, &rho, &exchange)
}

/// ℰ(Q) reusing the density and exchange operator of an assembled mean field.
pub fn bdf_energy_with(model: &Model, q: &OperatorKernel, nu: &ChargeDensity, mf: &MeanFieldOperator) -> Result<EnergyBreakdown> {
    energy_from_parts(model, q, nu, &mf.density, &mf.exchange)
}

/// ℰ(Q) from precomputed interaction parts.
pub fn bdf_energy_from_parts(model: &Model, q: &OperatorKernel, nu: &ChargeDensity, parts: &InteractionParts) -> Result<EnergyBreakdown> {
    energy_from_parts(model, q, nu, &parts.density, &parts.exchange)
}

fn energy_from_parts(
    model: &Model,
    q: &OperatorKernel,
    nu: &ChargeDensity,
    rho: &ChargeDensity,
    exchange: &OperatorKernel,
) -> Result<EnergyBreakdown> {
    let kinetic = kinetic_energy(model, q);
    let external = -coulomb_inner(rho, nu)?.re;
    let direct = 0.5 * coulomb_energy(rho);
    let exch = -0.5 * linalg::trace_product(exchange.matrix(), q.matrix()).re;
    Ok(EnergyBreakdown::from_terms(kinetic, external, direct, exch))
}

/// 𝒢 = ℰ + D(ν, ν)/2, non-negative under the stability condition.
pub fn lyapunov(energy: &EnergyBreakdown, nu: &ChargeDensity) -> f64 {
    energy.total + 0.5 * coulomb_energy(nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::state::{deviation, random_admissible_state};

    #[test]
    fn free_sea_has_zero_energy() {
        let m = Model::new(GridSpec::new(1.0, 8), 1.1).unwrap();
        let q = deviation(&m, &m.free_sea());
        let nu = ChargeDensity::zeros(m.lattice());
        let e = bdf_energy(&m, &q, &nu).unwrap();
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn kinetic_term_equals_trace_with_free_operator() {
        let m = Model::new(GridSpec::new(1.0, 8), 1.1).unwrap();
        let q = deviation(&m, &random_admissible_state(&m, 1, 0.5));
        let a = kinetic_energy(&m, &q);
        let b = linalg::trace_product(m.free_operator().matrix(), q.matrix()).re;
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        assert!(a > 0.0);
    }
}

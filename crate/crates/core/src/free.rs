//! Free (translation-invariant) objects: the exchange-renormalized velocity,
//! the free Dirac sea and the energy per unit area of translation-invariant
//! states.

use crate::error::{BdfError, Result};
use crate::quadrature::Adaptive;
use crate::radial::{nystrom_matrices, radial_nodes};
use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

pub type SpinorMatrix = Matrix2<Complex64>;

/// Default relative tolerance for evaluations of g.
pub const G_TOL: f64 = 1e-12;

/// Model parameters: bare Fermi velocity and ultraviolet cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub fermi_velocity: f64,
    pub cutoff: f64,
}

impl PhysicalParams {
    pub fn new(fermi_velocity: f64, cutoff: f64) -> Result<Self> {
        let p = PhysicalParams { fermi_velocity, cutoff };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fermi_velocity.is_finite() && self.fermi_velocity > 0.0) {
            return Err(BdfError::InvalidParameter(format!("Fermi velocity must be positive, got {}", self.fermi_velocity)));
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(BdfError::InvalidParameter(format!("cutoff must be positive, got {}", self.cutoff)));
        }
        Ok(())
    }

    /// Effective fine-structure constant α = 1 / v_F.
    pub fn coupling(&self) -> f64 {
        1.0 / self.fermi_velocity
    }
}

/// The exchange correction g(R) to the Fermi velocity:
///
/// g(R) = (2π)⁻¹ ∫₀^R r dr ∫₀^π cos θ (r² - 2r cos θ + 1)^{-1/2} dθ.
///
/// The radial integral is done in closed form; the remaining angular
/// integral has a logarithmic endpoint singularity at θ = 0 and is evaluated
/// adaptively to relative tolerance `tol`.
pub fn g_function(r: f64, tol: f64) -> Result<f64> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(BdfError::InvalidParameter(format!("g is defined for finite R >= 0, got {r}")));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let q = Adaptive { abs_tol: tol * r.powi(3).min(1.0), rel_tol: tol, max_depth: 20 };
    let integral = q.integrate_singular_left(|theta| angular_integrand(r, theta), 0.0, PI)?;
    Ok(integral.value / (2.0 * PI))
}

/// cos θ ∫₀^R r (r² - 2r cos θ + 1)^{-1/2} dr, with the θ-independent part of
/// the antiderivative (which integrates to zero against cos θ) removed.
fn angular_integrand(r: f64, theta: f64) -> f64 {
    let c = theta.cos();
    let half = (0.5 * theta).sin();
    let omc = 2.0 * half * half; // 1 - cos θ without cancellation
    let s = ((r - 1.0) * (r - 1.0) + 2.0 * r * omc).sqrt();
    // s - R, written to avoid cancellation for large R.
    let s_minus_r = (1.0 - 2.0 * r * c) / (s + r);
    let u = r - c;
    // (R - c + s) / (1 - c), choosing the form without cancellation.
    let ratio = if u >= 0.0 { (u + s) / omc } else { (1.0 + c) / (s - u) };
    c * (s_minus_r + c * ratio.ln())
}

/// Exchange-renormalized velocity v_F + g(Λ / |p|) at momentum `p`.
pub fn effective_velocity(p: [f64; 2], params: &PhysicalParams) -> Result<f64> {
    let norm = p[0].hypot(p[1]);
    check_domain(norm, params.cutoff)?;
    Ok(params.fermi_velocity + g_function(params.cutoff / norm, G_TOL)?)
}

fn check_domain(norm: f64, cutoff: f64) -> Result<()> {
    if !(norm > 0.0 && norm <= cutoff * (1.0 + 1e-12)) {
        return Err(BdfError::Domain { norm, cutoff });
    }
    Ok(())
}

/// σ·p
pub fn sigma_dot(p: [f64; 2]) -> SpinorMatrix {
    let z = Complex64::new(0.0, 0.0);
    SpinorMatrix::new(z, Complex64::new(p[0], -p[1]), Complex64::new(p[0], p[1]), z)
}

pub fn identity2() -> SpinorMatrix {
    SpinorMatrix::identity()
}

/// Spectral projector of σ·p onto the eigenvalue `sign` ∈ {+1, -1}.
pub fn band_projector(p: [f64; 2], sign: f64) -> Result<SpinorMatrix> {
    let norm = p[0].hypot(p[1]);
    if norm == 0.0 {
        return Err(BdfError::Domain { norm, cutoff: f64::INFINITY });
    }
    let unit = sigma_dot([p[0] / norm, p[1] / norm]);
    Ok((identity2() + unit * Complex64::new(sign, 0.0)) * Complex64::new(0.5, 0.0))
}

/// Symbol of the free Dirac sea, P⁰₋(p) = (1 - σ·p/|p|) / 2.
pub fn free_sea_projector(p: [f64; 2], params: &PhysicalParams) -> Result<SpinorMatrix> {
    check_domain(p[0].hypot(p[1]), params.cutoff)?;
    band_projector(p, -1.0)
}

/// Symbol of the free mean-field operator, v_eff(p) σ·p.
pub fn mean_field_free_symbol(p: [f64; 2], params: &PhysicalParams) -> Result<SpinorMatrix> {
    let v = effective_velocity(p, params)?;
    Ok(sigma_dot(p) * Complex64::new(v, 0.0))
}

/// A translation-invariant state γ = P⁰₋ + f with renormalized symbol
/// f(p) = c(|p|) σ·p/|p| for a radial profile |c| ≤ 1/2.
#[derive(Clone)]
pub struct TranslationInvariantState {
    profile: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for TranslationInvariantState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TranslationInvariantState").finish_non_exhaustive()
    }
}

impl TranslationInvariantState {
    pub fn new<F: Fn(f64) -> f64 + Send + Sync + 'static>(profile: F) -> Self {
        TranslationInvariantState { profile: Arc::new(profile) }
    }

    /// f = P⁰₋ - 1/2, the free sea itself.
    pub fn free_sea() -> Self {
        Self::new(|_| -0.5)
    }

    /// The state with profile ε·c.
    pub fn scaled(&self, eps: f64) -> Self {
        let inner = Arc::clone(&self.profile);
        TranslationInvariantState { profile: Arc::new(move |r| eps * inner(r)) }
    }

    pub fn profile(&self, r: f64) -> f64 {
        (self.profile)(r)
    }

    pub fn symbol(&self, p: [f64; 2]) -> Result<SpinorMatrix> {
        let norm = p[0].hypot(p[1]);
        if norm == 0.0 {
            return Err(BdfError::Domain { norm, cutoff: f64::INFINITY });
        }
        Ok(sigma_dot([p[0] / norm, p[1] / norm]) * Complex64::new(self.profile(norm), 0.0))
    }
}

/// Energy per unit area of a translation-invariant state:
///
/// ℱ = (2π)⁻² [ v_F ∫ tr(σ·p f(p)) dp - (4π)⁻¹ ∫∫ tr(f(p) f(q)) / |p - q| dp dq ],
///
/// reduced to radial integrals. With f = c σ·p̂ the angular integrals are the
/// first Coulomb mode K₁, and the radial double integral is done by Nyström
/// quadrature on `radial_resolution` nodes.
pub fn free_energy_density(state: &TranslationInvariantState, params: &PhysicalParams, radial_resolution: usize) -> Result<f64> {
    params.validate()?;
    if radial_resolution < 4 {
        return Err(BdfError::InvalidParameter("radial resolution must be at least 4".into()));
    }
    let lambda = params.cutoff;
    let (r, w) = radial_nodes(radial_resolution, lambda);
    let c: Vec<f64> = r.iter().map(|&r| state.profile(r)).collect();
    if let Some(bad) = c.iter().find(|c| !(c.abs() <= 0.5 + 1e-12)) {
        return Err(BdfError::NotAdmissible(format!("profile value {bad} outside [-1/2, 1/2]")));
    }
    let kinetic: f64 = 4.0 * PI * params.fermi_velocity * r.iter().zip(&w).zip(&c).map(|((r, w), c)| w * c * r * r).sum::<f64>();
    let a = nystrom_matrices(&r, &w, lambda, 1, 1e-11)?.pop().expect("channel 1");
    let cv = nalgebra::DVector::from_vec(c);
    let exchange = cv.dot(&(&a * &cv));
    Ok((kinetic - exchange) / (4.0 * PI * PI))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_reference_values() {
        // Independently checked with a two-dimensional quadrature.
        assert!((g_function(1.0, G_TOL).unwrap() - 0.13240596).abs() < 2e-8);
        assert!((g_function(2.0, G_TOL).unwrap() - 0.38209511).abs() < 2e-8);
    }

    #[test]
    fn g_asymptotics() {
        let limit = 0.5 * 2f64.ln() - 0.125;
        for r in [1e4, 1e6, 1e9] {
            let d = g_function(r, G_TOL).unwrap() - 0.25 * r.ln();
            assert!((d - limit).abs() < 20.0 / r, "R = {r}: {d}");
        }
        let small = 1e-3;
        let g = g_function(small, G_TOL).unwrap();
        assert!((g / (small.powi(3) / 12.0) - 1.0).abs() < 1e-2, "{g}");
        assert_eq!(g_function(0.0, G_TOL).unwrap(), 0.0);
        assert!(g_function(-1.0, G_TOL).is_err());
    }

    #[test]
    fn g_is_increasing() {
        let mut last = 0.0;
        for k in 1..60 {
            let r = 0.05 * 1.3f64.powi(k);
            let g = g_function(r, G_TOL).unwrap();
            assert!(g > last);
            last = g;
        }
    }

    #[test]
    fn velocity_domain() {
        let params = PhysicalParams::new(1.0, 1.0).unwrap();
        assert!(matches!(effective_velocity([0.0, 0.0], &params), Err(BdfError::Domain { .. })));
        assert!(matches!(effective_velocity([1.0, 1.0], &params), Err(BdfError::Domain { .. })));
        let v = effective_velocity([1.0, 0.0], &params).unwrap();
        assert!((v - 1.13240596).abs() < 1e-7);
    }

    #[test]
    fn free_sea_symbol_is_a_projector() {
        let params = PhysicalParams::new(1.1, 1.0).unwrap();
        let p = free_sea_projector([0.3, -0.4], &params).unwrap();
        assert!((p * p - p).norm() < 1e-15);
        assert!((p.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let d = mean_field_free_symbol([0.3, -0.4], &params).unwrap();
        // The free sea is the negative spectral projector of the symbol.
        assert!((d * p + p * Complex64::new(d.norm() / 2f64.sqrt(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn free_sea_has_lower_energy_than_its_mirror() {
        let params = PhysicalParams::new(1.1, 1.0).unwrap();
        let f0 = TranslationInvariantState::free_sea();
        let e0 = free_energy_density(&f0, &params, 64).unwrap();
        let e1 = free_energy_density(&f0.scaled(-1.0), &params, 64).unwrap();
        assert!(e0 < e1);
        let bad = TranslationInvariantState::new(|_| 0.7);
        assert!(free_energy_density(&bad, &params, 16).is_err());
    }
}

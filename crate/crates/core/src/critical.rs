//! Numerical estimate of h(v), the best constant in
//! ∫|φ|²/|x| ≤ h(v) ⟨φ, |p|(v + g(1/|p|)) φ⟩ on functions with momenta in
//! the unit disk, and of the critical velocity v_c = h⁻¹(2).

use crate::error::{BdfError, Result};
use crate::free::{g_function, G_TOL};
use crate::radial::{nystrom_matrices, radial_nodes, MAX_CHANNEL};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// Relative change of the top eigenvalue under halving of the radial
/// resolution beyond which a result is rejected.
pub const RESOLUTION_TOLERANCE: f64 = 0.01;
pub const DEFAULT_BRACKET: (f64, f64) = (0.05, 2.5);
const MOMENT_TOL: f64 = 1e-11;

/// The generalized eigenproblem A x = λ B x of angular channel m.
///
/// In momentum space ∫|φ|²/|x| dx = (2π)⁻¹ ∫∫ conj φ̂(p) φ̂(q) / |p - q| dp dq.
/// For φ̂(p) = u(|p|) e^{imθ}, both quadratic forms reduce to the radial
/// variable: A carries the Coulomb mode ∫∫ r s u(r) u(s) K_m(r, s) dr ds and B
/// the diagonal 2π ∫ r² (v + g(1/r)) u(r)² dr.
#[derive(Debug, Clone)]
pub struct ChannelProblem {
    pub m: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub attraction: DMatrix<f64>,
    /// 2π w_i r_i², multiplying v in B.
    kinetic_weight: Vec<f64>,
    /// 2π w_i r_i² g(1/r_i)
    kinetic_exchange: Vec<f64>,
}

impl ChannelProblem {
    /// Diagonal of B at velocity v.
    pub fn kinetic(&self, v: f64) -> Vec<f64> {
        self.kinetic_weight.iter().zip(&self.kinetic_exchange).map(|(w, g)| v * w + g).collect()
    }

    /// Largest λ with A x = λ B x.
    pub fn top_eigenvalue(&self, v: f64) -> f64 {
        let b = self.kinetic(v);
        let inv_sqrt: Vec<f64> = b.iter().map(|b| 1.0 / b.sqrt()).collect();
        let n = self.nodes.len();
        let c = DMatrix::from_fn(n, n, |i, j| self.attraction[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
        c.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// All channels m ≤ m_max at one radial resolution.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub radial_resolution: usize,
    pub channels: Vec<ChannelProblem>,
}

impl ChannelSet {
    pub fn new(radial_resolution: usize, m_max: usize) -> Result<Self> {
        if radial_resolution < 4 {
            return Err(BdfError::InvalidParameter("radial resolution must be at least 4".into()));
        }
        if m_max > MAX_CHANNEL {
            return Err(BdfError::InvalidParameter(format!("m_max must not exceed {MAX_CHANNEL}")));
        }
        let (nodes, weights) = radial_nodes(radial_resolution, 1.0);
        let mats = nystrom_matrices(&nodes, &weights, 1.0, m_max, MOMENT_TOL)?;
        let g: Vec<f64> = nodes.par_iter().map(|r| g_function(1.0 / r, G_TOL)).collect::<Result<_>>()?;
        let kinetic_weight: Vec<f64> = nodes.iter().zip(&weights).map(|(r, w)| 2.0 * PI * w * r * r).collect();
        let kinetic_exchange: Vec<f64> = kinetic_weight.iter().zip(&g).map(|(k, g)| k * g).collect();
        let channels = mats
            .into_iter()
            .enumerate()
            .map(|(m, attraction)| ChannelProblem {
                m,
                nodes: nodes.clone(),
                weights: weights.clone(),
                attraction,
                kinetic_weight: kinetic_weight.clone(),
                kinetic_exchange: kinetic_exchange.clone(),
            })
            .collect();
        Ok(ChannelSet { radial_resolution, channels })
    }

    /// Top eigenvalue of every channel at velocity v.
    pub fn channel_values(&self, v: f64) -> Vec<f64> {
        self.channels.par_iter().map(|c| c.top_eigenvalue(v)).collect()
    }

    /// h(v) and the channel attaining it.
    pub fn h(&self, v: f64) -> (f64, usize) {
        let values = self.channel_values(v);
        let (m, h) = values.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (m, &h)| if h > acc.1 { (m, h) } else { acc });
        (h, m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HEstimate {
    pub h: f64,
    pub channel: usize,
    /// Relative change against half the radial resolution.
    pub relative_change: f64,
}

fn check_velocity(v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(BdfError::InvalidParameter(format!("velocity must be positive, got {v}")));
    }
    Ok(())
}

/// h(v) at the given resolution, checked against half the resolution.
pub fn estimate_h(v: f64, radial_resolution: usize, m_max: usize) -> Result<HEstimate> {
    check_velocity(v)?;
    let fine = ChannelSet::new(radial_resolution, m_max)?;
    let coarse = ChannelSet::new(radial_resolution / 2, m_max)?;
    let (h, channel) = fine.h(v);
    let (hc, _) = coarse.h(v);
    let relative_change = (h - hc).abs() / h.abs();
    if relative_change > RESOLUTION_TOLERANCE {
        return Err(BdfError::Resolution { relative_change });
    }
    Ok(HEstimate { h, channel, relative_change })
}

#[derive(Debug, Clone, Serialize)]
pub struct ChannelRow {
    pub m: usize,
    pub h: Vec<f64>,
}

/// Result of the critical-velocity search.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalReport {
    pub v_f_grid: Vec<f64>,
    pub h_values: Vec<f64>,
    pub v_c: f64,
    pub alpha_c: f64,
    pub bracket: [f64; 2],
    pub bisection_steps: usize,
    pub radial_resolution: usize,
    pub m_max: usize,
    /// Relative change of h(v_c) when the radial resolution is halved.
    pub resolution_change: f64,
    pub channel_table: Vec<ChannelRow>,
}

/// Bisection for h(v) = 2 on the default bracket.
pub fn estimate_v_c(tol_v: f64, radial_resolution: usize, m_max: usize, v_f_grid: &[f64]) -> Result<CriticalReport> {
    if !(tol_v > 0.0) {
        return Err(BdfError::InvalidParameter("tol_v must be positive".into()));
    }
    for &v in v_f_grid {
        check_velocity(v)?;
    }
    let set = ChannelSet::new(radial_resolution, m_max)?;
    let (mut lo, mut hi) = DEFAULT_BRACKET;
    if set.h(lo).0 < 2.0 || set.h(hi).0 > 2.0 {
        return Err(BdfError::Bracket { lo, hi });
    }
    let mut steps = 0;
    while hi - lo > tol_v {
        let mid = 0.5 * (lo + hi);
        if set.h(mid).0 > 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    let v_c = 0.5 * (lo + hi);
    let coarse = ChannelSet::new(radial_resolution / 2, m_max)?;
    let h_fine = set.h(v_c).0;
    let resolution_change = (h_fine - coarse.h(v_c).0).abs() / h_fine;
    if resolution_change > RESOLUTION_TOLERANCE {
        return Err(BdfError::Resolution { relative_change: resolution_change });
    }
    let table: Vec<Vec<f64>> = v_f_grid.iter().map(|&v| set.channel_values(v)).collect();
    let h_values = table.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let channel_table = (0..=m_max).map(|m| ChannelRow { m, h: table.iter().map(|row| row[m]).collect() }).collect();
    Ok(CriticalReport {
        v_f_grid: v_f_grid.to_vec(),
        h_values,
        v_c,
        alpha_c: 1.0 / v_c,
        bracket: [lo, hi],
        bisection_steps: steps,
        radial_resolution,
        m_max,
        resolution_change,
        channel_table,
    })
}

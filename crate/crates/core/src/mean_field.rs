//! Direct (Hartree) and exchange interaction operators and the mean-field
//! operator 𝒟_Q = 𝒟⁰ + (ρ_Q - ν) * |x|⁻¹ - R_Q.

use crate::error::{BdfError, Result};
use crate::linalg::{self, CMatrix};
use crate::model::Model;
use crate::state::{density, ChargeDensity, OperatorKernel};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

/// Assembly strategy for the exchange operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExchangeKernel {
    /// Straightforward triple loop; the reference implementation.
    Naive,
    /// Grouped by coordinate difference and evaluated with real GEMMs in parallel.
    #[default]
    Blocked,
}

/// Multiplication operator by the potential ρ * |x|⁻¹:
/// M_ij = κ(c_i - c_j) ρ̂(c_i - c_j) I₂.
pub fn direct_potential(model: &Model, rho: &ChargeDensity) -> Result<OperatorKernel> {
    let lattice = model.lattice();
    if !(Arc::ptr_eq(lattice, rho.lattice()) || **lattice == **rho.lattice()) {
        return Err(BdfError::LatticeMismatch);
    }
    let grid = model.grid();
    let n = grid.len();
    let kappa = lattice.kappa();
    let values = rho.values();
    let mut m = CMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        let cj = grid.coord(j);
        for i in 0..n {
            let ci = grid.coord(i);
            let l = lattice.index_of([ci[0] - cj[0], ci[1] - cj[1]]).expect("difference lies on the lattice");
            let v = values[l] * kappa[l];
            m[(2 * i, 2 * j)] = v;
            m[(2 * i + 1, 2 * j + 1)] = v;
        }
    }
    OperatorKernel::from_matrix(grid, m)
}

/// Exchange operator with kernel Q(x, y) / |x - y|:
/// R_ij = (2π)⁻¹ Σ_k κ(k) M_{i-k, j-k}, the sum running over all shifts that
/// keep both nodes on the grid.
pub fn exchange_operator(model: &Model, q: &OperatorKernel, kernel: ExchangeKernel) -> OperatorKernel {
    match kernel {
        ExchangeKernel::Naive => exchange_naive(model, q),
        ExchangeKernel::Blocked => exchange_blocked(model, q),
    }
}

fn exchange_naive(model: &Model, q: &OperatorKernel) -> OperatorKernel {
    let grid = model.grid();
    let lattice = model.lattice();
    let n = grid.len();
    let m = q.matrix();
    let mut out = CMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let ci = grid.coord(i);
        for j in 0..n {
            let cj = grid.coord(j);
            let mut acc = [Complex64::new(0.0, 0.0); 4];
            for ck in lattice.points() {
                let (Some(a), Some(b)) = (grid.index_of([ci[0] - ck[0], ci[1] - ck[1]]), grid.index_of([cj[0] - ck[0], cj[1] - ck[1]]))
                else {
                    continue;
                };
                let w = lattice.kappa_at(*ck);
                acc[0] += m[(2 * a, 2 * b)] * w;
                acc[1] += m[(2 * a, 2 * b + 1)] * w;
                acc[2] += m[(2 * a + 1, 2 * b)] * w;
                acc[3] += m[(2 * a + 1, 2 * b + 1)] * w;
            }
            let s = 1.0 / (2.0 * PI);
            out[(2 * i, 2 * j)] = acc[0] * s;
            out[(2 * i, 2 * j + 1)] = acc[1] * s;
            out[(2 * i + 1, 2 * j)] = acc[2] * s;
            out[(2 * i + 1, 2 * j + 1)] = acc[3] * s;
        }
    }
    q.with_matrix(out)
}

/// For a fixed difference d = c_j - c_i the exchange sum is a dense real
/// matrix (κ(c_i - c_a)) acting on the blocks M(a, a + d), with i and a
/// ranging over the nodes whose d-shift stays on the grid.
fn exchange_blocked(model: &Model, q: &OperatorKernel) -> OperatorKernel {
    let grid = model.grid();
    let lattice = model.lattice();
    let m = q.matrix();
    let s = 1.0 / (2.0 * PI);
    let pieces: Vec<(Vec<(usize, usize)>, DMatrix<f64>)> = lattice
        .points()
        .par_iter()
        .map(|d| {
            let pairs: Vec<(usize, usize)> = (0..grid.len())
                .filter_map(|a| {
                    let ca = grid.coord(a);
                    grid.index_of([ca[0] + d[0], ca[1] + d[1]]).map(|b| (a, b))
                })
                .collect();
            let k = pairs.len();
            let kappa = DMatrix::from_fn(k, k, |r, c| {
                let (ci, ca) = (grid.coord(pairs[r].0), grid.coord(pairs[c].0));
                lattice.kappa_at([ci[0] - ca[0], ci[1] - ca[1]])
            });
            let blocks = DMatrix::from_fn(k, 8, |r, c| {
                let (a, b) = pairs[r];
                let z = m[(2 * a + (c >> 2), 2 * b + ((c >> 1) & 1))];
                if c & 1 == 0 {
                    z.re
                } else {
                    z.im
                }
            });
            (pairs, kappa * blocks)
        })
        .collect();
    let n = grid.len();
    let mut out = CMatrix::zeros(2 * n, 2 * n);
    for (pairs, prod) in pieces {
        for (r, &(i, j)) in pairs.iter().enumerate() {
            for e in 0..4 {
                out[(2 * i + (e >> 1), 2 * j + (e & 1))] = Complex64::new(prod[(r, 2 * e)], prod[(r, 2 * e + 1)]) * s;
            }
        }
    }
    q.with_matrix(out)
}

/// The assembled mean-field operator and its summands.
#[derive(Debug, Clone)]
pub struct MeanFieldOperator {
    pub free: OperatorKernel,
    /// Φ(ρ_Q - ν)
    pub direct: OperatorKernel,
    /// R_Q
    pub exchange: OperatorKernel,
    /// ρ_Q, reused by energy evaluation.
    pub density: ChargeDensity,
    total: OperatorKernel,
}

impl MeanFieldOperator {
    pub fn operator(&self) -> &OperatorKernel {
        &self.total
    }

    pub fn matrix(&self) -> &CMatrix {
        self.total.matrix()
    }
}

/// The ν-independent ingredients of 𝒟_Q: the density ρ_Q and the exchange
/// operator R_Q. Time stepping reuses them across different ν(t).
#[derive(Debug, Clone)]
pub struct InteractionParts {
    pub density: ChargeDensity,
    pub exchange: OperatorKernel,
}

pub fn interaction_parts(model: &Model, q: &OperatorKernel, kernel: ExchangeKernel) -> InteractionParts {
    InteractionParts { density: density(q, model.lattice()), exchange: exchange_operator(model, q, kernel) }
}

/// 𝒟_Q = 𝒟⁰ + Φ(ρ_Q - ν) - R_Q.
pub fn assemble_mean_field(model: &Model, q: &OperatorKernel, nu: &ChargeDensity, kernel: ExchangeKernel) -> Result<MeanFieldOperator> {
    mean_field_from_parts(model, &interaction_parts(model, q, kernel), nu)
}

pub fn mean_field_from_parts(model: &Model, parts: &InteractionParts, nu: &ChargeDensity) -> Result<MeanFieldOperator> {
    let source = parts.density.sub(nu)?;
    let direct = direct_potential(model, &source)?;
    let free = model.free_operator();
    let sum = free.matrix() + direct.matrix() - parts.exchange.matrix();
    // Remove rounding asymmetry; every summand is Hermitian for Hermitian Q
    // and real densities.
    let total = free.with_matrix(linalg::hermitian_part(&sum));
    Ok(MeanFieldOperator { free, direct, exchange: parts.exchange.clone(), density: parts.density.clone(), total })
}

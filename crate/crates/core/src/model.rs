//! The discretized model: grid, difference lattice, parameters and the
//! per-node data of the free operators.

use crate::error::Result;
use crate::free::{band_projector, g_function, sigma_dot, PhysicalParams, SpinorMatrix, G_TOL};
use crate::grid::{DifferenceLattice, GridSpec, MomentumGrid};
use crate::state::OperatorKernel;
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Everything that depends only on the discretization and the parameters.
#[derive(Debug, Clone)]
pub struct Model {
    grid: Arc<MomentumGrid>,
    lattice: Arc<DifferenceLattice>,
    params: PhysicalParams,
    velocity: Vec<f64>,
    sea: Vec<SpinorMatrix>,
}

impl Model {
    pub fn new(spec: GridSpec, fermi_velocity: f64) -> Result<Self> {
        let params = PhysicalParams::new(fermi_velocity, spec.cutoff)?;
        let grid = Arc::new(MomentumGrid::new(spec)?);
        Self::from_grid(grid, params)
    }

    pub fn from_grid(grid: Arc<MomentumGrid>, params: PhysicalParams) -> Result<Self> {
        params.validate()?;
        let lattice = Arc::new(DifferenceLattice::new(&grid));
        // g only depends on |p|, which takes few distinct values on the grid.
        let mut cache: BTreeMap<u64, f64> = BTreeMap::new();
        let mut velocity = Vec::with_capacity(grid.len());
        let mut sea = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let p = grid.momentum(i);
            let norm = grid.norm(i);
            if norm == 0.0 {
                return Err(crate::BdfError::Domain { norm, cutoff: params.cutoff });
            }
            let g = match cache.get(&grid.norm_key(i)) {
                Some(g) => *g,
                None => {
                    let g = g_function(params.cutoff / norm, G_TOL)?;
                    cache.insert(grid.norm_key(i), g);
                    g
                }
            };
            velocity.push(params.fermi_velocity + g);
            sea.push(band_projector(p, -1.0)?);
        }
        Ok(Model { grid, lattice, params, velocity, sea })
    }

    pub fn grid(&self) -> &Arc<MomentumGrid> {
        &self.grid
    }

    pub fn lattice(&self) -> &Arc<DifferenceLattice> {
        &self.lattice
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// v_eff(p_i) = v_F + g(Λ/|p_i|).
    pub fn velocity(&self, i: usize) -> f64 {
        self.velocity[i]
    }

    /// |𝒟⁰|(p_i) = v_eff(p_i) |p_i|, the modulus of the free symbol.
    pub fn free_modulus(&self, i: usize) -> f64 {
        self.velocity[i] * self.grid.norm(i)
    }

    /// P⁰₋(p_i)
    pub fn sea_block(&self, i: usize) -> &SpinorMatrix {
        &self.sea[i]
    }

    /// P⁰₊(p_i)
    pub fn particle_block(&self, i: usize) -> SpinorMatrix {
        SpinorMatrix::identity() - self.sea[i]
    }

    /// 𝒟⁰(p_i) = v_eff(p_i) σ·p_i
    pub fn free_block(&self, i: usize) -> SpinorMatrix {
        sigma_dot(self.grid.momentum(i)) * Complex64::new(self.velocity[i], 0.0)
    }

    /// The free Dirac sea P⁰₋ as a discrete operator.
    pub fn free_sea(&self) -> OperatorKernel {
        OperatorKernel::block_diagonal(&self.grid, |i| self.sea[i])
    }

    /// The free mean-field operator 𝒟⁰.
    pub fn free_operator(&self) -> OperatorKernel {
        OperatorKernel::block_diagonal(&self.grid, |i| self.free_block(i))
    }
}

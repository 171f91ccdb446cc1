//! Discrete operators, charge densities and the Coulomb form.

use crate::error::{BdfError, Result};
use crate::free::SpinorMatrix;
use crate::grid::{DifferenceLattice, MomentumGrid};
use crate::linalg::{self, CMatrix, HermitianEigen};
use crate::model::Model;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

/// A spinor-valued operator on a momentum grid, stored as the dense
/// 2M × 2M matrix M_ij = δ² K̂(p_i, p_j). Node `i` occupies rows and columns
/// `2i` and `2i + 1`.
///
/// With this normalization operator products, traces and adjoints are
/// plain matrix operations.
#[derive(Debug, Clone)]
pub struct OperatorKernel {
    grid: Arc<MomentumGrid>,
    matrix: CMatrix,
}

impl OperatorKernel {
    pub fn from_matrix(grid: &Arc<MomentumGrid>, matrix: CMatrix) -> Result<Self> {
        let d = grid.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(BdfError::Shape(format!("expected {d}x{d}, got {}x{}", matrix.nrows(), matrix.ncols())));
        }
        Ok(OperatorKernel { grid: Arc::clone(grid), matrix })
    }

    pub fn zeros(grid: &Arc<MomentumGrid>) -> Self {
        let d = grid.dim();
        OperatorKernel { grid: Arc::clone(grid), matrix: CMatrix::zeros(d, d) }
    }

    pub fn identity(grid: &Arc<MomentumGrid>) -> Self {
        let d = grid.dim();
        OperatorKernel { grid: Arc::clone(grid), matrix: CMatrix::identity(d, d) }
    }

    /// Fourier multiplier with symbol `block(i)` at node `i`.
    pub fn block_diagonal<F: Fn(usize) -> SpinorMatrix>(grid: &Arc<MomentumGrid>, block: F) -> Self {
        let mut k = Self::zeros(grid);
        for i in 0..grid.len() {
            k.set_block(i, i, &block(i));
        }
        k
    }

    pub fn grid(&self) -> &Arc<MomentumGrid> {
        &self.grid
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut CMatrix {
        &mut self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Same underlying grid (by identity or by value).
    pub fn same_grid(&self, other: &OperatorKernel) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    fn check_grid(&self, other: &OperatorKernel) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(BdfError::Shape("operators live on different grids".into()))
        }
    }

    pub fn block(&self, i: usize, j: usize) -> SpinorMatrix {
        let m = &self.matrix;
        SpinorMatrix::new(m[(2 * i, 2 * j)], m[(2 * i, 2 * j + 1)], m[(2 * i + 1, 2 * j)], m[(2 * i + 1, 2 * j + 1)])
    }

    pub fn set_block(&mut self, i: usize, j: usize, b: &SpinorMatrix) {
        for r in 0..2 {
            for c in 0..2 {
                self.matrix[(2 * i + r, 2 * j + c)] = b[(r, c)];
            }
        }
    }

    pub fn with_matrix(&self, matrix: CMatrix) -> OperatorKernel {
        assert_eq!(matrix.shape(), self.matrix.shape());
        OperatorKernel { grid: Arc::clone(&self.grid), matrix }
    }

    pub fn add(&self, other: &OperatorKernel) -> Result<OperatorKernel> {
        self.check_grid(other)?;
        Ok(self.with_matrix(&self.matrix + &other.matrix))
    }

    pub fn sub(&self, other: &OperatorKernel) -> Result<OperatorKernel> {
        self.check_grid(other)?;
        Ok(self.with_matrix(&self.matrix - &other.matrix))
    }

    pub fn scale(&self, s: f64) -> OperatorKernel {
        self.with_matrix(&self.matrix * Complex64::new(s, 0.0))
    }

    pub fn mul(&self, other: &OperatorKernel) -> Result<OperatorKernel> {
        self.check_grid(other)?;
        Ok(self.with_matrix(linalg::mul(&self.matrix, &other.matrix)))
    }

    pub fn adjoint(&self) -> OperatorKernel {
        self.with_matrix(self.matrix.adjoint())
    }

    pub fn trace(&self) -> Complex64 {
        linalg::trace(&self.matrix)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.matrix)
    }

    pub fn frobenius(&self) -> f64 {
        linalg::frobenius(&self.matrix)
    }
}

/// Fourier coefficients ρ̂(k) of a charge density on the difference lattice.
#[derive(Debug, Clone)]
pub struct ChargeDensity {
    lattice: Arc<DifferenceLattice>,
    values: Vec<Complex64>,
}

impl ChargeDensity {
    pub fn new(lattice: &Arc<DifferenceLattice>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(BdfError::Shape(format!("density has {} values for {} lattice points", values.len(), lattice.len())));
        }
        Ok(ChargeDensity { lattice: Arc::clone(lattice), values })
    }

    pub fn zeros(lattice: &Arc<DifferenceLattice>) -> Self {
        ChargeDensity { lattice: Arc::clone(lattice), values: vec![Complex64::new(0.0, 0.0); lattice.len()] }
    }

    /// Sample a density given as a function of the wave vector.
    pub fn from_fn<F: Fn([f64; 2]) -> Complex64>(lattice: &Arc<DifferenceLattice>, f: F) -> Self {
        let values = (0..lattice.len()).map(|l| f(lattice.wave_vector(l))).collect();
        ChargeDensity { lattice: Arc::clone(lattice), values }
    }

    pub fn lattice(&self) -> &Arc<DifferenceLattice> {
        &self.lattice
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn same_lattice(&self, other: &ChargeDensity) -> bool {
        Arc::ptr_eq(&self.lattice, &other.lattice) || *self.lattice == *other.lattice
    }

    fn combine(&self, other: &ChargeDensity, a: f64, b: f64) -> Result<ChargeDensity> {
        if !self.same_lattice(other) {
            return Err(BdfError::LatticeMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x * a + y * b).collect();
        Ok(ChargeDensity { lattice: Arc::clone(&self.lattice), values })
    }

    pub fn add(&self, other: &ChargeDensity) -> Result<ChargeDensity> {
        self.combine(other, 1.0, 1.0)
    }

    pub fn sub(&self, other: &ChargeDensity) -> Result<ChargeDensity> {
        self.combine(other, 1.0, -1.0)
    }

    /// a·self + b·other
    pub fn axpby(&self, a: f64, other: &ChargeDensity, b: f64) -> Result<ChargeDensity> {
        self.combine(other, a, b)
    }

    pub fn scale(&self, s: f64) -> ChargeDensity {
        ChargeDensity { lattice: Arc::clone(&self.lattice), values: self.values.iter().map(|v| v * s).collect() }
    }

    /// max_k |ρ̂(k)|
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Largest violation of ρ̂(-k) = conj ρ̂(k), the condition for a real density.
    pub fn reality_defect(&self) -> f64 {
        (0..self.values.len()).map(|l| (self.values[self.lattice.negated(l)] - self.values[l].conj()).norm()).fold(0.0, f64::max)
    }
}

/// Density of an operator: ρ̂(k) = (2π)⁻¹ Σ_{c_i - c_j = k} tr M_ij.
pub fn density(q: &OperatorKernel, lattice: &Arc<DifferenceLattice>) -> ChargeDensity {
    let grid = q.grid();
    let mut values = vec![Complex64::new(0.0, 0.0); lattice.len()];
    let m = q.matrix();
    for j in 0..grid.len() {
        let cj = grid.coord(j);
        for i in 0..grid.len() {
            let ci = grid.coord(i);
            let l = lattice.index_of([ci[0] - cj[0], ci[1] - cj[1]]).expect("difference lies on the lattice");
            values[l] += m[(2 * i, 2 * j)] + m[(2 * i + 1, 2 * j + 1)];
        }
    }
    let s = 1.0 / (2.0 * PI);
    values.iter_mut().for_each(|v| *v *= s);
    ChargeDensity { lattice: Arc::clone(lattice), values }
}

/// Coulomb form D(ρ₁, ρ₂) = 2π Σ_k κ(k) conj ρ̂₁(k) ρ̂₂(k), the discrete
/// version of ∫∫ conj ρ₁(x) ρ₂(y) / |x - y| dx dy.
pub fn coulomb_inner(a: &ChargeDensity, b: &ChargeDensity) -> Result<Complex64> {
    if !a.same_lattice(b) {
        return Err(BdfError::LatticeMismatch);
    }
    let kappa = a.lattice.kappa();
    let s: Complex64 = a.values.iter().zip(&b.values).zip(kappa).map(|((x, y), k)| x.conj() * y * k).sum();
    Ok(s * (2.0 * PI))
}

/// D(ρ, ρ), real and non-negative.
pub fn coulomb_energy(rho: &ChargeDensity) -> f64 {
    2.0 * PI * rho.values.iter().zip(rho.lattice.kappa()).map(|(v, k)| v.norm_sqr() * k).sum::<f64>()
}

/// Spectral sign of the free mean-field operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Plus,
    Minus,
}

fn band_block(model: &Model, i: usize, band: Band) -> SpinorMatrix {
    match band {
        Band::Plus => model.particle_block(i),
        Band::Minus => *model.sea_block(i),
    }
}

/// Q^{εε′} = P⁰_ε Q P⁰_ε′.
pub fn band_block_of(model: &Model, q: &OperatorKernel, left: Band, right: Band) -> OperatorKernel {
    let n = model.grid().len();
    let mut out = OperatorKernel::zeros(q.grid());
    let pl: Vec<SpinorMatrix> = (0..n).map(|i| band_block(model, i, left)).collect();
    let pr: Vec<SpinorMatrix> = (0..n).map(|i| band_block(model, i, right)).collect();
    for j in 0..n {
        for i in 0..n {
            let b = pl[i] * q.block(i, j) * pr[j];
            out.set_block(i, j, &b);
        }
    }
    out
}

/// Q⁺⁺ - Q⁻⁻.
pub fn diagonal_difference(model: &Model, q: &OperatorKernel) -> OperatorKernel {
    let pp = band_block_of(model, q, Band::Plus, Band::Plus);
    let mm = band_block_of(model, q, Band::Minus, Band::Minus);
    pp.with_matrix(pp.matrix() - mm.matrix())
}

/// Diagnostic norms of a state Q = γ - P⁰₋.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateNorms {
    /// ‖ |𝒟⁰|^{1/2} (Q⁺⁺ - Q⁻⁻) |𝒟⁰|^{1/2} ‖ in trace norm.
    pub kinetic_trace_norm: f64,
    /// ‖ |𝒟⁰|^{1/2} Q ‖ in Hilbert–Schmidt norm.
    pub hs_weighted_norm: f64,
    /// D(ρ_Q, ρ_Q)^{1/2}.
    pub coulomb_norm: f64,
    /// Sum of the three components.
    pub y_norm: f64,
}

impl StateNorms {
    fn new(kinetic_trace_norm: f64, hs_weighted_norm: f64, coulomb_norm: f64) -> Self {
        StateNorms { kinetic_trace_norm, hs_weighted_norm, coulomb_norm, y_norm: kinetic_trace_norm + hs_weighted_norm + coulomb_norm }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.kinetic_trace_norm, self.hs_weighted_norm, self.coulomb_norm]
    }
}

/// Multiply rows and columns by s_i = |𝒟⁰|^{1/2}(p_i).
fn sandwich_sqrt_modulus(model: &Model, a: &CMatrix) -> CMatrix {
    let s: Vec<f64> = (0..model.grid().len()).map(|i| model.free_modulus(i).sqrt()).collect();
    CMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)] * (s[r / 2] * s[c / 2]))
}

pub fn norms(model: &Model, q: &OperatorKernel) -> StateNorms {
    let diff = diagonal_difference(model, q);
    let sandwiched = sandwich_sqrt_modulus(model, diff.matrix());
    let kinetic_trace_norm = linalg::hermitian_trace_norm(&sandwiched);
    let m = q.matrix();
    let mut hs = 0.0;
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            hs += model.free_modulus(r / 2) * m[(r, c)].norm_sqr();
        }
    }
    let rho = density(q, model.lattice());
    StateNorms::new(kinetic_trace_norm, hs.sqrt(), coulomb_energy(&rho).sqrt())
}

/// tr(|𝒟⁰| Q²) = ‖ |𝒟⁰|^{1/2} Q ‖²_HS.
pub fn weighted_hs_squared(model: &Model, q: &OperatorKernel) -> f64 {
    norms(model, q).hs_weighted_norm.powi(2)
}

/// ‖γ² - γ‖ in operator norm.
pub fn projector_defect(gamma: &OperatorKernel) -> f64 {
    let m = gamma.matrix();
    linalg::hermitian_norm(&(linalg::mul(m, m) - m))
}

/// Q = γ - P⁰₋.
pub fn deviation(model: &Model, gamma: &OperatorKernel) -> OperatorKernel {
    gamma.with_matrix(gamma.matrix() - model.free_sea().matrix())
}

/// A reproducible random admissible state γ = U P⁰₋ U† with U = exp(iεH),
/// H a Gaussian Hermitian matrix normalized to operator norm one.
pub fn random_admissible_state(model: &Model, seed: u64, strength: f64) -> OperatorKernel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.dim();
    let mut h = CMatrix::zeros(d, d);
    for c in 0..d {
        for r in 0..=c {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = if r == c { 0.0 } else { StandardNormal.sample(&mut rng) };
            h[(r, c)] = Complex64::new(re, im);
            h[(c, r)] = Complex64::new(re, -im);
        }
    }
    let eig = HermitianEigen::new(&h);
    let scale = eig.values.iter().fold(0.0f64, |m, l| m.max(l.abs())).max(f64::MIN_POSITIVE);
    let u = eig.propagator(-strength / scale);
    let p = model.free_sea();
    let gamma = linalg::mul3(&u, p.matrix(), &u.adjoint());
    p.with_matrix(linalg::hermitian_part(&gamma))
}

//! Uniform momentum grid on the disk of radius Λ and its lattice of
//! coordinate differences.

use crate::error::{BdfError, Result};
use serde::{Deserialize, Serialize};

/// Parameters of the momentum discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Ultraviolet cutoff Λ.
    pub cutoff: f64,
    /// Number of grid points along each axis of the bounding square.
    pub points_per_axis: usize,
    /// Shift the lattice by half a spacing so that no node sits at p = 0.
    pub offset: bool,
}

impl GridSpec {
    pub fn new(cutoff: f64, points_per_axis: usize) -> Self {
        GridSpec { cutoff, points_per_axis, offset: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(BdfError::InvalidGrid(format!("cutoff must be positive, got {}", self.cutoff)));
        }
        let n = self.points_per_axis;
        if n < 2 || n % 2 != 0 {
            return Err(BdfError::InvalidGrid(format!("points_per_axis must be even and >= 2, got {n}")));
        }
        if !self.offset && n < 4 {
            return Err(BdfError::InvalidGrid("unshifted grid needs points_per_axis >= 4".into()));
        }
        if n > 4096 {
            return Err(BdfError::InvalidGrid(format!("points_per_axis {n} is unreasonably large")));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.cutoff / self.points_per_axis as f64
    }
}

/// Dense lookup from integer coordinates in a square box to an index.
#[derive(Debug, Clone, PartialEq)]
struct CoordTable {
    half: i32,
    side: usize,
    slots: Vec<u32>,
}

const EMPTY: u32 = u32::MAX;

impl CoordTable {
    fn new(half: i32) -> Self {
        let side = (2 * half + 1) as usize;
        CoordTable { half, side, slots: vec![EMPTY; side * side] }
    }

    #[inline]
    fn slot(&self, c: [i32; 2]) -> Option<usize> {
        let x = c[0] + self.half;
        let y = c[1] + self.half;
        if x < 0 || y < 0 || x as usize >= self.side || y as usize >= self.side {
            return None;
        }
        Some(x as usize * self.side + y as usize)
    }

    fn insert(&mut self, c: [i32; 2], idx: usize) {
        let s = self.slot(c).expect("coordinate inside table");
        self.slots[s] = idx as u32;
    }

    #[inline]
    fn get(&self, c: [i32; 2]) -> Option<usize> {
        self.slot(c).and_then(|s| match self.slots[s] {
            EMPTY => None,
            v => Some(v as usize),
        })
    }
}

/// Momentum nodes inside the closed disk |p| ≤ Λ.
///
/// Node `i` has integer coordinates `c_i` and momentum `(c_i + s) δ` with
/// `s = 1/2` on the shifted grid and `s = 0` otherwise. Nodes are ordered
/// lexicographically by coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumGrid {
    spec: GridSpec,
    spacing: f64,
    shift: f64,
    coords: Vec<[i32; 2]>,
    momenta: Vec<[f64; 2]>,
    table: CoordTable,
}

impl MomentumGrid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.points_per_axis as i64;
        let half = (n / 2) as i32;
        let mut coords = Vec::new();
        let (lo, hi) = if spec.offset { (-half, half - 1) } else { (-half, half) };
        for cx in lo..=hi {
            for cy in lo..=hi {
                // Exact integer test for |p| <= Λ.
                let inside = if spec.offset {
                    let (a, b) = (2 * cx as i64 + 1, 2 * cy as i64 + 1);
                    a * a + b * b <= n * n
                } else {
                    let (a, b) = (2 * cx as i64, 2 * cy as i64);
                    a * a + b * b <= n * n
                };
                if inside {
                    coords.push([cx, cy]);
                }
            }
        }
        Self::from_coords(spec, coords)
    }

    /// Build a grid from an explicit list of coordinates. The set must be
    /// symmetric under p ↦ -p and contained in the disk.
    pub fn from_coords(spec: GridSpec, mut coords: Vec<[i32; 2]>) -> Result<Self> {
        spec.validate()?;
        if coords.is_empty() {
            return Err(BdfError::InvalidGrid("grid has no nodes".into()));
        }
        coords.sort();
        coords.dedup();
        let spacing = spec.spacing();
        let shift = if spec.offset { 0.5 } else { 0.0 };
        let half = spec.points_per_axis as i32 / 2 + 1;
        let mut table = CoordTable::new(half);
        let mut momenta = Vec::with_capacity(coords.len());
        for (i, c) in coords.iter().enumerate() {
            if table.slot(*c).is_none() {
                return Err(BdfError::InvalidGrid(format!("coordinate {c:?} outside the bounding box")));
            }
            table.insert(*c, i);
            let p = [(c[0] as f64 + shift) * spacing, (c[1] as f64 + shift) * spacing];
            if p[0].hypot(p[1]) > spec.cutoff * (1.0 + 1e-12) {
                return Err(BdfError::InvalidGrid(format!("node {c:?} lies outside the disk")));
            }
            momenta.push(p);
        }
        let grid = MomentumGrid { spec, spacing, shift, coords, momenta, table };
        for i in 0..grid.len() {
            if grid.index_of(grid.reflected_coord(i)).is_none() {
                return Err(BdfError::InvalidGrid("node set is not symmetric under p -> -p".into()));
            }
        }
        Ok(grid)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Number of momentum nodes M.
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Matrix dimension 2M of spinor-valued operators.
    pub fn dim(&self) -> usize {
        2 * self.coords.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cutoff(&self) -> f64 {
        self.spec.cutoff
    }

    /// Quadrature weight δ² attached to every node.
    pub fn weight(&self) -> f64 {
        self.spacing * self.spacing
    }

    pub fn coords(&self) -> &[[i32; 2]] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> [i32; 2] {
        self.coords[i]
    }

    pub fn momenta(&self) -> &[[f64; 2]] {
        &self.momenta
    }

    pub fn momentum(&self, i: usize) -> [f64; 2] {
        self.momenta[i]
    }

    pub fn norm(&self, i: usize) -> f64 {
        let p = self.momenta[i];
        p[0].hypot(p[1])
    }

    /// Integer key proportional to |p_i|², identical for nodes of equal norm.
    pub fn norm_key(&self, i: usize) -> u64 {
        let c = self.coords[i];
        let (a, b) = if self.spec.offset { (2 * c[0] as i64 + 1, 2 * c[1] as i64 + 1) } else { (2 * c[0] as i64, 2 * c[1] as i64) };
        (a * a + b * b) as u64
    }

    #[inline]
    pub fn index_of(&self, c: [i32; 2]) -> Option<usize> {
        self.table.get(c)
    }

    fn reflected_coord(&self, i: usize) -> [i32; 2] {
        let c = self.coords[i];
        if self.shift > 0.0 {
            [-c[0] - 1, -c[1] - 1]
        } else {
            [-c[0], -c[1]]
        }
    }

    /// Index of the node at -p_i.
    pub fn reflected(&self, i: usize) -> usize {
        self.index_of(self.reflected_coord(i)).expect("grid is symmetric")
    }

    /// Riemann sum δ² Σ_i f(p_i).
    pub fn integrate<F: Fn([f64; 2]) -> f64>(&self, f: F) -> f64 {
        self.weight() * self.momenta.iter().map(|p| f(*p)).sum::<f64>()
    }
}

/// The set {c_i - c_j} of coordinate differences of a momentum grid.
///
/// Each lattice vector `a` carries the Coulomb weight
/// κ(a) = ∫_{cell(a)} dk / |k|, the exact integral of 1/|k| over the square
/// cell of side δ centred at `a δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceLattice {
    spec: GridSpec,
    spacing: f64,
    points: Vec<[i32; 2]>,
    kappa: Vec<f64>,
    table: CoordTable,
    kappa_box: Vec<f64>,
}

impl DifferenceLattice {
    pub fn new(grid: &MomentumGrid) -> Self {
        let half = grid.spec.points_per_axis as i32 + 2;
        let mut seen = CoordTable::new(half);
        let mut points = Vec::new();
        for ci in grid.coords() {
            for cj in grid.coords() {
                let d = [ci[0] - cj[0], ci[1] - cj[1]];
                if seen.get(d).is_none() {
                    seen.insert(d, 0);
                    points.push(d);
                }
            }
        }
        points.sort();
        let mut table = CoordTable::new(half);
        for (i, d) in points.iter().enumerate() {
            table.insert(*d, i);
        }
        let spacing = grid.spacing();
        let mut kappa_box = vec![0.0; table.side * table.side];
        for x in -half..=half {
            for y in -half..=half {
                let s = table.slot([x, y]).expect("inside box");
                kappa_box[s] = spacing * unit_cell_inverse_distance(x, y);
            }
        }
        let kappa = points.iter().map(|d| kappa_box[table.slot(*d).unwrap()]).collect();
        DifferenceLattice { spec: grid.spec, spacing, points, kappa, table, kappa_box }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn points(&self) -> &[[i32; 2]] {
        &self.points
    }

    /// Physical wave vector of lattice point `l`.
    pub fn wave_vector(&self, l: usize) -> [f64; 2] {
        let d = self.points[l];
        [d[0] as f64 * self.spacing, d[1] as f64 * self.spacing]
    }

    #[inline]
    pub fn index_of(&self, d: [i32; 2]) -> Option<usize> {
        self.table.get(d)
    }

    /// Index of -a for lattice point `l`.
    pub fn negated(&self, l: usize) -> usize {
        let d = self.points[l];
        self.index_of([-d[0], -d[1]]).expect("difference set is symmetric")
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    /// Coulomb weight of an arbitrary difference vector (lattice member or not).
    #[inline]
    pub fn kappa_at(&self, d: [i32; 2]) -> f64 {
        self.kappa_box[self.table.slot(d).expect("difference inside box")]
    }
}

/// ∫∫ over [x-½, x+½] × [y-½, y+½] of 1/|k|.
fn unit_cell_inverse_distance(x: i32, y: i32) -> f64 {
    let (x0, x1) = (x as f64 - 0.5, x as f64 + 0.5);
    let (y0, y1) = (y as f64 - 0.5, y as f64 + 0.5);
    corner(x1, y1) - corner(x0, y1) - corner(x1, y0) + corner(x0, y0)
}

/// Signed antiderivative H with ∂²H/∂x∂y = 1/√(x² + y²), H(0, ·) = H(·, 0) = 0.
fn corner(x: f64, y: f64) -> f64 {
    let (ax, ay) = (x.abs(), y.abs());
    if ax == 0.0 || ay == 0.0 {
        return 0.0;
    }
    let g = ax * (ay / ax).asinh() + ay * (ax / ay).asinh();
    g * x.signum() * y.signum()
}

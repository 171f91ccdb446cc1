//! Angular Fourier modes of the two-dimensional Coulomb kernel and Nyström
//! discretization of the resulting radial integral operators.

use crate::error::Result;
use crate::quadrature::{gauss_legendre_on, Adaptive};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

const TRAPEZOID_POINTS: usize = 512;
/// Below this value of χ - 1 the trapezoid rule loses accuracy and the
/// elliptic-integral representation is used instead.
const NEAR_DIAGONAL: f64 = 0.01;
pub const MAX_CHANNEL: usize = 16;

fn cos_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=TRAPEZOID_POINTS / 2).map(|k| (2.0 * PI * k as f64 / TRAPEZOID_POINTS as f64).cos()).collect())
}

/// Complete elliptic integrals K(k), E(k) given the complementary modulus
/// k' = √(1 - k²), via the arithmetic-geometric mean.
pub fn elliptic_ke(kp: f64) -> (f64, f64) {
    let mut a = 1.0;
    let mut b = kp;
    let k2 = (1.0 - kp) * (1.0 + kp);
    let mut sum = 0.5 * k2;
    let mut pow = 0.5;
    for _ in 0..64 {
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        let cn = 0.5 * (a - b);
        a = an;
        b = bn;
        pow *= 2.0;
        sum += pow * cn * cn;
        // Convergence is quadratic; once c_n is at rounding level further
        // terms only add 2^n-amplified noise.
        if cn.abs() <= 1e-15 * a {
            break;
        }
    }
    let k = PI / (2.0 * a);
    (k, k * (1.0 - sum))
}

/// Angular modes K_m(r, s) = ∫₀^{2π} cos(mψ) / √(r² + s² - 2rs cos ψ) dψ for
/// m = 0..=m_max, written into `out`.
///
/// The kernel is logarithmically singular at r = s; callers must avoid
/// evaluating it there.
pub fn angular_kernels(r: f64, s: f64, out: &mut [f64]) {
    let m_max = out.len() - 1;
    assert!(m_max <= MAX_CHANNEL, "angular channel {m_max} beyond supported range");
    if r == 0.0 || s == 0.0 {
        out.fill(0.0);
        out[0] = 2.0 * PI / r.max(s);
        return;
    }
    let chi = (r * r + s * s) / (2.0 * r * s);
    if chi - 1.0 < NEAR_DIAGONAL {
        let sum = r + s;
        let kp = (r - s).abs() / sum;
        let k2 = 4.0 * r * s / (sum * sum);
        let (ek, ee) = elliptic_ke(kp);
        out[0] = 4.0 * ek / sum;
        if m_max >= 1 {
            out[1] = 4.0 / sum * ((2.0 - k2) * ek - 2.0 * ee) / k2;
        }
        for m in 1..m_max {
            let mf = m as f64;
            out[m + 1] = (2.0 * mf * chi * out[m] - (mf - 0.5) * out[m - 1]) / (mf + 0.5);
        }
    } else {
        out.fill(0.0);
        let table = cos_table();
        let half = TRAPEZOID_POINTS / 2;
        let rs2 = 2.0 * r * s;
        let base = r * r + s * s;
        for (k, &c) in table.iter().enumerate() {
            let weight = if k == 0 || k == half { 1.0 } else { 2.0 };
            let f = weight / (base - rs2 * c).sqrt();
            let (mut prev, mut cur) = (c, 1.0);
            for slot in out.iter_mut() {
                *slot += f * cur;
                let next = 2.0 * c * cur - prev;
                prev = cur;
                cur = next;
            }
        }
        let h = 2.0 * PI / TRAPEZOID_POINTS as f64;
        out.iter_mut().for_each(|v| *v *= h);
    }
}

/// Single angular mode, see [`angular_kernels`].
pub fn angular_kernel(m: usize, r: f64, s: f64) -> f64 {
    let mut buf = vec![0.0; m + 1];
    angular_kernels(r, s, &mut buf);
    buf[m]
}

/// ∫₀^L s K_m(r, s) ds, integrating through the logarithmic singularity at s = r.
pub fn radial_moment(m: usize, r: f64, upper: f64, tol: f64) -> Result<f64> {
    let q = Adaptive { abs_tol: tol, rel_tol: tol, max_depth: 20 };
    let f = |s: f64| s * angular_kernel(m, r, s);
    let mut total = 0.0;
    if r > 0.0 {
        total += q.integrate_singular_right(f, 0.0, r.min(upper))?.value;
    }
    if r < upper {
        total += q.integrate_singular_left(f, r, upper)?.value;
    }
    Ok(total)
}

/// Quadrature nodes r = L t² on (0, L] with t Gauss–Legendre on (0, 1).
/// The substitution clusters nodes near the origin.
pub fn radial_nodes(n: usize, upper: f64) -> (Vec<f64>, Vec<f64>) {
    let (t, wt) = gauss_legendre_on(n, 0.0, 1.0);
    let r = t.iter().map(|t| upper * t * t).collect();
    let w = t.iter().zip(&wt).map(|(t, w)| 2.0 * upper * t * w).collect();
    (r, w)
}

/// Nyström matrices of the quadratic forms
/// u ↦ ∫∫ r s u(r) u(s) K_m(r, s) dr ds, one per channel m = 0..=m_max.
///
/// Off-diagonal entries are w_i w_j r_i r_j K_m(r_i, r_j). The diagonal uses
/// singularity subtraction: the exact moment ∫ s K_m(r_i, s) ds minus the
/// off-diagonal row sum, which keeps the matrices symmetric.
pub fn nystrom_matrices(nodes: &[f64], weights: &[f64], upper: f64, m_max: usize, tol: f64) -> Result<Vec<DMatrix<f64>>> {
    let n = nodes.len();
    let rows: Vec<Result<Vec<Vec<f64>>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![vec![0.0; n]; m_max + 1];
            let mut buf = vec![0.0; m_max + 1];
            let mut offsum = vec![0.0; m_max + 1];
            for j in 0..n {
                if j == i {
                    continue;
                }
                angular_kernels(nodes[i], nodes[j], &mut buf);
                for m in 0..=m_max {
                    let k = weights[j] * nodes[j] * buf[m];
                    offsum[m] += k;
                    row[m][j] = weights[i] * nodes[i] * k;
                }
            }
            for m in 0..=m_max {
                let moment = radial_moment(m, nodes[i], upper, tol)?;
                row[m][i] = weights[i] * nodes[i] * (moment - offsum[m]);
            }
            Ok(row)
        })
        .collect();
    let mut mats = vec![DMatrix::zeros(n, n); m_max + 1];
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        for m in 0..=m_max {
            for j in 0..n {
                mats[m][(i, j)] = row[m][j];
            }
        }
    }
    // Symmetrize away rounding differences between (i, j) and (j, i).
    for a in mats.iter_mut() {
        let t = a.transpose();
        *a = (&*a + t) * 0.5;
    }
    Ok(mats)
}

//! One-dimensional quadrature: Gauss–Legendre rules and an adaptive
//! Gauss–Kronrod (7/15) integrator with a bounded bisection depth.

use crate::error::{BdfError, Result};
use std::collections::BinaryHeap;
use std::f64::consts::PI;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for the odd-indexed Kronrod abscissae (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: u32,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod integrator.
///
/// The interval with the largest error estimate is bisected until the summed
/// estimate drops below `max(abs_tol, rel_tol * |I|)`. An interval that would
/// need to be split beyond `max_depth` halvings makes the integration fail.
#[derive(Debug, Clone, Copy)]
pub struct Adaptive {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for Adaptive {
    fn default() -> Self {
        Adaptive { abs_tol: 1e-12, rel_tol: 1e-12, max_depth: 20 }
    }
}

impl Adaptive {
    pub fn with_tol(tol: f64) -> Self {
        Adaptive { abs_tol: tol, rel_tol: tol, ..Default::default() }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Integral> {
        if a == b {
            return Ok(Integral { value: 0.0, error: 0.0 });
        }
        let (value, error) = gk15(&f, a, b);
        let mut heap = BinaryHeap::new();
        heap.push(Piece { a, b, value, error, depth: 0 });
        let mut total = value;
        let mut total_err = error;
        // Rounding noise in the Kronrod/Gauss difference sets a floor below
        // which refinement is pointless.
        loop {
            let target = self.abs_tol.max(self.rel_tol * total.abs());
            if total_err <= target {
                break;
            }
            let worst = heap.pop().expect("heap is never empty");
            if worst.error <= 50.0 * f64::EPSILON * worst.value.abs().max(f64::MIN_POSITIVE) {
                heap.push(worst);
                break;
            }
            if worst.depth >= self.max_depth {
                return Err(BdfError::Quadrature { tol: target, estimate: total_err });
            }
            let m = 0.5 * (worst.a + worst.b);
            let (v1, e1) = gk15(&f, worst.a, m);
            let (v2, e2) = gk15(&f, m, worst.b);
            total += v1 + v2 - worst.value;
            total_err += e1 + e2 - worst.error;
            heap.push(Piece { a: worst.a, b: m, value: v1, error: e1, depth: worst.depth + 1 });
            heap.push(Piece { a: m, b: worst.b, value: v2, error: e2, depth: worst.depth + 1 });
        }
        // Re-sum to shed the drift of the running updates.
        let value = heap.iter().map(|p| p.value).sum();
        let error = heap.iter().map(|p| p.error).sum();
        Ok(Integral { value, error })
    }

    /// Integrate a function with an integrable (logarithmic or weak power)
    /// singularity at `a`, using the substitution `x = a + (b - a) u^3`.
    pub fn integrate_singular_left<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Integral> {
        let len = b - a;
        self.integrate(
            |u| {
                let u2 = u * u;
                let x = a + len * u2 * u;
                // Points that round onto the singular endpoint carry
                // negligible weight.
                if x == a {
                    0.0
                } else {
                    3.0 * len * u2 * f(x)
                }
            },
            0.0,
            1.0,
        )
    }

    /// As [`Adaptive::integrate_singular_left`] with the singularity at `b`.
    pub fn integrate_singular_right<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Integral> {
        let len = b - a;
        self.integrate(
            |u| {
                let u2 = u * u;
                let x = b - len * u2 * u;
                if x == b {
                    0.0
                } else {
                    3.0 * len * u2 * f(x)
                }
            },
            0.0,
            1.0,
        )
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss–Legendre rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (z * p - p0) / (z * z - 1.0);
    (p, d)
}

/// Gauss–Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    (x.iter().map(|t| c + h * t).collect(), w.iter().map(|v| h * v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        for n in [1usize, 2, 5, 16, 101] {
            let (x, w) = gauss_legendre(n);
            let wsum: f64 = w.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "n = {n}");
            let deg = 2 * n - 1;
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((q - exact).abs() < 1e-12, "n = {n}: {q} vs {exact}");
        }
    }

    #[test]
    fn adaptive_handles_smooth_and_log_integrands() {
        let q = Adaptive::default();
        let r = q.integrate(|x| x.sin(), 0.0, PI).unwrap();
        assert!((r.value - 2.0).abs() < 1e-13);
        let r = q.integrate_singular_left(|x: f64| x.ln(), 0.0, 1.0).unwrap();
        assert!((r.value + 1.0).abs() < 1e-12, "{}", r.value);
        let r = q.integrate_singular_left(|x: f64| x.sqrt().recip(), 0.0, 1.0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-10, "{}", r.value);
        let r = q.integrate_singular_right(|x: f64| (1.0 - x).ln(), 0.0, 1.0).unwrap();
        assert!((r.value + 1.0).abs() < 1e-12, "{}", r.value);
    }

    #[test]
    fn depth_limit_is_reported() {
        let q = Adaptive { abs_tol: 1e-14, rel_tol: 0.0, max_depth: 3 };
        assert!(matches!(q.integrate(|x: f64| x.powf(-0.9), 0.0, 1.0), Err(BdfError::Quadrature { .. })));
    }
}

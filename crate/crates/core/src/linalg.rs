//! Dense complex linear algebra helpers.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

/// Complex product computed with four real matrix products.
///
/// nalgebra's real GEMM path is several times faster than its generic
/// complex kernel, which dominates the cost of a time step.
pub fn mul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    join(&re, &im)
}

/// a · b · c
pub fn mul3(a: &CMatrix, b: &CMatrix, c: &CMatrix) -> CMatrix {
    mul(&mul(a, b), c)
}

fn split(a: &CMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

fn join(re: &DMatrix<f64>, im: &DMatrix<f64>) -> CMatrix {
    re.zip_map(im, Complex64::new)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    mul(a, b) - mul(b, a)
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

/// tr(a b) without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let n = a.nrows();
    let m = a.ncols();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..m {
        for i in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// (a + a†) / 2
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Largest deviation of `a` from hermiticity, ‖a - a†‖_max.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..=i {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(a: &CMatrix) -> Self {
        let eig = hermitian_part(a).symmetric_eigen();
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        HermitianEigen { values, vectors }
    }

    /// V f(Λ) V† for a scalar function of the eigenvalues.
    pub fn apply<F: Fn(f64) -> Complex64>(&self, f: F) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (c, &lambda) in self.values.iter().enumerate() {
            let s = f(lambda);
            for r in 0..n {
                scaled[(r, c)] *= s;
            }
        }
        mul(&scaled, &self.vectors.adjoint())
    }

    /// Orthogonal projector onto the span of the selected eigenvectors.
    pub fn projector<F: Fn(f64) -> bool>(&self, select: F) -> CMatrix {
        let cols: Vec<usize> = (0..self.values.len()).filter(|&c| select(self.values[c])).collect();
        let n = self.values.len();
        let v = CMatrix::from_fn(n, cols.len(), |r, c| self.vectors[(r, cols[c])]);
        mul(&v, &v.adjoint())
    }

    /// The unitary exp(-i t A).
    pub fn propagator(&self, t: f64) -> CMatrix {
        self.apply(|l| Complex64::from_polar(1.0, -t * l))
    }
}

/// Ascending eigenvalues of the Hermitian part of `a`.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = hermitian_part(a).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Operator norm of a Hermitian matrix.
pub fn hermitian_norm(a: &CMatrix) -> f64 {
    hermitian_eigenvalues(a).iter().fold(0.0, |m: f64, l| m.max(l.abs()))
}

/// Operator norm of an anti-Hermitian matrix (e.g. a commutator of two
/// Hermitian matrices).
pub fn anti_hermitian_norm(a: &CMatrix) -> f64 {
    hermitian_norm(&(a * Complex64::new(0.0, 1.0)))
}

/// Operator norm of a general square matrix.
pub fn operator_norm(a: &CMatrix) -> f64 {
    hermitian_norm(&mul(&a.adjoint(), a)).sqrt()
}

/// Trace norm Σ |λ| of a Hermitian matrix; for Hermitian matrices the
/// singular values are the absolute eigenvalues.
pub fn hermitian_trace_norm(a: &CMatrix) -> f64 {
    hermitian_eigenvalues(a).iter().map(|l| l.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, seed: u64) -> CMatrix {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        CMatrix::from_fn(n, n, |_, _| Complex64::new(next(), next()))
    }

    #[test]
    fn fast_product_matches_reference() {
        let a = sample(17, 1);
        let b = sample(17, 2);
        let diff = frobenius(&(mul(&a, &b) - &a * &b));
        assert!(diff < 1e-13, "{diff}");
        let t = trace_product(&a, &b) - trace(&(&a * &b));
        assert!(t.norm() < 1e-13);
    }

    #[test]
    fn eigen_functional_calculus() {
        let a = sample(12, 3);
        let h = hermitian_part(&a);
        let eig = HermitianEigen::new(&h);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        let back = eig.apply(|l| Complex64::new(l, 0.0));
        assert!(frobenius(&(back - &h)) < 1e-12);
        let u = eig.propagator(0.7);
        let id = CMatrix::identity(12, 12);
        assert!(frobenius(&(mul(&u, &u.adjoint()) - id)) < 1e-12);
        let p = eig.projector(|l| l < 0.0);
        assert!(frobenius(&(mul(&p, &p) - &p)) < 1e-12);
    }

    #[test]
    fn norms_agree() {
        let h = hermitian_part(&sample(9, 4));
        let n1 = hermitian_norm(&h);
        let n2 = operator_norm(&h);
        assert!((n1 - n2).abs() < 1e-12);
        let c = commutator(&h, &hermitian_part(&sample(9, 5)));
        assert!((anti_hermitian_norm(&c) - operator_norm(&c)).abs() < 1e-12);
    }
}

//! Small dense complex linear algebra for the Bloch propagators.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};
use num_complex::Complex64 as C64;

/// Eigenvector matrices with a 1-norm condition number above this are
/// treated as defective.
pub const CONDITION_LIMIT: f64 = 1e8;

fn norm1(m: &DMatrix<C64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// A = V diag(λ) V⁻¹.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    pub vectors: DMatrix<C64>,
    pub inverse: DMatrix<C64>,
    /// ‖V‖₁‖V⁻¹‖₁
    pub condition: f64,
}

impl EigenDecomposition {
    /// Complex Schur form followed by back substitution on the triangular
    /// factor. Returns `None` if the Schur iteration fails or V is singular.
    pub fn new(a: &DMatrix<C64>) -> Option<Self> {
        let n = a.nrows();
        let scale = norm1(a).max(f64::MIN_POSITIVE);
        let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 10_000)?;
        let (q, t) = schur.unpack();
        let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();

        let mut y = DMatrix::<C64>::zeros(n, n);
        for k in 0..n {
            y[(k, k)] = C64::new(1.0, 0.0);
            for i in (0..k).rev() {
                let mut s = C64::new(0.0, 0.0);
                for j in i + 1..=k {
                    s += t[(i, j)] * y[(j, k)];
                }
                let mut denom = t[(i, i)] - values[k];
                if denom.norm() < f64::EPSILON * scale {
                    // Repeated eigenvalue; the perturbation shows up in the
                    // condition number and triggers the caller's fallback.
                    denom = C64::new(f64::EPSILON * scale, 0.0);
                }
                y[(i, k)] = -s / denom;
            }
        }
        let mut vectors = q * y;
        for k in 0..n {
            let norm = vectors.column(k).norm();
            if norm > 0.0 {
                let inv = C64::new(1.0 / norm, 0.0);
                for i in 0..n {
                    vectors[(i, k)] *= inv;
                }
            }
        }
        let inverse = vectors.clone().lu().try_inverse()?;
        let condition = norm1(&vectors) * norm1(&inverse);
        if !condition.is_finite() {
            return None;
        }
        Some(Self {
            values,
            vectors,
            inverse,
            condition,
        })
    }

    pub fn well_conditioned(&self) -> bool {
        self.condition <= CONDITION_LIMIT
    }

    /// exp(As)ᵢⱼ = Σₘ cₘ e^{λₘ s}; returns the (cₘ, λₘ) pairs.
    pub fn entry_expansion(&self, i: usize, j: usize) -> Vec<(C64, C64)> {
        self.values
            .iter()
            .enumerate()
            .map(|(m, &l)| (self.vectors[(i, m)] * self.inverse[(m, j)], l))
            .collect()
    }

    pub fn exp(&self, s: f64) -> DMatrix<C64> {
        let n = self.values.len();
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            self.values.iter().map(|l| (l * s).exp()),
        ));
        &self.vectors * d * &self.inverse
    }
}

/// ∫₀^∞ conj(Σ aₘe^{λₘs}) Σ bₙe^{μₙs} ds = Σₘₙ conj(aₘ)bₙ / −(conj(λₘ)+μₙ).
pub fn exp_sum_cross_integral(a: &[(C64, C64)], b: &[(C64, C64)]) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for &(ca, la) in a {
        for &(cb, lb) in b {
            acc += ca.conj() * cb / (-(la.conj() + lb));
        }
    }
    acc
}

/// ∫₀^∞ conj(exp(As)ᵢⱼ) exp(As)ₖₗ ds through the Lyapunov equation
/// A†P + PA = −eᵢeₖᵀ, whose solution has P_{jl} equal to the integral.
/// Needs A Hurwitz; works at defective points where eigenvectors do not.
pub fn gramian_cross_integral(
    a: &DMatrix<C64>,
    (i, j): (usize, usize),
    (k, l): (usize, usize),
) -> Option<C64> {
    let n = a.nrows();
    let ah = a.adjoint();
    let mut big = DMatrix::<C64>::zeros(n * n, n * n);
    // vec(P) column-major: index p + n*q ↔ P[p,q]
    for q in 0..n {
        for p in 0..n {
            let row = p + n * q;
            // (A†P)[p,q] = Σ_r A†[p,r] P[r,q]
            for r in 0..n {
                big[(row, r + n * q)] += ah[(p, r)];
            }
            // (PA)[p,q] = Σ_r P[p,r] A[r,q]
            for r in 0..n {
                big[(row, p + n * r)] += a[(r, q)];
            }
        }
    }
    let mut rhs = DVector::<C64>::zeros(n * n);
    rhs[i + n * k] = C64::new(-1.0, 0.0);
    let sol = big.lu().solve(&rhs)?;
    Some(sol[j + n * l])
}

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

macro_rules! pade_expm {
    ($name:ident, $mat:ty) => {
        /// Degree-13 Padé approximant with scaling and squaring.
        pub fn $name(a: &$mat) -> $mat {
            let norm = (0..a.ncols())
                .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
                .fold(0.0, f64::max);
            let s = if norm > THETA13 {
                (norm / THETA13).log2().ceil() as i32
            } else {
                0
            };
            let a = a.scale(0.5f64.powi(s));
            let id = <$mat>::identity();
            let b = |k: usize| C64::new(PADE13[k], 0.0);
            let a2 = a * a;
            let a4 = a2 * a2;
            let a6 = a4 * a2;
            let u_inner = a6 * (a6 * b(13) + a4 * b(11) + a2 * b(9));
            let u = a * (u_inner + a6 * b(7) + a4 * b(5) + a2 * b(3) + id * b(1));
            let v = a6 * (a6 * b(12) + a4 * b(10) + a2 * b(8))
                + a6 * b(6)
                + a4 * b(4)
                + a2 * b(2)
                + id * b(0);
            let mut r = (v - u)
                .lu()
                .solve(&(v + u))
                .expect("Pade denominator is nonsingular for scaled input");
            for _ in 0..s {
                r = r * r;
            }
            r
        }
    };
}

pade_expm!(expm2, Matrix2<C64>);
pade_expm!(expm4, Matrix4<C64>);

/// Padé exponential of a dynamically sized 2×2 or 4×4 matrix.
pub fn expm_dyn(a: &DMatrix<C64>) -> DMatrix<C64> {
    match a.nrows() {
        2 => {
            let m = Matrix2::from_iterator(a.iter().copied());
            DMatrix::from_iterator(2, 2, expm2(&m).iter().copied())
        }
        4 => {
            let m = Matrix4::from_iterator(a.iter().copied());
            DMatrix::from_iterator(4, 4, expm4(&m).iter().copied())
        }
        n => panic!("expm_dyn supports 2x2 and 4x4 matrices, got {n}x{n}"),
    }
}

/// exp(A t) by eigendecomposition, falling back to Padé when the eigenvector
/// basis is ill-conditioned (near exceptional points).
#[derive(Debug, Clone)]
pub enum Propagator {
    Eigen(EigenDecomposition),
    Pade(DMatrix<C64>),
}

impl Propagator {
    pub fn new(a: &DMatrix<C64>) -> Self {
        match EigenDecomposition::new(a) {
            Some(e) if e.well_conditioned() => Propagator::Eigen(e),
            _ => Propagator::Pade(a.clone()),
        }
    }

    pub fn at(&self, t: f64) -> DMatrix<C64> {
        match self {
            Propagator::Eigen(e) => e.exp(t),
            Propagator::Pade(a) => expm_dyn(&(a * C64::new(t, 0.0))),
        }
    }

    pub fn uses_eigen(&self) -> bool {
        matches!(self, Propagator::Eigen(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    fn sample4() -> DMatrix<C64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                c(-1.0, 0.0),
                c(0.0, -0.7),
                c(0.0, 0.7),
                c(0.0, 0.0),
                c(0.0, -0.7),
                c(-0.9, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.7),
                c(0.0, 0.7),
                c(0.0, 0.0),
                c(-0.9, 0.0),
                c(0.0, -0.7),
                c(0.0, 0.0),
                c(0.0, 0.7),
                c(0.0, -0.7),
                c(-0.3, 0.0),
            ],
        )
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let a = sample4();
        let e = EigenDecomposition::new(&a).unwrap();
        let d = DMatrix::from_diagonal(&DVector::from_vec(e.values.clone()));
        let back = &e.vectors * d * &e.inverse;
        assert!(max_abs_diff(&back, &a) < 1e-12);
        assert!(e.well_conditioned());
    }

    #[test]
    fn pade_matches_eigen_exponential() {
        let a = sample4();
        let e = EigenDecomposition::new(&a).unwrap();
        for t in [0.0, 0.3, 2.0, 17.0] {
            let p = expm_dyn(&(&a * c(t, 0.0)));
            assert!(max_abs_diff(&p, &e.exp(t)) < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn pade_scalar_and_rotation() {
        let m = Matrix2::new(c(0.0, 0.0), c(0.0, 1.0), c(0.0, 1.0), c(0.0, 0.0));
        // exp(i σx t) = cos t I + i sin t σx
        let t = 3.7;
        let e = expm2(&(m * c(t, 0.0)));
        assert!((e[(0, 0)] - c(t.cos(), 0.0)).norm() < 1e-13);
        assert!((e[(0, 1)] - c(0.0, t.sin())).norm() < 1e-13);
        let big = Matrix2::new(c(-50.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0));
        let e = expm2(&big);
        assert!((e[(0, 0)].re - (-50.0f64).exp()).abs() < 1e-30);
        assert!((e[(1, 1)].re - (-0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn defective_matrix_is_flagged() {
        // Jordan block: single eigenvector.
        let j = DMatrix::from_row_slice(
            2,
            2,
            &[c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
        );
        let p = Propagator::new(&j);
        assert!(!p.uses_eigen());
        let t = 2.0;
        let m = p.at(t);
        // exp(Jt) = e^{-t}[[1, t],[0, 1]]
        assert!((m[(0, 1)].re - t * (-t).exp()).abs() < 1e-13);
    }

    #[test]
    fn gramian_matches_eigen_sum() {
        let a = sample4();
        let e = EigenDecomposition::new(&a).unwrap();
        for &(p, q) in &[
            ((0, 3), (0, 3)),
            ((0, 3), (2, 3)),
            ((2, 3), (2, 3)),
            ((1, 0), (3, 2)),
        ] {
            let eig =
                exp_sum_cross_integral(&e.entry_expansion(p.0, p.1), &e.entry_expansion(q.0, q.1));
            let gram = gramian_cross_integral(&a, p, q).unwrap();
            assert!(
                (eig - gram).norm() < 1e-12 * gram.norm().max(1e-3),
                "{p:?} {q:?}: {eig} vs {gram}"
            );
        }
    }
}

//! Small dense complex matrix helpers.
//!
//! Everything here works on `nalgebra::DMatrix<Complex64>`; the matrices in
//! this crate are at most 8x8, so clarity wins over blocking or BLAS calls.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Kronecker product, first factor most significant.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |A - A†|`.
pub fn hermiticity_residual(a: &CMatrix) -> f64 {
    max_abs(&(a - a.adjoint()))
}

/// `max |U†U - 1|`.
pub fn unitarity_residual(u: &CMatrix) -> f64 {
    max_abs(&(u.adjoint() * u - identity(u.nrows())))
}

/// Largest off-diagonal modulus.
pub fn max_offdiag(a: &CMatrix) -> f64 {
    let mut m = 0.0_f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if i != j {
                m = m.max(a[(i, j)].norm());
            }
        }
    }
    m
}

/// `exp(-i H tau)` for Hermitian `H`, through its eigendecomposition.
/// The result is unitary to rounding regardless of `tau`.
pub fn expm_hermitian(h: &CMatrix, tau: f64) -> CMatrix {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = CVector::from_iterator(
        h.nrows(),
        eig.eigenvalues
            .iter()
            .map(|&e| Complex64::from_polar(1.0, -e * tau)),
    );
    let mut vd = v.clone();
    for (j, mut col) in vd.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    vd * v.adjoint()
}

/// A 2x2 Hermitian matrix written as `a·1 + b·σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Su2Generator {
    pub a: f64,
    pub b: [f64; 3],
}

impl Su2Generator {
    pub fn norm_b(&self) -> f64 {
        (self.b[0] * self.b[0] + self.b[1] * self.b[1] + self.b[2] * self.b[2]).sqrt()
    }

    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        let [bx, by, bz] = self.b;
        [
            [c(self.a + bz, 0.0), c(bx, -by)],
            [c(bx, by), c(self.a - bz, 0.0)],
        ]
    }

    /// Closed-form `exp(-i (a + b·σ) tau)`.
    pub fn exp_step(&self, tau: f64) -> [[Complex64; 2]; 2] {
        let nb = self.norm_b();
        let global = Complex64::from_polar(1.0, -self.a * tau);
        let (cs, sn) = ((nb * tau).cos(), (nb * tau).sin());
        let (nx, ny, nz) = if nb > 0.0 {
            (self.b[0] / nb, self.b[1] / nb, self.b[2] / nb)
        } else {
            (0.0, 0.0, 0.0)
        };
        // cos - i sin (n·σ)
        [
            [global * c(cs, -sn * nz), global * c(-sn * ny, -sn * nx)],
            [global * c(sn * ny, -sn * nx), global * c(cs, sn * nz)],
        ]
    }

    /// Eigenvector for the eigenvalue `a + s|b|`, `s = ±1`, with the gauge
    /// "first nonzero component real and non-negative".
    pub fn eigenvector(&self, upper: bool) -> [Complex64; 2] {
        let nb = self.norm_b();
        let [bx, by, bz] = self.b;
        if nb == 0.0 {
            return if upper { [ONE, ZERO] } else { [ZERO, ONE] };
        }
        let cos_t = (bz / nb).clamp(-1.0, 1.0);
        let phi = by.atan2(bx);
        let (half_c, half_s) = (((1.0 + cos_t) / 2.0).sqrt(), ((1.0 - cos_t) / 2.0).sqrt());
        if upper {
            [c(half_c, 0.0), Complex64::from_polar(half_s, phi)]
        } else if half_s > 0.0 {
            [c(half_s, 0.0), -Complex64::from_polar(half_c, phi)]
        } else {
            [ZERO, ONE]
        }
    }
}

/// Wrap into `(-π, π]`.
pub fn wrap_pi(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = x.rem_euclid(two_pi);
    if y > std::f64::consts::PI {
        y -= two_pi;
    }
    y
}

/// Shift `x` by a multiple of 2π to lie as close as possible to `reference`.
pub fn unwrap_near(x: f64, reference: f64) -> f64 {
    reference + wrap_pi(x - reference)
}

pub fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.dotc(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn su2_closed_form_matches_eigen_exponential() {
        let g = Su2Generator {
            a: 0.3,
            b: [0.2, -0.7, 0.4],
        };
        let m = g.matrix();
        let h = CMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]]);
        let dense = expm_hermitian(&h, 1.7);
        let closed = g.exp_step(1.7);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!((dense[(i, j)] - closed[i][j]).norm(), 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn su2_eigenvectors() {
        let g = Su2Generator {
            a: -0.1,
            b: [0.5, 0.25, -0.3],
        };
        let m = g.matrix();
        for upper in [true, false] {
            let v = g.eigenvector(upper);
            let e = g.a + if upper { g.norm_b() } else { -g.norm_b() };
            for i in 0..2 {
                let hv = m[i][0] * v[0] + m[i][1] * v[1];
                assert_abs_diff_eq!((hv - e * v[i]).norm(), 0.0, epsilon = 1e-14);
            }
            assert_abs_diff_eq!(v[0].norm_sqr() + v[1].norm_sqr(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn wrapping() {
        use std::f64::consts::PI;
        assert_abs_diff_eq!(wrap_pi(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_pi(-PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(unwrap_near(0.1, 2.0 * PI), 2.0 * PI + 0.1, epsilon = 1e-12);
    }

    #[test]
    fn kron_dimensions_and_values() {
        let k = kron(&pauli_x(), &pauli_z());
        assert_eq!(k.shape(), (4, 4));
        assert_eq!(k[(0, 2)], ONE);
        assert_eq!(k[(1, 3)], -ONE);
    }
}

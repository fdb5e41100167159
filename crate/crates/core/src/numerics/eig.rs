//! Hermitian eigendecomposition by cyclic complex Jacobi rotations.
//!
//! Jacobi is slower than tridiagonal QR for large matrices but the matrices
//! here are at most a few dozen rows, and Jacobi delivers eigenvectors that are
//! orthonormal to working precision without a separate reorthogonalization.

use super::ComplexMatrix;
use crate::error::{Error, Result};
use crate::scalar::{real, Real};

const MAX_SWEEPS: usize = 64;

/// Spectrum of a Hermitian matrix: `A = D diag(λ) Dᴴ`, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEig<T> {
    pub eigenvalues: Vec<T>,
    pub eigenvectors: ComplexMatrix<T>,
}

impl<T: Real> HermitianEig<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `D diag(λ) Dᴴ`.
    pub fn reconstruct(&self) -> ComplexMatrix<T> {
        let d = &self.eigenvectors;
        let scaled = ComplexMatrix::from_fn(d.rows(), d.cols(), |r, c| d[(r, c)].scale(self.eigenvalues[c]));
        let mut out = scaled.matmul_adjoint(d);
        out.make_hermitian();
        out
    }

    /// Frobenius norm of `DᴴD - I`.
    pub fn unitarity_defect(&self) -> T {
        let d = &self.eigenvectors;
        d.adjoint_matmul(d).sub(&ComplexMatrix::identity(d.cols())).frobenius_norm()
    }
}

/// Eigendecomposition of the Hermitian part `(A + Aᴴ)/2` of a square matrix.
///
/// Eigenvalues are returned unclamped and in ascending order.
pub fn herm_eig<T: Real>(a: &ComplexMatrix<T>) -> Result<HermitianEig<T>> {
    if !a.is_square() {
        return Err(Error::dim("herm_eig", format!("{:?} is not square", a.shape())));
    }
    if !a.is_finite() {
        return Err(Error::numeric("herm_eig", "input contains non-finite entries"));
    }
    let n = a.rows();
    let mut m = a.hermitian_part();
    let mut v = ComplexMatrix::identity(n);
    let norm = m.frobenius_norm();

    let mut converged = norm == T::zero() || n < 2;
    let mut sweep = 0;
    while !converged {
        if sweep == MAX_SWEEPS {
            return Err(Error::numeric(
                "herm_eig",
                format!(
                    "Jacobi did not converge after {MAX_SWEEPS} sweeps: |A|_F = {norm}, off-diagonal = {}",
                    off_diagonal(&m)
                ),
            ));
        }
        sweep += 1;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                rotated |= rotate(&mut m, &mut v, p, q);
            }
        }
        converged = !rotated || off_diagonal(&m) <= T::epsilon() * T::lit(0.1) * norm;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.partial_cmp(&m[(j, j)].re).unwrap_or(std::cmp::Ordering::Equal));
    Ok(HermitianEig {
        eigenvalues: order.iter().map(|&i| m[(i, i)].re).collect(),
        eigenvectors: v.permute_cols(&order),
    })
}

fn off_diagonal<T: Real>(m: &ComplexMatrix<T>) -> T {
    let n = m.rows();
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// Annihilates `m[(p, q)]` with a unitary rotation applied from both sides,
/// accumulating the rotation into `v`. Returns false when there was nothing to do.
fn rotate<T: Real>(m: &mut ComplexMatrix<T>, v: &mut ComplexMatrix<T>, p: usize, q: usize) -> bool {
    let b = m[(p, q)];
    let babs = b.norm();
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    // negligible relative to both diagonal entries: rotation would not change them
    if babs == T::zero() || babs <= T::epsilon() * T::lit(1e-3) * (app.abs().min(aqq.abs())) {
        if babs != T::zero() {
            m[(p, q)] = real(T::zero());
            m[(q, p)] = real(T::zero());
        }
        return false;
    }
    let phase = b.unscale(babs);
    let theta = (aqq - app) / (babs + babs);
    let t = if theta.abs() > T::lit(1e18) {
        T::one() / (theta + theta)
    } else {
        let sgn = if theta >= T::zero() { T::one() } else { -T::one() };
        sgn / (theta.abs() + (theta * theta + T::one()).sqrt())
    };
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;
    let pc = phase.conj();
    let n = m.rows();

    // columns: A <- A J, with J_pp = c, J_pq = s, J_qp = -s e*, J_qq = c e*
    for k in 0..n {
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        m[(k, p)] = akp.scale(c) - (pc * akq).scale(s);
        m[(k, q)] = akp.scale(s) + (pc * akq).scale(c);
    }
    // rows: A <- Jᴴ A
    for k in 0..n {
        let apk = m[(p, k)];
        let aqk = m[(q, k)];
        m[(p, k)] = apk.scale(c) - (phase * aqk).scale(s);
        m[(q, k)] = apk.scale(s) + (phase * aqk).scale(c);
    }
    m[(p, q)] = real(T::zero());
    m[(q, p)] = real(T::zero());
    m[(p, p)] = real(app - t * babs);
    m[(q, q)] = real(aqq + t * babs);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp.scale(c) - (pc * vkq).scale(s);
        v[(k, q)] = vkp.scale(s) + (pc * vkq).scale(c);
    }
    true
}

/// Applies the pseudo-inverse of `A + μI` to `x` through the spectrum of `A`.
///
/// Negative eigenvalues are clamped to zero first. Spectral components with
/// `λ + μ` at or below `ε · M · max(λ + μ)` are treated as null space.
pub fn shifted_pinv_apply<T: Real>(
    eig: &HermitianEig<T>,
    mu: T,
    x: &ComplexMatrix<T>,
) -> Result<ComplexMatrix<T>> {
    let n = eig.dim();
    if x.rows() != n {
        return Err(Error::dim(
            "shifted_pinv_apply",
            format!("eigenbasis has dimension {n}, right-hand side is {:?}", x.shape()),
        ));
    }
    let gains = shifted_pinv_gains(&eig.eigenvalues, mu);
    let d = &eig.eigenvectors;
    let mut coeffs = d.adjoint_matmul(x);
    for (r, &g) in gains.iter().enumerate() {
        for c in 0..coeffs.cols() {
            coeffs[(r, c)] = coeffs[(r, c)].scale(g);
        }
    }
    Ok(d.matmul(&coeffs))
}

/// Per-eigenvalue gains `g_m` of the shifted pseudo-inverse.
pub fn shifted_pinv_gains<T: Real>(eigenvalues: &[T], mu: T) -> Vec<T> {
    let shifted: Vec<T> = eigenvalues.iter().map(|&l| l.max(T::zero()) + mu).collect();
    let smax = shifted.iter().copied().fold(T::zero(), T::max);
    let tol = T::epsilon() * T::lit(eigenvalues.len() as f64) * smax;
    shifted
        .iter()
        .map(|&s| if s > tol && s > T::zero() { T::one() / s } else { T::zero() })
        .collect()
}

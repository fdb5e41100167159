//! Dense factorizations: Cholesky for Hermitian positive-definite systems and
//! partially pivoted LU for general square systems.

use num_traits::Zero;

use super::ComplexMatrix;
use crate::error::{Error, Result};
use crate::scalar::{real, Real, C};

/// Lower-triangular Cholesky factor `L` with `A = L Lᴴ`.
///
/// Only the lower triangle of `a` is read; the caller is responsible for
/// passing a Hermitian matrix.
pub fn cholesky<T: Real>(a: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    if !a.is_square() {
        return Err(Error::dim("cholesky", format!("{:?} is not square", a.shape())));
    }
    let n = a.rows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(Error::numeric(
                "cholesky",
                format!("pivot {j} is {d}, matrix not positive definite (norm {})", a.frobenius_norm()),
            ));
        }
        let djj = d.sqrt();
        l[(j, j)] = real(djj);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s.unscale(djj);
        }
    }
    Ok(l)
}

/// `log det A` for Hermitian positive-definite `A`.
pub fn logdet_hpd<T: Real>(a: &ComplexMatrix<T>) -> Result<T> {
    let l = cholesky(a)?;
    Ok((0..l.rows()).map(|i| l[(i, i)].re.ln()).sum::<T>() * T::lit(2.0))
}

/// Solves `A X = B` for Hermitian positive-definite `A` via Cholesky.
pub fn solve_hpd<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    if b.rows() != a.rows() {
        return Err(Error::dim(
            "solve_hpd",
            format!("lhs {:?}, rhs {:?}", a.shape(), b.shape()),
        ));
    }
    let l = cholesky(a)?;
    let n = a.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        // L y = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s.unscale(l[(i, i)].re);
        }
        // Lᴴ x = y
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)].conj() * x[(k, c)];
            }
            x[(i, c)] = s.unscale(l[(i, i)].re);
        }
    }
    Ok(x)
}

struct Lu<T> {
    lu: ComplexMatrix<T>,
    perm: Vec<usize>,
}

fn lu_factor<T: Real>(a: &ComplexMatrix<T>, op: &'static str) -> Result<Lu<T>> {
    if !a.is_square() {
        return Err(Error::dim(op, format!("{:?} is not square", a.shape())));
    }
    let n = a.rows();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let scale = a.max_abs();
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|r| (r, lu[(r, k)].norm()))
            .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pmax > scale * T::epsilon() * T::lit(n as f64)) {
            return Err(Error::numeric(
                op,
                format!("matrix is singular to working precision (pivot {k}, norm {})", a.frobenius_norm()),
            ));
        }
        if p != k {
            perm.swap(p, k);
            for c in 0..n {
                let tmp = lu[(k, c)];
                lu[(k, c)] = lu[(p, c)];
                lu[(p, c)] = tmp;
            }
        }
        let pivot = lu[(k, k)];
        for r in (k + 1)..n {
            let f = lu[(r, k)] / pivot;
            lu[(r, k)] = f;
            if f.is_zero() {
                continue;
            }
            for c in (k + 1)..n {
                let u = lu[(k, c)];
                lu[(r, c)] -= f * u;
            }
        }
    }
    Ok(Lu { lu, perm })
}

impl<T: Real> Lu<T> {
    fn solve(&self, b: &ComplexMatrix<T>) -> ComplexMatrix<T> {
        let n = self.lu.rows();
        let mut x = b.permute_rows(&self.perm);
        for c in 0..b.cols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.lu[(i, i)];
            }
        }
        x
    }
}

/// Solves a general square system `A X = B` with partial pivoting.
pub fn solve<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    if b.rows() != a.rows() {
        return Err(Error::dim("solve", format!("lhs {:?}, rhs {:?}", a.shape(), b.shape())));
    }
    Ok(lu_factor(a, "solve")?.solve(b))
}

/// Explicit inverse. Only used for small per-UE matrices.
pub fn inverse<T: Real>(a: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let lu = lu_factor(a, "inverse")?;
    Ok(lu.solve(&ComplexMatrix::identity(a.rows())))
}

/// Determinant via LU, used by test oracles.
pub fn det<T: Real>(a: &ComplexMatrix<T>) -> Result<C<T>> {
    let Lu { lu, perm } = lu_factor(a, "det")?;
    let mut d = C::new(T::one(), T::zero());
    for i in 0..lu.rows() {
        d *= lu[(i, i)];
    }
    // parity of the permutation
    let mut seen = vec![false; perm.len()];
    let mut swaps = 0;
    for s in 0..perm.len() {
        if seen[s] {
            continue;
        }
        let mut j = s;
        let mut len = 0;
        while !seen[j] {
            seen[j] = true;
            j = perm[j];
            len += 1;
        }
        swaps += len - 1;
    }
    Ok(if swaps % 2 == 1 { -d } else { d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cplx;

    fn hpd3() -> ComplexMatrix<f64> {
        let b = ComplexMatrix::from_fn(3, 3, |r, c| cplx((r + 2 * c) as f64 * 0.3 - 0.5, (r as f64 - c as f64) * 0.7));
        let mut a = b.gram();
        a.add_diagonal(0.5);
        a
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = hpd3();
        let l = cholesky(&a).unwrap();
        let r = l.matmul_adjoint(&l).sub(&a).frobenius_norm();
        assert!(r < 1e-12 * a.frobenius_norm());
    }

    #[test]
    fn hpd_and_lu_solves_agree() {
        let a = hpd3();
        let b = ComplexMatrix::from_fn(3, 2, |r, c| cplx(r as f64 - c as f64, 1.0));
        let x1 = solve_hpd(&a, &b).unwrap();
        let x2 = solve(&a, &b).unwrap();
        assert!(x1.sub(&x2).frobenius_norm() < 1e-12);
        assert!(a.matmul(&x1).sub(&b).frobenius_norm() < 1e-12);
    }

    #[test]
    fn logdet_matches_determinant() {
        let a = hpd3();
        let d = det(&a).unwrap();
        assert!((logdet_hpd(&a).unwrap() - d.re.ln()).abs() < 1e-12);
        assert!(d.im.abs() < 1e-12);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = ComplexMatrix::from_fn(3, 3, |r, c| cplx((r * 3 + c) as f64, if r == c { 2.0 } else { -0.5 }));
        let inv = inverse(&a).unwrap();
        let e = a.matmul(&inv).sub(&ComplexMatrix::identity(3)).frobenius_norm();
        assert!(e < 1e-12, "{e}");
    }

    #[test]
    fn singular_and_indefinite_inputs_are_rejected() {
        let z = ComplexMatrix::<f64>::zeros(2, 2);
        assert!(matches!(inverse(&z), Err(Error::Numeric { .. })));
        let neg = ComplexMatrix::from_real_diag(&[1.0, -1.0]);
        assert!(matches!(cholesky(&neg), Err(Error::Numeric { .. })));
        let rect = ComplexMatrix::<f64>::zeros(2, 3);
        assert!(matches!(solve(&rect, &rect), Err(Error::Dimension { .. })));
    }
}

use crate::numerics::{ComplexMatrix, HermitianEig};
use crate::scalar::Real;

/// Default starting point of the dual iteration.
pub const MU_INIT: f64 = 1e-12;
/// Default number of rational root-update substeps.
pub const MU_SUBSTEPS: usize = 8;
/// `|υ(μ) − 1|` above this after the substeps flags a (near) hard case.
pub const HARD_CASE_TOL: f64 = 1e-6;

/// Spectral data of the per-BS dual function: eigenvalues `λ_m` of `R_k` and
/// the diagonal `φ_m` of `(1/P_k) Dᴴ (Σ Ṽ_i Ṽ_iᴴ) D`, both clamped at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSpectrum<T> {
    pub lambdas: Vec<T>,
    pub phis: Vec<T>,
    pub power_budget: T,
}

impl<T: Real> DualSpectrum<T> {
    /// Builds a spectrum directly from `λ` and `φ`, clamping negatives.
    pub fn new(lambdas: Vec<T>, phis: Vec<T>, power_budget: T) -> Self {
        assert_eq!(lambdas.len(), phis.len(), "lambda and phi lengths differ");
        let clamp = |v: Vec<T>| v.into_iter().map(|x| x.max(T::zero())).collect();
        Self {
            lambdas: clamp(lambdas),
            phis: clamp(phis),
            power_budget,
        }
    }
}

/// Dual spectrum of one base station from the eigendecomposition of `R_k`
/// and the candidate beamformers of its cell.
pub fn dual_spectrum<T: Real>(eig: &HermitianEig<T>, vtilde: &[&ComplexMatrix<T>], power: T) -> DualSpectrum<T> {
    let m = eig.dim();
    let mut phis = vec![T::zero(); m];
    for v in vtilde {
        let x = eig.eigenvectors.adjoint_matmul(v);
        for (r, phi) in phis.iter_mut().enumerate() {
            for c in 0..x.cols() {
                *phi += x[(r, c)].norm_sqr();
            }
        }
    }
    for phi in &mut phis {
        *phi /= power;
    }
    DualSpectrum::new(eig.eigenvalues.clone(), phis, power)
}

/// `υ(μ) = Σ φ_m / (λ_m + μ)²` and its derivative.
///
/// A component with `φ_m > 0` and `λ_m + μ ≤ 1e-300` makes `υ` infinite.
pub fn mu_residual<T: Real>(ds: &DualSpectrum<T>, mu: T) -> (T, T) {
    let tiny = T::lit(1e-300);
    let mut u = T::zero();
    let mut du = T::zero();
    for (&l, &p) in ds.lambdas.iter().zip(&ds.phis) {
        if p <= T::zero() {
            continue;
        }
        let s = l + mu;
        if s <= tiny {
            return (T::infinity(), T::neg_infinity());
        }
        let inv = T::one() / s;
        let inv2 = inv * inv;
        u += p * inv2;
        du -= T::lit(2.0) * p * inv2 * inv;
    }
    (u, du)
}

/// Result of the dual root finder for one base station.
#[derive(Clone, Debug, PartialEq)]
pub struct MuSolution<T> {
    pub mu: T,
    /// `|υ(μ) − 1|`, zero when the power constraint is inactive.
    pub residual: T,
    pub hard_case: bool,
    /// `μ` after each substep.
    pub iterates: Vec<T>,
}

/// Finds `μ ≥ 0` with `υ(μ) = 1` by the rational root update
/// `μ ← μ + 2 (υ/υ′)(1 − √υ)`, clamping negative iterates to zero.
/// Returns `μ = 0` when the constraint is inactive (`υ(0) ≤ 1`).
pub fn mu_step<T: Real>(ds: &DualSpectrum<T>, mu0: T, substeps: usize) -> MuSolution<T> {
    let inactive = |residual| MuSolution {
        mu: T::zero(),
        residual,
        hard_case: false,
        iterates: Vec::new(),
    };
    let total: T = ds.phis.iter().copied().sum();
    if total <= T::lit(1e-30) {
        return inactive(T::zero());
    }
    let (u0, _) = mu_residual(ds, T::zero());
    if u0 <= T::one() + T::lit(1e-12) {
        return inactive(T::zero());
    }
    let mut mu = mu0.max(T::zero());
    let mut iterates = Vec::with_capacity(substeps);
    for _ in 0..substeps {
        let (u, du) = mu_residual(ds, mu);
        if u.is_infinite() {
            mu = (mu * T::lit(2.0)).max(T::lit(MU_INIT));
        } else if du < T::zero() {
            mu += T::lit(2.0) * (u / du) * (T::one() - u.sqrt());
            if mu < T::zero() {
                mu = T::zero();
            }
        }
        iterates.push(mu);
    }
    let (u, _) = mu_residual(ds, mu);
    let residual = (u - T::one()).abs();
    let residual = if residual.is_nan() { T::infinity() } else { residual };
    MuSolution {
        mu,
        residual,
        hard_case: !(residual <= T::lit(HARD_CASE_TOL)),
        iterates,
    }
}

/// Total substep budget of [`mu_solve`].
pub const MU_MAX_SUBSTEPS: usize = 64;
/// Residual at which [`mu_solve`] stops adding substeps.
pub const MU_REFINE_TOL: f64 = 1e-13;

/// [`mu_step`] from [`MU_INIT`], followed by extra substeps of the same update
/// until `|υ(μ) − 1| ≤ MU_REFINE_TOL`. Near the root the update converges
/// quadratically, so most cases need at most one or two more. Wide eigenvalue
/// spreads, where a small-`λ` term dominates `υ(0)` but large-`λ` terms set
/// the root, converge only linearly through the crossover and otherwise leave
/// the power constraint violated by up to about 1e-5. `hard_case` still
/// reports the residual after the first `substeps`; `residual` and `iterates`
/// describe the refined result.
pub fn mu_solve<T: Real>(ds: &DualSpectrum<T>, substeps: usize) -> MuSolution<T> {
    let mut sol = mu_step(ds, T::lit(MU_INIT), substeps);
    if sol.iterates.is_empty() {
        return sol;
    }
    while sol.iterates.len() < MU_MAX_SUBSTEPS.max(substeps) && !(sol.residual <= T::lit(MU_REFINE_TOL)) {
        let next = mu_step(ds, sol.mu, 1);
        if next.mu == sol.mu {
            break;
        }
        sol.mu = next.mu;
        sol.residual = next.residual;
        sol.iterates.extend(next.iterates);
    }
    sol
}

/// Bisection on `υ(μ) = 1`, used to cross-check [`mu_step`].
pub fn mu_bisection<T: Real>(ds: &DualSpectrum<T>, tol: T) -> T {
    let (u0, _) = mu_residual(ds, T::zero());
    if !(u0 > T::one()) {
        return T::zero();
    }
    let mut lo = T::zero();
    let mut hi = T::one();
    while mu_residual(ds, hi).0 > T::one() {
        lo = hi;
        hi = hi * T::lit(2.0);
    }
    while hi - lo > tol * (T::one() + hi) {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if mu_residual(ds, mid).0 > T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / T::lit(2.0)
}

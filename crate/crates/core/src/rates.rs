//! Achievable rates, weighted sum-rate and the WMMSE surrogate objective.

use crate::error::{Error, Result};
use crate::numerics::{logdet_hpd, ComplexMatrix};
use crate::scalar::{real, Real};
use crate::scenario::ScenarioRealization;

/// Relative slack allowed on the per-BS power constraint by [`BeamformerSet::feasible`].
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// One transmit beamformer `V_i` (`M_k x N_i`, `k` the serving BS) per UE.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerSet<T> {
    pub v: Vec<ComplexMatrix<T>>,
}

impl<T: Real> BeamformerSet<T> {
    pub fn zeros(s: &ScenarioRealization<T>) -> Self {
        Self {
            v: (0..s.num_ues())
                .map(|i| ComplexMatrix::zeros(s.bs_antennas(s.serving_bs(i)), s.ue_antennas(i)))
                .collect(),
        }
    }

    pub fn check_shapes(&self, s: &ScenarioRealization<T>) -> Result<()> {
        if self.v.len() != s.num_ues() {
            return Err(Error::dim("beamformers", format!("{} matrices for {} UEs", self.v.len(), s.num_ues())));
        }
        for (i, v) in self.v.iter().enumerate() {
            let want = (s.bs_antennas(s.serving_bs(i)), s.ue_antennas(i));
            if v.shape() != want {
                return Err(Error::dim("beamformers", format!("V[{i}] is {:?}, expected {want:?}", v.shape())));
            }
        }
        Ok(())
    }

    /// Transmit power `Σ_{i∈I_k} ‖V_i‖²` of base station `bs`.
    pub fn power(&self, s: &ScenarioRealization<T>, bs: usize) -> T {
        s.cell(bs).iter().map(|&i| self.v[i].frobenius_norm_sqr()).sum()
    }

    /// All per-BS powers within `P_k (1 + 1e-9)`.
    pub fn feasible(&self, s: &ScenarioRealization<T>) -> bool {
        self.feasible_within(s, T::lit(FEASIBILITY_SLACK))
    }

    pub fn feasible_within(&self, s: &ScenarioRealization<T>, rel: T) -> bool {
        (0..s.num_bs()).all(|k| self.power(s, k) <= s.power(k) * (T::one() + rel))
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|m| m.is_finite())
    }

    pub fn cast<U: Real>(&self) -> BeamformerSet<U> {
        BeamformerSet {
            v: self.v.iter().map(|m| m.cast()).collect(),
        }
    }
}

/// Receive filters `U_i` and MSE weights `W_i`, both `N_i x N_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceiverState<T> {
    pub u: Vec<ComplexMatrix<T>>,
    pub w: Vec<ComplexMatrix<T>>,
}

/// `H_{i,k_j} V_j`: the image of UE `j`'s beamformer at UE `i`.
fn effective<T: Real>(s: &ScenarioRealization<T>, v: &BeamformerSet<T>, i: usize, j: usize) -> ComplexMatrix<T> {
    s.channel(i, s.serving_bs(j)).matmul(&v.v[j])
}

/// Interference-plus-noise covariance `Z_i` and useful-signal covariance `Q_i`.
pub fn covariances<T: Real>(
    s: &ScenarioRealization<T>,
    v: &BeamformerSet<T>,
    i: usize,
) -> (ComplexMatrix<T>, ComplexMatrix<T>) {
    let n = s.ue_antennas(i);
    let mut z = ComplexMatrix::identity(n).scale(s.noise(i));
    let mut q = ComplexMatrix::zeros(n, n);
    for j in 0..s.num_ues() {
        let g = effective(s, v, i, j).gram();
        if j == i {
            q = g;
        } else {
            z.add_assign(&g);
        }
    }
    (z, q)
}

/// Receive covariance `J_i = Z_i + Q_i`.
pub fn receive_covariance<T: Real>(s: &ScenarioRealization<T>, v: &BeamformerSet<T>, i: usize) -> ComplexMatrix<T> {
    let (mut z, q) = covariances(s, v, i);
    z.add_assign(&q);
    z.make_hermitian();
    z
}

/// Achievable rate of UE `i` in nats (times the bandwidth).
pub fn ue_rate<T: Real>(s: &ScenarioRealization<T>, v: &BeamformerSet<T>, i: usize) -> T {
    let (z, q) = covariances(s, v, i);
    let mut j = z.add(&q);
    j.make_hermitian();
    let r = match (logdet_hpd(&j), logdet_hpd(&z)) {
        (Ok(a), Ok(b)) => a - b,
        _ => T::nan(),
    };
    // clamp tiny negative roundoff; NaN passes through for the caller to catch
    s.bandwidth() * if r < T::zero() { T::zero() } else { r }
}

pub fn ue_rates<T: Real>(s: &ScenarioRealization<T>, v: &BeamformerSet<T>) -> Vec<T> {
    (0..s.num_ues()).map(|i| ue_rate(s, v, i)).collect()
}

/// Weighted sum-rate `Σ α_i R_i` in nats.
pub fn wsr<T: Real>(s: &ScenarioRealization<T>, v: &BeamformerSet<T>) -> T {
    (0..s.num_ues()).map(|i| s.weight(i) * ue_rate(s, v, i)).sum()
}

/// MSE matrix `E_i = I − Uᴴ G − Gᴴ U + Uᴴ J U` with `G = H_ik V_i`.
pub fn mse_matrix<T: Real>(
    s: &ScenarioRealization<T>,
    v: &BeamformerSet<T>,
    u: &ComplexMatrix<T>,
    i: usize,
) -> ComplexMatrix<T> {
    let g = s.direct_channel(i).matmul(&v.v[i]);
    let j = receive_covariance(s, v, i);
    let ug = u.adjoint_matmul(&g);
    let mut e = ComplexMatrix::identity(u.cols());
    e = e.sub(&ug).sub(&ug.adjoint());
    e.add_assign(&u.adjoint_matmul(&j.matmul(u)));
    e.make_hermitian();
    e
}

/// Surrogate `Σ α_i (tr(W_i E_i) − logdet W_i)`.
pub fn wmmse_objective<T: Real>(
    s: &ScenarioRealization<T>,
    rx: &ReceiverState<T>,
    v: &BeamformerSet<T>,
) -> Result<T> {
    let mut total = T::zero();
    for i in 0..s.num_ues() {
        let e = mse_matrix(s, v, &rx.u[i], i);
        let w = rx.w[i].hermitian_part();
        let tr = w.matmul(&e).trace().re;
        let ld = logdet_hpd(&w).map_err(|_| {
            Error::numeric("wmmse_objective", format!("W[{i}] is not positive definite"))
        })?;
        total += s.weight(i) * (tr - ld);
    }
    Ok(total)
}

/// `1 x 1` matrix holding `x`.
pub fn scalar_matrix<T: Real>(x: T) -> ComplexMatrix<T> {
    ComplexMatrix::from_fn(1, 1, |_, _| real(x))
}

//! Classical WMMSE block-coordinate descent.

mod dual;

pub use dual::{
    dual_spectrum, mu_bisection, mu_residual, mu_solve, mu_step, DualSpectrum, MuSolution, HARD_CASE_TOL, MU_INIT,
    MU_MAX_SUBSTEPS, MU_REFINE_TOL, MU_SUBSTEPS,
};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{herm_eig, inverse, shifted_pinv_apply, solve_hpd, ComplexMatrix, HermitianEig};
use crate::rates::{receive_covariance, wsr, BeamformerSet, ReceiverState};
use crate::scalar::{Real, C};
use crate::scenario::ScenarioRealization;

/// Receive filters `U_i = J_i⁻¹ H_ik V_i`.
pub fn u_step<T: Real>(s: &ScenarioRealization<T>, v: &BeamformerSet<T>) -> Result<Vec<ComplexMatrix<T>>> {
    (0..s.num_ues())
        .map(|i| {
            let j = receive_covariance(s, v, i);
            solve_hpd(&j, &s.direct_channel(i).matmul(&v.v[i]))
        })
        .collect()
}

/// MSE weights `W_i = (I − V_iᴴ H_ikᴴ U_i)⁻¹`, symmetrized.
pub fn w_step<T: Real>(
    s: &ScenarioRealization<T>,
    v: &BeamformerSet<T>,
    u: &[ComplexMatrix<T>],
) -> Result<Vec<ComplexMatrix<T>>> {
    (0..s.num_ues())
        .map(|i| {
            let g = s.direct_channel(i).matmul(&v.v[i]);
            let e = ComplexMatrix::identity(u[i].cols()).sub(&g.adjoint_matmul(&u[i]));
            let mut w = inverse(&e)?;
            w.make_hermitian();
            if w.rows() > 1 {
                let ev = herm_eig(&w)?.eigenvalues;
                let (lo, hi) = (ev[0], ev[ev.len() - 1]);
                if !(lo > T::zero()) || hi / lo > T::lit(1e14) {
                    log::warn!("W[{i}] is ill-conditioned (eigenvalues {lo} .. {hi})");
                }
            }
            Ok(w)
        })
        .collect()
}

/// Weighted uplink covariances `R_k = Σ_j α_j H_jkᴴ U_j W_j U_jᴴ H_jk` (over
/// all UEs `j`) and candidate beamformers `Ṽ_i = α_i H_ikᴴ U_i W_i`.
pub fn uplink_quantities<T: Real>(
    s: &ScenarioRealization<T>,
    u: &[ComplexMatrix<T>],
    w: &[ComplexMatrix<T>],
) -> (Vec<ComplexMatrix<T>>, Vec<ComplexMatrix<T>>) {
    let mut r: Vec<ComplexMatrix<T>> = (0..s.num_bs())
        .map(|k| ComplexMatrix::zeros(s.bs_antennas(k), s.bs_antennas(k)))
        .collect();
    let mut vtilde = Vec::with_capacity(s.num_ues());
    for j in 0..s.num_ues() {
        let uw = u[j].matmul(&w[j]).scale(s.weight(j));
        let mut a = uw.matmul_adjoint(&u[j]);
        a.make_hermitian();
        for (k, rk) in r.iter_mut().enumerate() {
            let h = s.channel(j, k);
            rk.add_assign(&h.adjoint_matmul(&a.matmul(h)));
        }
        vtilde.push(s.direct_channel(j).adjoint_matmul(&uw));
    }
    for rk in &mut r {
        rk.make_hermitian();
    }
    (r, vtilde)
}

/// Candidate beamformers of cell `bs`.
pub fn cell_vtilde<'a, T: Real>(
    s: &ScenarioRealization<T>,
    bs: usize,
    vtilde: &'a [ComplexMatrix<T>],
) -> Vec<&'a ComplexMatrix<T>> {
    s.cell(bs).iter().map(|&i| &vtilde[i]).collect()
}

/// `V_i = (R_k + μ_k I)† Ṽ_i` through the spectrum of `R_k`.
pub fn v_step<T: Real>(
    s: &ScenarioRealization<T>,
    eigs: &[HermitianEig<T>],
    mus: &[T],
    vtilde: &[ComplexMatrix<T>],
) -> Result<BeamformerSet<T>> {
    let v = (0..s.num_ues())
        .map(|i| {
            let k = s.serving_bs(i);
            shifted_pinv_apply(&eigs[k], mus[k], &vtilde[i])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BeamformerSet { v })
}

/// Per-BS eigendecompositions, dual spectra and dual variables.
pub fn dual_stage<T: Real>(
    s: &ScenarioRealization<T>,
    r: &[ComplexMatrix<T>],
    vtilde: &[ComplexMatrix<T>],
    substeps: usize,
) -> Result<(Vec<HermitianEig<T>>, Vec<DualSpectrum<T>>, Vec<MuSolution<T>>)> {
    let mut eigs = Vec::with_capacity(s.num_bs());
    let mut spectra = Vec::with_capacity(s.num_bs());
    let mut mus = Vec::with_capacity(s.num_bs());
    for (k, rk) in r.iter().enumerate() {
        let eig = herm_eig(rk)?;
        let ds = dual_spectrum(&eig, &cell_vtilde(s, k, vtilde), s.power(k));
        mus.push(mu_solve(&ds, substeps));
        spectra.push(ds);
        eigs.push(eig);
    }
    Ok((eigs, spectra, mus))
}

/// Every intermediate quantity of one full U, W, μ, V sweep.
#[derive(Clone, Debug)]
pub struct Iteration<T> {
    pub receivers: ReceiverState<T>,
    pub r: Vec<ComplexMatrix<T>>,
    pub vtilde: Vec<ComplexMatrix<T>>,
    pub eigs: Vec<HermitianEig<T>>,
    pub spectra: Vec<DualSpectrum<T>>,
    pub mu: Vec<MuSolution<T>>,
    pub v: BeamformerSet<T>,
}

pub fn iterate<T: Real>(s: &ScenarioRealization<T>, v: &BeamformerSet<T>, substeps: usize) -> Result<Iteration<T>> {
    let u = u_step(s, v)?;
    let w = w_step(s, v, &u)?;
    let (r, vtilde) = uplink_quantities(s, &u, &w);
    let (eigs, spectra, mu) = dual_stage(s, &r, &vtilde, substeps)?;
    let mu_values: Vec<T> = mu.iter().map(|m| m.mu).collect();
    let v_new = v_step(s, &eigs, &mu_values, &vtilde)?;
    Ok(Iteration {
        receivers: ReceiverState { u, w },
        r,
        vtilde,
        eigs,
        spectra,
        mu,
        v: v_new,
    })
}

fn normalize_cells<T: Real>(s: &ScenarioRealization<T>, v: &mut BeamformerSet<T>) -> bool {
    let mut ok = true;
    for k in 0..s.num_bs() {
        let p = v.power(s, k);
        if !(p > T::zero()) {
            ok = false;
            continue;
        }
        let c = (s.power(k) / p).sqrt();
        for &i in s.cell(k) {
            v.v[i].scale_mut(c);
        }
    }
    ok
}

fn gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix<T> {
    let s = 0.5f64.sqrt();
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C::new(T::lit(s * re), T::lit(s * im))
    })
}

/// Entries i.i.d. `CN(0, 1)`, scaled so every BS transmits exactly `P_k`.
pub fn init_random<T: Real, R: Rng + ?Sized>(s: &ScenarioRealization<T>, rng: &mut R) -> BeamformerSet<T> {
    let mut v = BeamformerSet::zeros(s);
    for m in &mut v.v {
        *m = gaussian(rng, m.rows(), m.cols());
    }
    normalize_cells(s, &mut v);
    v
}

/// Maximum-ratio init `V_i = c_k H_ikᴴ` with `c_k` meeting `P_k` exactly.
/// A cell whose direct channels are all zero falls back to random entries
/// from a fixed stream.
pub fn init_mrc<T: Real>(s: &ScenarioRealization<T>) -> BeamformerSet<T> {
    let mut v = BeamformerSet {
        v: (0..s.num_ues()).map(|i| s.direct_channel(i).adjoint()).collect(),
    };
    if !normalize_cells(s, &mut v) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for k in 0..s.num_bs() {
            if v.power(s, k) > T::zero() {
                continue;
            }
            log::warn!("all direct channels of BS {k} are zero, using random MRC fallback");
            for &i in s.cell(k) {
                v.v[i] = gaussian(&mut rng, v.v[i].rows(), v.v[i].cols());
            }
        }
        normalize_cells(s, &mut v);
    }
    v
}

/// Per-iteration record of a classical or unrolled run.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverTrajectory<T> {
    pub beamformers: Vec<BeamformerSet<T>>,
    pub wsr: Vec<T>,
    pub mu: Vec<Vec<T>>,
    /// `μ_k (Σ‖V_i‖² / P_k − 1)` per BS.
    pub cs_residual: Vec<Vec<T>>,
    /// `|υ_k(μ_k) − 1|` of the root finder.
    pub mu_residual: Vec<Vec<T>>,
    pub hard_case: Vec<Vec<bool>>,
    pub communication_rounds: usize,
}

impl<T: Real> SolverTrajectory<T> {
    pub fn new() -> Self {
        Self {
            beamformers: Vec::new(),
            wsr: Vec::new(),
            mu: Vec::new(),
            cs_residual: Vec::new(),
            mu_residual: Vec::new(),
            hard_case: Vec::new(),
            communication_rounds: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.wsr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wsr.is_empty()
    }

    pub fn final_beamformers(&self) -> Option<&BeamformerSet<T>> {
        self.beamformers.last()
    }

    pub fn final_wsr(&self) -> Option<T> {
        self.wsr.last().copied()
    }

    /// Appends one iteration/layer output.
    pub fn push(&mut self, s: &ScenarioRealization<T>, v: BeamformerSet<T>, mu: &[MuSolution<T>]) {
        self.wsr.push(wsr(s, &v));
        self.cs_residual.push(
            mu.iter()
                .enumerate()
                .map(|(k, m)| m.mu * (v.power(s, k) / s.power(k) - T::one()))
                .collect(),
        );
        self.mu.push(mu.iter().map(|m| m.mu).collect());
        self.mu_residual.push(mu.iter().map(|m| m.residual).collect());
        self.hard_case.push(mu.iter().map(|m| m.hard_case).collect());
        self.beamformers.push(v);
        self.communication_rounds += 1;
    }

    /// The first `n` entries, as if the run had stopped there.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            beamformers: self.beamformers[..n].to_vec(),
            wsr: self.wsr[..n].to_vec(),
            mu: self.mu[..n].to_vec(),
            cs_residual: self.cs_residual[..n].to_vec(),
            mu_residual: self.mu_residual[..n].to_vec(),
            hard_case: self.hard_case[..n].to_vec(),
            communication_rounds: n,
        }
    }

    pub fn hard_case_count(&self) -> usize {
        self.hard_case.iter().flatten().filter(|&&h| h).count()
    }
}

impl<T: Real> Default for SolverTrajectory<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Runs `iterations` full WMMSE sweeps from `init`.
pub fn run<T: Real>(
    s: &ScenarioRealization<T>,
    init: &BeamformerSet<T>,
    iterations: usize,
    substeps: usize,
) -> Result<SolverTrajectory<T>> {
    init.check_shapes(s)?;
    let mut traj = SolverTrajectory::new();
    let mut v = init.clone();
    for it in 0..iterations {
        let step = iterate(s, &v, substeps).map_err(|e| match e {
            Error::Numeric { .. } if !v.is_finite() => Error::NotFinite { stage: "iteration", index: it },
            other => other,
        })?;
        if !step.v.is_finite() {
            return Err(Error::NotFinite { stage: "iteration", index: it });
        }
        v = step.v.clone();
        traj.push(s, step.v, &step.mu);
        if !traj.wsr[it].is_finite() {
            return Err(Error::NotFinite { stage: "iteration", index: it });
        }
    }
    Ok(traj)
}

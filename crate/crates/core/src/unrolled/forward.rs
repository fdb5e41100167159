use super::params::{LayerParams, ParameterSet, PgdParameterSet};
use crate::error::{Error, Result};
use crate::numerics::{shifted_pinv_apply, ComplexMatrix, HermitianEig};
use crate::rates::BeamformerSet;
use crate::scalar::{Real, C};
use crate::scenario::ScenarioRealization;
use crate::wmmse::{dual_stage, init_mrc, u_step, uplink_quantities, w_step, MuSolution, SolverTrajectory};

/// Polynomial weight filter `a_0 I + Σ_g a_g / (tr(Ŵ)/N)^{g−1} Ŵ^g`.
pub fn weight_gcf<T: Real>(w_hat: &ComplexMatrix<T>, taps: &[T]) -> ComplexMatrix<T> {
    let n = w_hat.rows();
    let scale = (w_hat.trace().re / T::lit(n as f64)).max(T::lit(1e-30));
    let mut out = ComplexMatrix::identity(n).scale(taps[0]);
    let mut power = ComplexMatrix::identity(n);
    let mut norm = T::one();
    for (g, &a) in taps.iter().enumerate().skip(1) {
        power = power.matmul(w_hat);
        if g > 1 {
            norm = norm * scale;
        }
        if a != T::zero() {
            out.add_assign(&power.scale(a / norm));
        }
    }
    out.make_hermitian();
    out
}

/// Phase-preserving ReLU: `(|x| + b) x/|x|` when `|x| + b > 0`, else 0.
#[inline]
pub fn modrelu<T: Real>(x: C<T>, b: T) -> C<T> {
    let r = x.norm();
    if r == T::zero() || !(r + b > T::zero()) {
        return C::new(T::zero(), T::zero());
    }
    x.scale((r + b) / r)
}

/// Feature matrices `P_id` (`M_k x F`) carried between layers, indexed by UE
/// then stream.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerState<T> {
    pub p: Vec<Vec<ComplexMatrix<T>>>,
}

impl<T: Real> LayerState<T> {
    pub fn zeros(s: &ScenarioRealization<T>, features: usize) -> Self {
        Self {
            p: (0..s.num_ues())
                .map(|i| vec![ComplexMatrix::zeros(s.bs_antennas(s.serving_bs(i)), features); s.ue_antennas(i)])
                .collect(),
        }
    }
}

/// One downlink graph-convolution layer. Returns the un-projected beamformers
/// and the post-skip feature matrices.
pub fn downlink_gcn_layer<T: Real>(
    s: &ScenarioRealization<T>,
    eigs: &[HermitianEig<T>],
    mus: &[T],
    vtilde: &[ComplexMatrix<T>],
    prev: &LayerState<T>,
    layer: &LayerParams<T>,
    b_s: T,
) -> Result<(BeamformerSet<T>, LayerState<T>)> {
    let f = layer.a_v1.len();
    let mut v_hat = Vec::with_capacity(s.num_ues());
    let mut state = Vec::with_capacity(s.num_ues());
    for i in 0..s.num_ues() {
        let k = s.serving_bs(i);
        let m = s.bs_antennas(k);
        let shifted = shifted_pinv_apply(&eigs[k], mus[k], &vtilde[i])?;
        let bias = (s.power(k) / T::lit(s.cell(k).len() as f64)).sqrt() / b_s;
        let mut out = ComplexMatrix::zeros(m, s.ue_antennas(i));
        let mut streams = Vec::with_capacity(s.ue_antennas(i));
        for d in 0..s.ue_antennas(i) {
            let mut p = ComplexMatrix::from_fn(m, f, |r, c| {
                shifted[(r, d)] * layer.a_v1[c] + vtilde[i][(r, d)] * layer.a_v0[c]
            });
            if let Some(skip) = &layer.d {
                p.add_assign(&prev.p[i][d].matmul(skip));
            }
            for r in 0..m {
                let mut acc = C::new(T::zero(), T::zero());
                for c in 0..f {
                    acc += modrelu(p[(r, c)], bias * layer.b[c]) * layer.c[c];
                }
                out[(r, d)] = acc;
            }
            streams.push(p);
        }
        v_hat.push(out);
        state.push(streams);
    }
    Ok((BeamformerSet { v: v_hat }, LayerState { p: state }))
}

/// Scales each cell onto the power ball: factor `√P_k / √max(Σ‖V̂_i‖², P_k)`.
/// Excess power within a few ulps of `P_k` is left alone so that the map is
/// idempotent in floating point.
pub fn power_projection<T: Real>(s: &ScenarioRealization<T>, v: &mut BeamformerSet<T>) {
    for k in 0..s.num_bs() {
        let p = v.power(s, k);
        let budget = s.power(k);
        if p > budget * (T::one() + T::lit(8.0) * T::epsilon()) {
            let c = (budget / p).sqrt();
            for &i in s.cell(k) {
                v.v[i].scale_mut(c);
            }
        }
    }
}

fn check_layer<T: Real>(v: &BeamformerSet<T>, wsr: T, layer: usize) -> Result<()> {
    if !v.is_finite() || !wsr.is_finite() {
        return Err(Error::NotFinite { stage: "layer", index: layer });
    }
    Ok(())
}

/// GCN-WMMSE forward pass from the MRC initialization.
pub fn gcnwmmse_forward<T: Real>(
    s: &ScenarioRealization<T>,
    params: &ParameterSet<T>,
    substeps: usize,
) -> Result<SolverTrajectory<T>> {
    gcnwmmse_forward_from(s, params, &init_mrc(s), substeps)
}

pub fn gcnwmmse_forward_from<T: Real>(
    s: &ScenarioRealization<T>,
    params: &ParameterSet<T>,
    init: &BeamformerSet<T>,
    substeps: usize,
) -> Result<SolverTrajectory<T>> {
    params.validate()?;
    init.check_shapes(s)?;
    let mut traj = SolverTrajectory::new();
    let mut v = init.clone();
    let mut state = LayerState::zeros(s, params.features);
    for (l, layer) in params.layers.iter().enumerate() {
        let not_finite = |e: Error| match e {
            Error::Numeric { .. } => Error::NotFinite { stage: "layer", index: l },
            other => other,
        };
        let u = u_step(s, &v).map_err(not_finite)?;
        let w_hat = w_step(s, &v, &u).map_err(not_finite)?;
        let w: Vec<_> = w_hat.iter().map(|m| weight_gcf(m, &layer.a_w)).collect();
        let (r, vtilde) = uplink_quantities(s, &u, &w);
        let (eigs, _, mu) = dual_stage(s, &r, &vtilde, substeps).map_err(not_finite)?;
        let mu_values: Vec<T> = mu.iter().map(|m| m.mu).collect();
        let (mut v_hat, next) = downlink_gcn_layer(s, &eigs, &mu_values, &vtilde, &state, layer, params.b_s)?;
        power_projection(s, &mut v_hat);
        v = v_hat.clone();
        state = next;
        traj.push(s, v_hat, &mu);
        check_layer(&v, traj.wsr[l], l)?;
    }
    Ok(traj)
}

/// Projected-gradient V-step: `V ← Π(V − γ_q (R_k V − Ṽ_i))` for each substep,
/// starting from `v_prev`.
pub fn pgd_v_step<T: Real>(
    s: &ScenarioRealization<T>,
    r: &[ComplexMatrix<T>],
    vtilde: &[ComplexMatrix<T>],
    v_prev: &BeamformerSet<T>,
    gammas: &[T],
) -> BeamformerSet<T> {
    let mut v = v_prev.clone();
    power_projection(s, &mut v);
    for &gamma in gammas {
        for i in 0..s.num_ues() {
            let k = s.serving_bs(i);
            let grad = r[k].matmul(&v.v[i]).sub(&vtilde[i]);
            v.v[i].axpy(C::new(-gamma, T::zero()), &grad);
        }
        power_projection(s, &mut v);
    }
    v
}

/// Unfolded projected-gradient baseline from the MRC initialization.
pub fn pgd_forward<T: Real>(s: &ScenarioRealization<T>, params: &PgdParameterSet<T>) -> Result<SolverTrajectory<T>> {
    params.validate()?;
    let mut traj = SolverTrajectory::new();
    let mut v = init_mrc(s);
    let idle: Vec<MuSolution<T>> = (0..s.num_bs())
        .map(|_| MuSolution {
            mu: T::zero(),
            residual: T::zero(),
            hard_case: false,
            iterates: Vec::new(),
        })
        .collect();
    for (l, gammas) in params.gammas.iter().enumerate() {
        let not_finite = |e: Error| match e {
            Error::Numeric { .. } => Error::NotFinite { stage: "layer", index: l },
            other => other,
        };
        let u = u_step(s, &v).map_err(not_finite)?;
        let w = w_step(s, &v, &u).map_err(not_finite)?;
        let (r, vtilde) = uplink_quantities(s, &u, &w);
        v = pgd_v_step(s, &r, &vtilde, &v, gammas);
        traj.push(s, v.clone(), &idle);
        check_layer(&v, traj.wsr[l], l)?;
    }
    Ok(traj)
}

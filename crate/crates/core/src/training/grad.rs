use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::wmmse::DualSpectrum;

/// Floor of the per-coordinate finite-difference step.
pub const MIN_FD_STEP: f64 = 1e-6;

/// Derivative-free gradient of a scalar objective.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    /// Objective at the nominal point.
    pub loss: f64,
    /// Partials whose perturbed evaluations were not finite (set to 0); for
    /// SPSA the number of dropped probes.
    pub nan_partials: usize,
}

impl GradientEstimate {
    pub fn norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Central differences with step `max(h |θ_j|, 1e-6)` per coordinate. The
/// `2 · dim` evaluations run in parallel; results are assembled in index
/// order so the output is independent of the thread count.
pub fn central_difference<F>(f: F, theta: &[f64], h: f64) -> Result<GradientEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    let loss = f(theta);
    let partials: Vec<Option<f64>> = (0..theta.len())
        .into_par_iter()
        .map(|j| {
            let step = (h * theta[j].abs()).max(MIN_FD_STEP);
            let mut x = theta.to_vec();
            x[j] = theta[j] + step;
            let up = f(&x);
            x[j] = theta[j] - step;
            let down = f(&x);
            let g = (up - down) / (2.0 * step);
            g.is_finite().then_some(g)
        })
        .collect();
    let nan_partials = partials.iter().filter(|p| p.is_none()).count();
    if nan_partials > 0 {
        log::warn!("{nan_partials} finite-difference partials were not finite and were zeroed");
    }
    Ok(GradientEstimate {
        grad: partials.into_iter().map(|p| p.unwrap_or(0.0)).collect(),
        loss,
        nan_partials,
    })
}

/// Simultaneous-perturbation estimate averaged over `probes` Rademacher
/// directions `δ`: `ĝ = (f(θ + cδ) − f(θ − cδ)) / (2c) · δ`.
///
/// For smooth `f` the estimate is unbiased up to `O(c²)` because
/// `E[δ δᵀ] = I`.
pub fn spsa<F, R>(f: F, theta: &[f64], scale: f64, probes: usize, rng: &mut R) -> Result<GradientEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Rng + ?Sized,
{
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!("SPSA perturbation scale must be positive, got {scale}")));
    }
    if probes == 0 {
        return Err(Error::InvalidArgument("SPSA needs at least one probe".into()));
    }
    let deltas: Vec<Vec<f64>> = (0..probes)
        .map(|_| (0..theta.len()).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect())
        .collect();
    let loss = f(theta);
    let diffs: Vec<Option<f64>> = deltas
        .par_iter()
        .map(|delta| {
            let plus: Vec<f64> = theta.iter().zip(delta).map(|(t, d)| t + scale * d).collect();
            let minus: Vec<f64> = theta.iter().zip(delta).map(|(t, d)| t - scale * d).collect();
            let g = (f(&plus) - f(&minus)) / (2.0 * scale);
            g.is_finite().then_some(g)
        })
        .collect();
    let mut grad = vec![0.0; theta.len()];
    let mut bad = 0;
    for (delta, d) in deltas.iter().zip(&diffs) {
        match d {
            Some(d) => {
                for (g, x) in grad.iter_mut().zip(delta) {
                    *g += d * x;
                }
            }
            None => bad += 1,
        }
    }
    for g in &mut grad {
        *g /= probes as f64;
    }
    if bad > 0 {
        log::warn!("{bad} of {probes} SPSA probes were not finite and were dropped");
    }
    Ok(GradientEstimate {
        grad,
        loss,
        nan_partials: bad,
    })
}

/// Implicit derivatives of the optimal dual variable with respect to `φ` and
/// `λ`. Both vectors are zero when `μ = 0` (inactive or boundary case).
pub fn mu_opt_gradient(ds: &DualSpectrum<f64>, mu_opt: f64) -> (Vec<f64>, Vec<f64>) {
    let m = ds.lambdas.len();
    if !(mu_opt > 0.0) {
        return (vec![0.0; m], vec![0.0; m]);
    }
    let s3: f64 = ds
        .lambdas
        .iter()
        .zip(&ds.phis)
        .map(|(&l, &p)| p / (l + mu_opt).powi(3))
        .sum();
    if !(s3 > 0.0) {
        return (vec![0.0; m], vec![0.0; m]);
    }
    let d_phi = ds.lambdas.iter().map(|&l| (l + mu_opt).powi(-2) / (2.0 * s3)).collect();
    let d_lambda = ds
        .lambdas
        .iter()
        .zip(&ds.phis)
        .map(|(&l, &p)| -p * (l + mu_opt).powi(-3) / s3)
        .collect();
    (d_phi, d_lambda)
}

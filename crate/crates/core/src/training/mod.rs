//! Derivative-free training of unrolled networks.

mod grad;
mod optim;

pub use grad::{central_difference, mu_opt_gradient, spsa, GradientEstimate, MIN_FD_STEP};
pub use optim::{optimizer_step, AdamState, AdamWConfig, LrSchedule, StepInfo};

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::herm_eig;
use crate::scenario::{sample_batch, ScenarioConfig};
use crate::unrolled::{gcnwmmse_forward, pgd_forward, ParameterSet, PgdParameterSet};
use crate::wmmse::{self, init_mrc, MU_SUBSTEPS};
use crate::Realization;

/// Smallest normalizer `r` used in the sample-normalized loss.
pub const MIN_NORMALIZER: f64 = 1e-12;
/// Stream index of the first generated validation realization, far away from
/// the training streams.
pub const VALIDATION_STREAM: u64 = 1 << 40;
/// Lower bound applied to trained PGD step sizes.
pub const MIN_PGD_STEP: f64 = 1e-8;

/// A trainable network.
pub trait Model: Clone + Send + Sync {
    fn to_flat(&self) -> Vec<f64>;
    fn with_flat(&self, flat: &[f64]) -> Self;
    /// Restores parameter constraints after an unconstrained update.
    fn project(&mut self);
    /// WSR after every layer.
    fn layer_wsr(&self, s: &Realization, substeps: usize) -> Result<Vec<f64>>;
    fn num_layers(&self) -> usize;
    fn set_bias_scale(&mut self, _b_s: f64) {}
}

impl Model for ParameterSet<f64> {
    fn to_flat(&self) -> Vec<f64> {
        ParameterSet::to_flat(self)
    }

    fn with_flat(&self, flat: &[f64]) -> Self {
        ParameterSet::with_flat(self, flat)
    }

    fn project(&mut self) {
        ParameterSet::project(self)
    }

    fn layer_wsr(&self, s: &Realization, substeps: usize) -> Result<Vec<f64>> {
        Ok(gcnwmmse_forward(s, self, substeps)?.wsr)
    }

    fn num_layers(&self) -> usize {
        ParameterSet::num_layers(self)
    }

    fn set_bias_scale(&mut self, b_s: f64) {
        self.b_s = b_s;
    }
}

impl Model for PgdParameterSet<f64> {
    fn to_flat(&self) -> Vec<f64> {
        PgdParameterSet::to_flat(self)
    }

    fn with_flat(&self, flat: &[f64]) -> Self {
        PgdParameterSet::with_flat(self, flat)
    }

    fn project(&mut self) {
        for g in self.gammas.iter_mut().flatten() {
            if !(*g >= MIN_PGD_STEP) {
                *g = MIN_PGD_STEP;
            }
        }
    }

    fn layer_wsr(&self, s: &Realization, _substeps: usize) -> Result<Vec<f64>> {
        Ok(pgd_forward(s, self)?.wsr)
    }

    fn num_layers(&self) -> usize {
        PgdParameterSet::num_layers(self)
    }
}

/// Layers entering the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossLayers {
    Last,
    All,
}

impl LossLayers {
    pub fn indices(self, layers: usize) -> Vec<usize> {
        match self {
            LossLayers::Last => vec![layers - 1],
            LossLayers::All => (0..layers).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Estimator {
    /// Central differences with relative step `h` (floored at 1e-6).
    CentralFd { h: f64 },
    Spsa { scale: f64, probes: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GcnInit {
    /// Random complex taps, zero biases and skips, uniform weight taps.
    #[default]
    Random,
    /// Start from the parameters that reproduce classical WMMSE.
    Wmmse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NetworkSpec {
    Gcn {
        layers: usize,
        features: usize,
        degree: usize,
        #[serde(default)]
        init: GcnInit,
    },
    Pgd {
        layers: usize,
        substeps: usize,
        /// Initial step size; derived from the training data when absent.
        #[serde(default)]
        gamma: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub network: NetworkSpec,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: LrSchedule,
    pub optimizer: AdamWConfig,
    pub loss_layers: LossLayers,
    pub estimator: Estimator,
    pub seed: u64,
    /// μ-step substeps inside the forward pass.
    pub substeps: usize,
    pub validation_size: usize,
    pub validation_interval: usize,
    pub b_s_decay: f64,
    /// Consecutive bad steps before training is aborted.
    pub divergence_window: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            network: NetworkSpec::Gcn {
                layers: 3,
                features: 2,
                degree: 2,
                init: GcnInit::Random,
            },
            steps: 500,
            batch_size: 10,
            lr: LrSchedule::default(),
            optimizer: AdamWConfig::default(),
            loss_layers: LossLayers::Last,
            estimator: Estimator::CentralFd { h: 1e-4 },
            seed: 0,
            substeps: MU_SUBSTEPS,
            validation_size: 50,
            validation_interval: 25,
            b_s_decay: 0.99,
            divergence_window: 50,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr.initial > 0.0) || !(self.lr.factor > 0.0) {
            return bad("learning rate and decay factor must be positive");
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return bad("optimizer moments must lie in [0, 1)");
        }
        if o.weight_decay < 0.0 || !(o.eps > 0.0) || !(o.clip > 0.0) {
            return bad("weight decay must be non-negative, eps and clip positive");
        }
        match self.estimator {
            Estimator::CentralFd { h } if !(h > 0.0) => return bad("finite-difference step must be positive"),
            Estimator::Spsa { scale, probes } if !(scale > 0.0) || probes == 0 => {
                return bad("SPSA needs a positive scale and at least one probe")
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.b_s_decay) {
            return bad("b_s_decay must lie in [0, 1)");
        }
        match self.network {
            NetworkSpec::Gcn { layers, features, .. } if layers == 0 || features == 0 => {
                bad("network needs at least one layer and one feature")
            }
            NetworkSpec::Pgd { layers, substeps, gamma } if layers == 0 || substeps == 0 || gamma.map_or(false, |g| !(g > 0.0)) => {
                bad("PGD network needs layers, substeps and a positive step size")
            }
            _ => Ok(()),
        }
    }
}

/// Where training and validation realizations come from.
#[derive(Clone, Debug)]
pub enum ScenarioSource {
    /// Fresh realizations every step, drawn from consecutive streams of `seed`.
    Generator { config: ScenarioConfig, seed: u64 },
    /// A fixed dataset; minibatches are drawn with replacement.
    Dataset { train: Vec<Realization>, validation: Vec<Realization> },
}

impl ScenarioSource {
    pub fn batch(&self, step: usize, size: usize, seed: u64) -> Result<Vec<Realization>> {
        match self {
            ScenarioSource::Generator { config, seed } => sample_batch(config, *seed, (step * size) as u64, size),
            ScenarioSource::Dataset { train, .. } => {
                if train.is_empty() {
                    return Err(Error::Config("training dataset is empty".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(step as u64);
                Ok((0..size).map(|_| train[rng.gen_range(0..train.len())].clone()).collect())
            }
        }
    }

    pub fn validation(&self, size: usize) -> Result<Vec<Realization>> {
        match self {
            ScenarioSource::Generator { config, seed } => sample_batch(config, *seed, VALIDATION_STREAM, size),
            ScenarioSource::Dataset { validation, .. } => Ok(validation.iter().take(size).cloned().collect()),
        }
    }
}

/// Per-sample, per-layer WSR; a failed forward pass yields NaN entries.
pub fn batch_layer_wsr<M: Model>(model: &M, batch: &[Realization], substeps: usize) -> Vec<Vec<f64>> {
    batch
        .iter()
        .map(|s| model.layer_wsr(s, substeps).unwrap_or_else(|_| vec![f64::NAN; model.num_layers()]))
        .collect()
}

/// Normalizers `r_n^ℓ = |J_WSR|` at the nominal point, floored at 1e-12.
pub fn normalizers(wsr: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut floored = 0;
    let r = wsr
        .iter()
        .map(|row| {
            row.iter()
                .map(|&w| {
                    if w.abs() < MIN_NORMALIZER {
                        floored += 1;
                        MIN_NORMALIZER
                    } else {
                        w.abs()
                    }
                })
                .collect()
        })
        .collect();
    if floored > 0 {
        log::warn!("{floored} loss normalizers were floored at {MIN_NORMALIZER}");
    }
    r
}

/// `(1 / (|T| |ℒ|)) Σ_n Σ_ℓ −wsr_n^ℓ / r_n^ℓ`.
pub fn normalized_loss(wsr: &[Vec<f64>], r: &[Vec<f64>], layers: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, rr) in wsr.iter().zip(r) {
        for &l in layers {
            total += -row[l] / rr[l];
        }
    }
    total / (wsr.len() * layers.len()) as f64
}

/// Sample-normalized loss with normalizers taken at the same point, which is
/// `−1` whenever every WSR is positive.
pub fn loss<M: Model>(model: &M, batch: &[Realization], layers: LossLayers, substeps: usize) -> f64 {
    let w = batch_layer_wsr(model, batch, substeps);
    normalized_loss(&w, &normalizers(&w), &layers.indices(model.num_layers()))
}

/// Loss at `model` with normalizers frozen at some other (nominal) point.
pub fn loss_with<M: Model>(model: &M, batch: &[Realization], r: &[Vec<f64>], layers: LossLayers, substeps: usize) -> f64 {
    let w = batch_layer_wsr(model, batch, substeps);
    normalized_loss(&w, r, &layers.indices(model.num_layers()))
}

/// Builds the frozen-normalizer objective `θ ↦ J(θ)` around a nominal model.
pub fn frozen_objective<'a, M: Model>(
    nominal: &'a M,
    batch: &'a [Realization],
    r: &'a [Vec<f64>],
    layers: LossLayers,
    substeps: usize,
) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    move |theta: &[f64]| {
        let mut m = nominal.with_flat(theta);
        m.project();
        loss_with(&m, batch, r, layers, substeps)
    }
}

/// Central-difference gradient of the frozen-normalizer loss.
pub fn fd_gradient<M: Model>(
    batch: &[Realization],
    model: &M,
    h: f64,
    layers: LossLayers,
    substeps: usize,
) -> Result<GradientEstimate> {
    let r = normalizers(&batch_layer_wsr(model, batch, substeps));
    central_difference(frozen_objective(model, batch, &r, layers, substeps), &model.to_flat(), h)
}

/// SPSA gradient of the frozen-normalizer loss.
pub fn spsa_gradient<M: Model, R: Rng + ?Sized>(
    batch: &[Realization],
    model: &M,
    scale: f64,
    probes: usize,
    layers: LossLayers,
    substeps: usize,
    rng: &mut R,
) -> Result<GradientEstimate> {
    let r = normalizers(&batch_layer_wsr(model, batch, substeps));
    spsa(frozen_objective(model, batch, &r, layers, substeps), &model.to_flat(), scale, probes, rng)
}

/// Batch average of `√(P_k / |I_k|)` over all base stations.
pub fn bias_scale_estimate(batch: &[Realization]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for s in batch {
        for k in 0..s.num_bs() {
            total += (s.power(k) / s.cell(k).len() as f64).sqrt();
            n += 1;
        }
    }
    total / n.max(1) as f64
}

/// Mean final-layer WSR; NaN if any forward pass fails.
pub fn mean_final_wsr<M: Model>(model: &M, set: &[Realization], substeps: usize) -> f64 {
    let w: Vec<f64> = set
        .par_iter()
        .map(|s| model.layer_wsr(s, substeps).ok().and_then(|w| w.last().copied()).unwrap_or(f64::NAN))
        .collect();
    w.iter().sum::<f64>() / w.len().max(1) as f64
}

/// Median of `1/λ_max(R_k)` after one MRC-initialized WMMSE iteration, a
/// natural step size for the projected-gradient V-step.
pub fn suggest_pgd_step(set: &[Realization]) -> Result<f64> {
    let mut steps = Vec::new();
    for s in set {
        let it = wmmse::iterate(s, &init_mrc(s), MU_SUBSTEPS)?;
        for r in &it.r {
            let ev = herm_eig(r)?.eigenvalues;
            let top = ev[ev.len() - 1];
            if top > 0.0 {
                steps.push(1.0 / top);
            }
        }
    }
    if steps.is_empty() {
        return Err(Error::Config("cannot derive a PGD step size from an empty or silent dataset".into()));
    }
    steps.sort_by(|a, b| a.total_cmp(b));
    Ok(steps[steps.len() / 2])
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    /// Mean of `−wsr` over the batch and the loss layers at the nominal point
    /// (the normalized loss itself is identically −1 there).
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
    pub clipped: bool,
    #[serde(rename = "b_S")]
    pub b_s: f64,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome<M> {
    /// Best model on the validation set (last model without validation).
    pub model: M,
    pub log: Vec<LogRow>,
    pub best_validation_wsr: Option<f64>,
    /// Number of optimizer steps taken before the returned model.
    pub best_step: usize,
    pub diverged_at: Option<usize>,
    pub nan_partials: usize,
}

fn mean_loss_layers(wsr: &[Vec<f64>], layers: &[usize]) -> f64 {
    let mut total = 0.0;
    for row in wsr {
        for &l in layers {
            total += row[l];
        }
    }
    total / (wsr.len() * layers.len()) as f64
}

/// Trains `init` with AdamW on derivative-free gradients of the
/// sample-normalized loss.
pub fn train<M: Model>(cfg: &TrainingConfig, source: &ScenarioSource, init: M) -> Result<TrainingOutcome<M>> {
    cfg.validate()?;
    let layers = cfg.loss_layers.indices(init.num_layers());
    let validation = if cfg.validation_size > 0 {
        source.validation(cfg.validation_size)?
    } else {
        Vec::new()
    };
    let mut model = init;
    let mut theta = model.to_flat();
    let mut state = AdamState::new(theta.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);

    let first = source.batch(0, cfg.batch_size, cfg.seed)?;
    let mut b_s = bias_scale_estimate(&first);
    model.set_bias_scale(b_s);

    let validate = |m: &M| mean_final_wsr(m, &validation, cfg.substeps);
    let mut best_wsr = (!validation.is_empty()).then(|| validate(&model));
    let mut best = model.clone();
    let mut best_step = 0;
    let mut log = Vec::with_capacity(cfg.steps);
    let mut initial_wsr = None;
    let mut bad_run = 0;
    let mut nan_partials = 0;
    let mut diverged_at = None;

    for step in 0..cfg.steps {
        let batch = if step == 0 { first.clone() } else { source.batch(step, cfg.batch_size, cfg.seed)? };
        if step > 0 {
            b_s = cfg.b_s_decay * b_s + (1.0 - cfg.b_s_decay) * bias_scale_estimate(&batch);
            model.set_bias_scale(b_s);
        }
        let wsr: Vec<Vec<f64>> = batch
            .par_iter()
            .map(|s| model.layer_wsr(s, cfg.substeps).unwrap_or_else(|_| vec![f64::NAN; model.num_layers()]))
            .collect();
        let mean_wsr = mean_loss_layers(&wsr, &layers);
        let r = normalizers(&wsr);
        let objective = frozen_objective(&model, &batch, &r, cfg.loss_layers, cfg.substeps);
        let est = match cfg.estimator {
            Estimator::CentralFd { h } => central_difference(objective, &theta, h)?,
            Estimator::Spsa { scale, probes } => spsa(objective, &theta, scale, probes, &mut rng)?,
        };
        nan_partials += est.nan_partials;
        let lr = cfg.lr.at(step);
        let info = optimizer_step(&mut theta, &est.grad, &mut state, &cfg.optimizer, lr);
        model = model.with_flat(&theta);
        model.project();
        theta = model.to_flat();
        log.push(LogRow {
            step,
            loss: -mean_wsr,
            lr,
            grad_norm: info.grad_norm,
            clipped: info.clipped,
            b_s,
        });

        let reference = *initial_wsr.get_or_insert(mean_wsr);
        let bad = !mean_wsr.is_finite() || !theta.iter().all(|x| x.is_finite()) || mean_wsr < reference / 10.0;
        bad_run = if bad { bad_run + 1 } else { 0 };
        if bad_run >= cfg.divergence_window.max(1) {
            log::error!("training diverged at step {step}");
            diverged_at = Some(step);
            break;
        }

        let last = step + 1 == cfg.steps;
        if !validation.is_empty() && ((step + 1) % cfg.validation_interval.max(1) == 0 || last) {
            let v = validate(&model);
            log::info!("step {}: validation wsr {v:.6}", step + 1);
            if v.is_finite() && best_wsr.map_or(true, |b| !(b >= v)) {
                best_wsr = Some(v);
                best = model.clone();
                best_step = step + 1;
            }
        }
    }
    if validation.is_empty() {
        best = model;
        best_step = log.len();
    }
    Ok(TrainingOutcome {
        model: best,
        log,
        best_validation_wsr: best_wsr,
        best_step,
        diverged_at,
        nan_partials,
    })
}

/// Initial network for a spec; random parts are drawn from `seed`.
pub fn initial_gcn(spec: &NetworkSpec, seed: u64) -> Result<ParameterSet<f64>> {
    match *spec {
        NetworkSpec::Gcn {
            layers,
            features,
            degree,
            init,
        } => Ok(match init {
            GcnInit::Random => ParameterSet::random(layers, features, degree, &mut ChaCha8Rng::seed_from_u64(seed)),
            GcnInit::Wmmse => ParameterSet::wmmse_equivalent(layers, features, degree.max(1)),
        }),
        NetworkSpec::Pgd { .. } => Err(Error::Config("network spec describes a PGD network".into())),
    }
}

pub fn write_log_csv(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_log<W: Write>(out: W, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;

//! Experiment runner comparing classical WMMSE baselines with unrolled
//! networks on a common set of realizations.

mod emit;

pub use emit::{emit, format_sig, round_sig, write_aggregate_csv, write_curves_csv, write_per_realization_csv};

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::scenario::{read_realization, sample_batch, ScenarioConfig};
use crate::unrolled::{gcnwmmse_forward, pgd_forward, read_params, read_pgd, ParameterSet, PgdParameterSet};
use crate::wmmse::{self, init_mrc, init_random, SolverTrajectory, MU_SUBSTEPS};
use crate::Realization;

/// Relative slack used when counting power-constraint violations.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Offset mixed into the experiment seed for random initializations, so they
/// never share a stream with scenario sampling.
const INIT_SEED_SALT: u64 = 0x5eed_1a17;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Mrc,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MethodKind {
    /// Classical WMMSE. With random initialization the result is averaged over
    /// `repetitions` starts. Shorter runs read prefixes of the longest run of
    /// the same initialization, so truncated baselines cost nothing extra.
    Wmmse {
        init: InitKind,
        iterations: usize,
        #[serde(default = "one")]
        repetitions: usize,
    },
    /// Per-realization best final WSR over `count` random starts.
    WmmseBest { iterations: usize, count: usize },
    GcnWmmse { params: PathBuf },
    Pgd { params: PathBuf },
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: MethodKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum ScenarioSpec {
    Generate { config: ScenarioConfig, count: usize },
    /// Every `*.json` file in the directory, in file-name order.
    Directory { path: PathBuf },
}

fn default_substeps() -> usize {
    MU_SUBSTEPS
}

fn default_confidence() -> f64 {
    0.99
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub scenario: ScenarioSpec,
    /// Seed for scenario sampling and random initializations.
    pub seed: u64,
    pub methods: Vec<MethodSpec>,
    /// Method id used as the 100 % mark. Defaults to the first best-of method.
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Makes relative file references relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ScenarioSpec::Directory { path } = &mut self.scenario {
            fix(path);
        }
        for m in &mut self.methods {
            match &mut m.kind {
                MethodKind::GcnWmmse { params } | MethodKind::Pgd { params } => fix(params),
                _ => {}
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.methods.is_empty() {
            return bad("experiment needs at least one method".into());
        }
        for (n, m) in self.methods.iter().enumerate() {
            if self.methods[..n].iter().any(|o| o.id == m.id) {
                return bad(format!("duplicate method id '{}'", m.id));
            }
            match m.kind {
                MethodKind::Wmmse { iterations: 0, .. } | MethodKind::WmmseBest { iterations: 0, .. } => {
                    return bad(format!("method '{}' needs at least one iteration", m.id))
                }
                MethodKind::Wmmse { repetitions: 0, .. } | MethodKind::WmmseBest { count: 0, .. } => {
                    return bad(format!("method '{}' needs at least one initialization", m.id))
                }
                _ => {}
            }
        }
        if let Some(r) = &self.reference {
            if !self.methods.iter().any(|m| &m.id == r) {
                return bad(format!("reference method '{r}' is not in the method list"));
            }
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad(format!("confidence must lie in (0, 1), got {}", self.confidence));
        }
        if let ScenarioSpec::Generate { config, .. } = &self.scenario {
            config.validate()?;
        }
        Ok(())
    }

    pub fn reference_id(&self) -> Option<&str> {
        self.reference.as_deref().or_else(|| {
            self.methods
                .iter()
                .find(|m| matches!(m.kind, MethodKind::WmmseBest { .. }))
                .map(|m| m.id.as_str())
        })
    }
}

/// Communication rounds of a run: one per iteration or layer.
pub fn round_accounting<T>(traj: &SolverTrajectory<T>) -> usize {
    traj.communication_rounds
}

/// Light per-run record from which prefixes can be read.
#[derive(Clone, Debug)]
struct RunSummary {
    wsr: Vec<f64>,
    feasible: Vec<bool>,
    hard_cases: Vec<usize>,
}

impl RunSummary {
    fn new(s: &Realization, traj: &SolverTrajectory<f64>) -> Self {
        Self {
            wsr: traj.wsr.clone(),
            feasible: traj.beamformers.iter().map(|v| v.feasible_within(s, FEASIBILITY_TOL)).collect(),
            hard_cases: traj.hard_case.iter().map(|h| h.iter().filter(|&&x| x).count()).collect(),
        }
    }

    fn violations(&self, n: usize) -> usize {
        usize::from(!self.feasible[n - 1])
    }

    fn hard_cases(&self, n: usize) -> usize {
        self.hard_cases[..n].iter().sum()
    }
}

/// Outcome of one method on one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodOutcome {
    pub wsr: f64,
    pub curve: Vec<f64>,
    pub rounds: usize,
    pub feasibility_violations: usize,
    pub hard_case_flags: usize,
    pub seconds: f64,
}

/// One line of `per_realization.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizationRow {
    pub realization: usize,
    pub method: String,
    pub wsr: f64,
    pub relative_wsr_pct: Option<f64>,
    pub rounds: usize,
    pub feasibility_violations: usize,
    pub hard_case_flags: usize,
}

/// Aggregate metrics of one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub realizations: usize,
    /// Mean WSR in nats.
    pub mean_wsr: f64,
    /// Half width of the normal-approximation confidence interval.
    pub ci_half_width: f64,
    /// Mean of per-realization ratios against the reference method, in percent.
    pub relative_wsr_pct: Option<f64>,
    pub rounds: usize,
    pub feasibility_violations: usize,
    pub hard_case_flags: usize,
    /// Mean WSR after each iteration or layer.
    pub curve: Vec<f64>,
    /// Total wall time over all realizations.
    #[serde(default)]
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub reference: Option<String>,
    pub rows: Vec<MetricsRow>,
    pub per_realization: Vec<RealizationRow>,
}

enum Learned {
    Gcn(ParameterSet<f64>),
    Pgd(PgdParameterSet<f64>),
}

fn load_learned(cfg: &ExperimentConfig) -> Result<Vec<Option<Learned>>> {
    cfg.methods
        .iter()
        .map(|m| {
            let missing = |p: &Path| Error::Config(format!("method '{}': params file {} not found", m.id, p.display()));
            Ok(match &m.kind {
                MethodKind::GcnWmmse { params } => {
                    if !params.is_file() {
                        return Err(missing(params));
                    }
                    Some(Learned::Gcn(read_params(params)?))
                }
                MethodKind::Pgd { params } => {
                    if !params.is_file() {
                        return Err(missing(params));
                    }
                    Some(Learned::Pgd(read_pgd(params)?))
                }
                _ => None,
            })
        })
        .collect()
}

/// Loads or samples the realizations an experiment runs on.
pub fn load_realizations(spec: &ScenarioSpec, seed: u64) -> Result<Vec<Realization>> {
    match spec {
        ScenarioSpec::Generate { config, count } => sample_batch(config, seed, 0, *count),
        ScenarioSpec::Directory { path } => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().map_or(false, |x| x == "json"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::Config(format!("no scenario files in {}", path.display())));
            }
            files.iter().map(|f| read_realization(f)).collect()
        }
    }
}

struct Pools {
    mrc: Option<(RunSummary, f64)>,
    random: Vec<RunSummary>,
    random_seconds: f64,
    random_iters: usize,
    mrc_iters: usize,
}

fn build_pools(cfg: &ExperimentConfig, s: &Realization, index: usize) -> Result<Pools> {
    let mut mrc_iters = 0;
    let mut random_iters = 0;
    let mut random_count = 0;
    for m in &cfg.methods {
        match m.kind {
            MethodKind::Wmmse { init: InitKind::Mrc, iterations, .. } => mrc_iters = mrc_iters.max(iterations),
            MethodKind::Wmmse {
                init: InitKind::Random,
                iterations,
                repetitions,
            } => {
                random_iters = random_iters.max(iterations);
                random_count = random_count.max(repetitions);
            }
            MethodKind::WmmseBest { iterations, count } => {
                random_iters = random_iters.max(iterations);
                random_count = random_count.max(count);
            }
            _ => {}
        }
    }
    let mrc = if mrc_iters > 0 {
        let t = Instant::now();
        let traj = wmmse::run(s, &init_mrc(s), mrc_iters, cfg.substeps)?;
        Some((RunSummary::new(s, &traj), t.elapsed().as_secs_f64()))
    } else {
        None
    };
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ INIT_SEED_SALT);
    rng.set_stream(index as u64);
    let mut random = Vec::with_capacity(random_count);
    for _ in 0..random_count {
        let init = init_random(s, &mut rng);
        random.push(RunSummary::new(s, &wmmse::run(s, &init, random_iters, cfg.substeps)?));
    }
    Ok(Pools {
        mrc,
        random,
        random_seconds: t.elapsed().as_secs_f64(),
        random_iters,
        mrc_iters,
    })
}

fn mean_curve(runs: &[RunSummary], n: usize) -> Vec<f64> {
    (0..n)
        .map(|t| runs.iter().map(|r| r.wsr[t]).sum::<f64>() / runs.len() as f64)
        .collect()
}

fn evaluate(cfg: &ExperimentConfig, learned: &[Option<Learned>], s: &Realization, index: usize) -> Result<Vec<MethodOutcome>> {
    let pools = build_pools(cfg, s, index)?;
    let random_share = |reps: usize, iters: usize| {
        pools.random_seconds * (reps * iters) as f64 / (pools.random.len() * pools.random_iters).max(1) as f64
    };
    cfg.methods
        .iter()
        .zip(learned)
        .map(|(m, l)| {
            Ok(match (&m.kind, l) {
                (MethodKind::Wmmse { init: InitKind::Mrc, iterations, .. }, _) => {
                    let (run, secs) = pools.mrc.as_ref().expect("MRC pool exists when an MRC method does");
                    let n = *iterations;
                    MethodOutcome {
                        wsr: run.wsr[n - 1],
                        curve: run.wsr[..n].to_vec(),
                        rounds: n,
                        feasibility_violations: run.violations(n),
                        hard_case_flags: run.hard_cases(n),
                        seconds: secs * n as f64 / pools.mrc_iters as f64,
                    }
                }
                (
                    MethodKind::Wmmse {
                        init: InitKind::Random,
                        iterations,
                        repetitions,
                    },
                    _,
                ) => {
                    let (n, runs) = (*iterations, &pools.random[..*repetitions]);
                    let curve = mean_curve(runs, n);
                    MethodOutcome {
                        wsr: curve[n - 1],
                        curve,
                        rounds: n,
                        feasibility_violations: runs.iter().map(|r| r.violations(n)).sum(),
                        hard_case_flags: runs.iter().map(|r| r.hard_cases(n)).sum(),
                        seconds: random_share(*repetitions, n),
                    }
                }
                (MethodKind::WmmseBest { iterations, count }, _) => {
                    let (n, runs) = (*iterations, &pools.random[..*count]);
                    // first maximizer wins ties, keeping the choice deterministic
                    let best = runs
                        .iter()
                        .enumerate()
                        .fold(0, |b, (j, r)| if r.wsr[n - 1] > runs[b].wsr[n - 1] { j } else { b });
                    let run = &runs[best];
                    MethodOutcome {
                        wsr: run.wsr[n - 1],
                        curve: run.wsr[..n].to_vec(),
                        rounds: n,
                        feasibility_violations: run.violations(n),
                        hard_case_flags: run.hard_cases(n),
                        seconds: random_share(*count, n),
                    }
                }
                (_, Some(model)) => {
                    let t = Instant::now();
                    let traj = match model {
                        Learned::Gcn(p) => gcnwmmse_forward(s, p, cfg.substeps)?,
                        Learned::Pgd(p) => pgd_forward(s, p)?,
                    };
                    let seconds = t.elapsed().as_secs_f64();
                    let run = RunSummary::new(s, &traj);
                    let n = traj.len();
                    MethodOutcome {
                        wsr: run.wsr[n - 1],
                        curve: run.wsr,
                        rounds: round_accounting(&traj),
                        feasibility_violations: usize::from(!run.feasible[n - 1]),
                        hard_case_flags: run.hard_cases.iter().sum(),
                        seconds,
                    }
                }
                (_, None) => unreachable!("learned methods are loaded up front"),
            })
        })
        .collect()
}

/// Runs every method on every realization with `workers` threads (0 picks
/// the rayon default). Results do not depend on the worker count.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let learned = load_learned(cfg)?;
    let realizations = load_realizations(&cfg.scenario, cfg.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let outcomes: Vec<Vec<MethodOutcome>> = pool.install(|| {
        realizations
            .par_iter()
            .enumerate()
            .map(|(n, s)| evaluate(cfg, &learned, s, n))
            .collect::<Result<_>>()
    })?;
    aggregate(cfg, &outcomes)
}

fn aggregate(cfg: &ExperimentConfig, outcomes: &[Vec<MethodOutcome>]) -> Result<ExperimentReport> {
    let reference = cfg.reference_id().map(str::to_string);
    let ref_idx = reference.as_ref().and_then(|r| cfg.methods.iter().position(|m| &m.id == r));
    let z = Normal::new(0.0, 1.0)
        .map_err(|e| Error::Config(e.to_string()))?
        .inverse_cdf(0.5 + cfg.confidence / 2.0);
    let ratio = |n: usize, j: usize| {
        ref_idx.and_then(|r| {
            let rw = outcomes[n][r].wsr;
            (rw > 0.0).then(|| 100.0 * outcomes[n][j].wsr / rw)
        })
    };

    let mut per_realization = Vec::with_capacity(outcomes.len() * cfg.methods.len());
    for (n, row) in outcomes.iter().enumerate() {
        for (j, (m, o)) in cfg.methods.iter().zip(row).enumerate() {
            per_realization.push(RealizationRow {
                realization: n,
                method: m.id.clone(),
                wsr: o.wsr,
                relative_wsr_pct: ratio(n, j),
                rounds: o.rounds,
                feasibility_violations: o.feasibility_violations,
                hard_case_flags: o.hard_case_flags,
            });
        }
    }

    let count = outcomes.len();
    let rows = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let w: Vec<f64> = outcomes.iter().map(|o| o[j].wsr).collect();
            let mean = w.iter().sum::<f64>() / count.max(1) as f64;
            let var = if count > 1 {
                w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64
            } else {
                0.0
            };
            let ratios: Vec<f64> = (0..count).filter_map(|n| ratio(n, j)).collect();
            let curve_len = outcomes.iter().map(|o| o[j].curve.len()).min().unwrap_or(0);
            MetricsRow {
                method: m.id.clone(),
                realizations: count,
                mean_wsr: mean,
                ci_half_width: z * (var / count.max(1) as f64).sqrt(),
                relative_wsr_pct: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
                rounds: outcomes.first().map_or(0, |o| o[j].rounds),
                feasibility_violations: outcomes.iter().map(|o| o[j].feasibility_violations).sum(),
                hard_case_flags: outcomes.iter().map(|o| o[j].hard_case_flags).sum(),
                curve: (0..curve_len)
                    .map(|t| outcomes.iter().map(|o| o[j].curve[t]).sum::<f64>() / count as f64)
                    .collect(),
                wall_time_s: outcomes.iter().map(|o| o[j].seconds).sum(),
            }
        })
        .collect();
    Ok(ExperimentReport {
        config: cfg.clone(),
        reference,
        rows,
        per_realization,
    })
}

impl ExperimentReport {
    pub fn row(&self, method: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn realization_rows<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a RealizationRow> + 'a {
        self.per_realization.iter().filter(move |r| r.method == method)
    }
}

#[cfg(test)]
mod tests;

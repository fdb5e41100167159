use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;

use beamforge::harness::{emit, format_sig, run_experiment, ExperimentConfig};
use beamforge::scenario::{read_realization, sample, write_realization, ScenarioConfig};
use beamforge::training::{
    initial_gcn, suggest_pgd_step, train, write_log_csv, NetworkSpec, ScenarioSource, TrainingConfig,
};
use beamforge::unrolled::{
    gcnwmmse_forward, params_from_json, pgd_forward, pgd_from_json, write_params, write_pgd, PgdParameterSet,
};
use beamforge::wmmse::{self, init_mrc, init_random};
use beamforge::{Realization, Trajectory};

#[derive(Parser)]
#[command(name = "beamforge", version, about = "Weighted sum-rate beamforming: WMMSE, GCN-WMMSE and tooling")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Mrc,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Sample scenario realizations into a directory.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run classical WMMSE on one scenario.
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "mrc")]
        init: Init,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = beamforge::wmmse::MU_SUBSTEPS)]
        substeps: usize,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a trained network (GCN-WMMSE or PGD) on one scenario.
    Infer {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = beamforge::wmmse::MU_SUBSTEPS)]
        substeps: usize,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Train network parameters.
    Train {
        /// Training configuration (TOML or JSON).
        #[arg(long)]
        config: PathBuf,
        /// Directory of scenario files, or a scenario generator config.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Worker threads (0: one per core).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Run a benchmark experiment.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().map_or(false, |e| e == "toml") {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn load_scenario(path: &Path) -> Result<Realization> {
    read_realization(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn trace_csv(s: &Realization, traj: &Trajectory) -> String {
    let k = s.num_bs();
    let mut out = String::from("iter,wsr_nats");
    for b in 0..k {
        write!(out, ",mu_{b}").unwrap();
    }
    for b in 0..k {
        write!(out, ",cs_residual_{b}").unwrap();
    }
    out.push_str(",feasible\n");
    for t in 0..traj.len() {
        write!(out, "{},{}", t + 1, traj.wsr[t]).unwrap();
        for m in &traj.mu[t] {
            write!(out, ",{m}").unwrap();
        }
        for c in &traj.cs_residual[t] {
            write!(out, ",{c}").unwrap();
        }
        writeln!(out, ",{}", traj.beamformers[t].feasible(s)).unwrap();
    }
    out
}

fn report(s: &Realization, traj: &Trajectory, trace: Option<&Path>) -> Result<()> {
    if let Some(path) = trace {
        fs::write(path, trace_csv(s, traj)).with_context(|| format!("writing {}", path.display()))?;
    }
    let last = traj.final_beamformers().context("empty run")?;
    println!("rounds: {}", traj.communication_rounds);
    println!("wsr_nats: {}", traj.final_wsr().unwrap_or(f64::NAN));
    println!("feasible: {}", last.feasible(s));
    println!("hard_case_flags: {}", traj.hard_case_count());
    Ok(())
}

fn generate(config: &Path, count: u64, seed: u64, out: &Path) -> Result<()> {
    let cfg: ScenarioConfig = load_config(config)?;
    cfg.validate()?;
    fs::create_dir_all(out)?;
    for index in 0..count {
        let s: Realization = sample(&cfg, seed, index)?;
        write_realization(&out.join(format!("scenario_{index:05}.json")), &s)?;
    }
    println!("wrote {count} scenarios to {}", out.display());
    Ok(())
}

fn solve(scenario: &Path, init: Init, iters: usize, seed: u64, substeps: usize, trace: Option<&Path>) -> Result<()> {
    let s = load_scenario(scenario)?;
    let v0 = match init {
        Init::Mrc => init_mrc(&s),
        Init::Random => init_random(&s, &mut ChaCha8Rng::seed_from_u64(seed)),
    };
    let traj = wmmse::run(&s, &v0, iters, substeps)?;
    report(&s, &traj, trace)
}

fn infer(scenario: &Path, params: &Path, substeps: usize, trace: Option<&Path>) -> Result<()> {
    let s = load_scenario(scenario)?;
    let text = fs::read_to_string(params).with_context(|| format!("reading {}", params.display()))?;
    let is_pgd = serde_json::from_str::<serde_json::Value>(&text)
        .map(|v| v.get("gamma").is_some())
        .unwrap_or(false);
    let traj = if is_pgd {
        pgd_forward(&s, &pgd_from_json(&text)?)?
    } else {
        gcnwmmse_forward(&s, &params_from_json(&text)?, substeps)?
    };
    report(&s, &traj, trace)
}

fn data_source(data: &Path, cfg: &TrainingConfig) -> Result<ScenarioSource> {
    if data.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(data)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map_or(false, |x| x == "json"))
            .collect();
        files.sort();
        let mut all = files.iter().map(|f| load_scenario(f)).collect::<Result<Vec<_>>>()?;
        if all.len() < 2 {
            bail!("training directory {} needs at least two scenarios", data.display());
        }
        let held = cfg.validation_size.min(all.len() / 5).max(usize::from(cfg.validation_size > 0));
        if held < cfg.validation_size {
            log::warn!("only {held} of the requested {} validation scenarios are held out", cfg.validation_size);
        }
        let validation = all.split_off(all.len() - held);
        Ok(ScenarioSource::Dataset { train: all, validation })
    } else {
        let config: ScenarioConfig = load_config(data)?;
        config.validate()?;
        Ok(ScenarioSource::Generator { config, seed: cfg.seed })
    }
}

fn train_cmd(config: &Path, data: &Path, out: &Path, log_path: Option<&Path>, workers: usize) -> Result<()> {
    let cfg: TrainingConfig = load_config(config)?;
    cfg.validate()?;
    if workers > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(workers).build_global()?;
    }
    let source = data_source(data, &cfg)?;
    let (log, best, summary) = match cfg.network {
        NetworkSpec::Gcn { .. } => {
            let init = initial_gcn(&cfg.network, cfg.seed)?;
            info!("training GCN-WMMSE with {} parameters", init.param_count());
            let outcome = train(&cfg, &source, init)?;
            write_params(out, &outcome.model)?;
            (outcome.log, outcome.best_validation_wsr, (outcome.best_step, outcome.diverged_at))
        }
        NetworkSpec::Pgd { layers, substeps, gamma } => {
            let gamma = match gamma {
                Some(g) => g,
                None => suggest_pgd_step(&source.batch(0, cfg.batch_size, cfg.seed)?)?,
            };
            let outcome = train(&cfg, &source, PgdParameterSet::constant(layers, substeps, gamma))?;
            write_pgd(out, &outcome.model)?;
            (outcome.log, outcome.best_validation_wsr, (outcome.best_step, outcome.diverged_at))
        }
    };
    if let Some(p) = log_path {
        write_log_csv(p, &log)?;
    }
    println!("steps: {}", log.len());
    println!("best_step: {}", summary.0);
    if let Some(w) = best {
        println!("best_validation_wsr: {w}");
    }
    if let Some(step) = summary.1 {
        println!("diverged_at: {step}");
    }
    println!("params: {}", out.display());
    Ok(())
}

fn bench(config: &Path, out: &Path, workers: usize) -> Result<()> {
    let mut cfg: ExperimentConfig = load_config(config)?;
    cfg.resolve_paths(config.parent().unwrap_or(Path::new(".")));
    let report = run_experiment(&cfg, workers)?;
    emit(&report, out)?;
    println!("{:<16} {:>12} {:>10} {:>10} {:>7}", "method", "mean_wsr", "ci99", "rel_pct", "rounds");
    for r in &report.rows {
        println!(
            "{:<16} {:>12} {:>10} {:>10} {:>7}",
            r.method,
            format_sig(r.mean_wsr),
            format_sig(r.ci_half_width),
            r.relative_wsr_pct.map(format_sig).unwrap_or_else(|| "-".into()),
            r.rounds
        );
    }
    println!("results in {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.command {
        Command::Generate { config, count, seed, out } => generate(&config, count, seed, &out),
        Command::Solve {
            scenario,
            init,
            iters,
            seed,
            substeps,
            trace,
        } => solve(&scenario, init, iters, seed, substeps, trace.as_deref()),
        Command::Infer {
            scenario,
            params,
            substeps,
            trace,
        } => infer(&scenario, &params, substeps, trace.as_deref()),
        Command::Train {
            config,
            data,
            out,
            log,
            workers,
        } => train_cmd(&config, &data, &out, log.as_deref(), workers),
        Command::Bench { config, out, workers } => bench(&config, &out, workers),
    }
}

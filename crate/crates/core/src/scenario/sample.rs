use std::f64::consts::FRAC_PI_3;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{ChannelModel, Geometry, ScenarioConfig, ScenarioRealization};
use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;
use crate::scalar::{Real, C};

/// Distances below this are clamped before evaluating path loss.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// Pico NLOS log-distance path gain in dB (non-positive).
pub fn path_loss_db(distance_m: f64) -> f64 {
    let d = if distance_m < MIN_DISTANCE_M {
        log::warn!("UE-BS distance {distance_m} m below {MIN_DISTANCE_M} m, clamping");
        MIN_DISTANCE_M
    } else {
        distance_m
    };
    (-(140.7 + 36.7 * (d / 1000.0).log10())).min(0.0)
}

/// Mean distance from the apex of a uniformly populated circular sector of
/// radius `radius`.
pub fn sextant_mean_distance(radius: f64) -> f64 {
    2.0 * radius / 3.0
}

fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn rayleigh<T: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, variance: f64) -> ComplexMatrix<T> {
    let s = (variance / 2.0).sqrt();
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C::new(T::lit(s * re), T::lit(s * im))
    })
}

fn draw_iid<T: Real>(config: &ScenarioConfig, variance: f64, rng: &mut ChaCha8Rng) -> Vec<ComplexMatrix<T>> {
    let mut channels = Vec::with_capacity(config.num_ues() * config.num_bs());
    for &n in &config.ue_antennas {
        for &m in &config.bs_antennas {
            channels.push(rayleigh(rng, n, m, variance));
        }
    }
    channels
}

fn draw_triangle<T: Real>(
    config: &ScenarioConfig,
    bs_distance: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<ComplexMatrix<T>>, Geometry) {
    let d = bs_distance;
    let bs_positions = vec![[0.0, 0.0], [d, 0.0], [d / 2.0, d * 3f64.sqrt() / 2.0]];
    let centroid = [d / 2.0, d * 3f64.sqrt() / 6.0];
    let radius = d / 3f64.sqrt();
    let serving = config.serving_bs();
    let ue_positions: Vec<[f64; 2]> = serving
        .iter()
        .map(|&b| {
            let [bx, by] = bs_positions[b];
            let bisector = (centroid[1] - by).atan2(centroid[0] - bx);
            let r = radius * rng.gen::<f64>().sqrt();
            let theta = bisector + (rng.gen::<f64>() - 0.5) * FRAC_PI_3;
            [bx + r * theta.cos(), by + r * theta.sin()]
        })
        .collect();
    let mut channels = Vec::with_capacity(config.num_ues() * config.num_bs());
    for (ue, &n) in config.ue_antennas.iter().enumerate() {
        for (bs, &m) in config.bs_antennas.iter().enumerate() {
            let [ux, uy] = ue_positions[ue];
            let [bx, by] = bs_positions[bs];
            let dist = (ux - bx).hypot(uy - by);
            let var = 10f64.powf(path_loss_db(dist) / 10.0);
            channels.push(rayleigh(rng, n, m, var));
        }
    }
    (channels, Geometry { bs_positions, ue_positions })
}

/// Draws realization number `index` of the stream identified by `seed`.
/// Different indices use disjoint ChaCha streams, so batches can be generated
/// in any order or in parallel with identical results.
pub fn sample<T: Real>(config: &ScenarioConfig, seed: u64, index: u64) -> Result<ScenarioRealization<T>> {
    config.validate()?;
    let mut rng = rng_for(seed, index);
    match config.channel {
        ChannelModel::IidRayleigh { variance } => {
            let channels = draw_iid(config, variance, &mut rng);
            ScenarioRealization::new(config.clone(), channels, None)
        }
        ChannelModel::TrianglePicocell { bs_distance } => {
            let (channels, geometry) = draw_triangle(config, bs_distance, &mut rng);
            ScenarioRealization::new(config.clone(), channels, Some(geometry))
        }
    }
}

/// I.i.d. Rayleigh realization (stream index 0).
pub fn sample_iid<T: Real>(config: &ScenarioConfig, seed: u64) -> Result<ScenarioRealization<T>> {
    if !matches!(config.channel, ChannelModel::IidRayleigh { .. }) {
        return Err(Error::Config("sample_iid needs the iid-rayleigh channel model".into()));
    }
    sample(config, seed, 0)
}

/// Triangle picocell realization (stream index 0).
pub fn sample_triangle<T: Real>(config: &ScenarioConfig, seed: u64) -> Result<ScenarioRealization<T>> {
    if !matches!(config.channel, ChannelModel::TrianglePicocell { .. }) {
        return Err(Error::Config("sample_triangle needs the triangle-picocell channel model".into()));
    }
    sample(config, seed, 0)
}

/// Realizations `first .. first + count` of the stream `seed`, in index order.
pub fn sample_batch<T: Real>(
    config: &ScenarioConfig,
    seed: u64,
    first: u64,
    count: usize,
) -> Result<Vec<ScenarioRealization<T>>> {
    config.validate()?;
    (0..count as u64)
        .into_par_iter()
        .map(|j| sample(config, seed, first + j))
        .collect()
}

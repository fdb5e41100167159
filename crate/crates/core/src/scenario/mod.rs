//! Wireless scenario configurations and sampled channel realizations.

mod io;
mod sample;

pub(crate) use io::check_schema;
pub use io::{read_realization, realization_from_json, realization_to_json, write_realization, SCHEMA_VERSION};
pub use sample::{
    path_loss_db, sample, sample_batch, sample_iid, sample_triangle, sextant_mean_distance, MIN_DISTANCE_M,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;
use crate::scalar::Real;

/// How channel matrices are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ChannelModel {
    /// Every entry i.i.d. `CN(0, variance)`.
    IidRayleigh { variance: f64 },
    /// Three base stations on an equilateral triangle of side `bs_distance`
    /// meters; UEs uniform in a sextant around their base station, with the
    /// sextant bisector pointing at the triangle centroid. Rayleigh fading on
    /// top of log-distance pico path loss.
    TrianglePicocell { bs_distance: f64 },
}

/// Network topology and link parameters.
///
/// Powers and noise variances are in watts, bandwidth in Hz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub bs_antennas: Vec<usize>,
    pub bs_power: Vec<f64>,
    /// `assignment[k]` lists the UEs served by base station `k`.
    pub assignment: Vec<Vec<usize>>,
    pub ue_antennas: Vec<usize>,
    pub ue_noise: Vec<f64>,
    pub ue_weight: Vec<f64>,
    #[serde(default = "unit_bandwidth")]
    pub bandwidth: f64,
    pub channel: ChannelModel,
}

fn unit_bandwidth() -> f64 {
    1.0
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl ScenarioConfig {
    /// Homogeneous network: `k` base stations with `m` antennas and `power`
    /// watts each, `ues_per_bs` UEs per cell with `n` antennas, noise `noise`
    /// watts and unit weights. UEs are numbered cell by cell.
    pub fn homogeneous(
        k: usize,
        m: usize,
        ues_per_bs: usize,
        n: usize,
        power: f64,
        noise: f64,
        channel: ChannelModel,
    ) -> Self {
        let ues = k * ues_per_bs;
        Self {
            bs_antennas: vec![m; k],
            bs_power: vec![power; k],
            assignment: (0..k).map(|b| (b * ues_per_bs..(b + 1) * ues_per_bs).collect()).collect(),
            ue_antennas: vec![n; ues],
            ue_noise: vec![noise; ues],
            ue_weight: vec![1.0; ues],
            bandwidth: 1.0,
            channel,
        }
    }

    /// Base configuration of the picocell experiments: 3 BSs, 12 antennas,
    /// 30 dBm, 4 UEs per cell with 2 antennas, -100 dBm noise, 200 m spacing.
    pub fn picocell_base() -> Self {
        Self::homogeneous(
            3,
            12,
            4,
            2,
            dbm_to_watts(30.0),
            dbm_to_watts(-100.0),
            ChannelModel::TrianglePicocell { bs_distance: 200.0 },
        )
    }

    pub fn num_bs(&self) -> usize {
        self.bs_antennas.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ue_antennas.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_bs();
        let i = self.num_ues();
        if k == 0 || i == 0 {
            return Err(Error::Config("scenario needs at least one BS and one UE".into()));
        }
        if self.bs_power.len() != k || self.assignment.len() != k {
            return Err(Error::Config(format!(
                "{k} BS antenna counts but {} powers and {} assignment sets",
                self.bs_power.len(),
                self.assignment.len()
            )));
        }
        if self.ue_noise.len() != i || self.ue_weight.len() != i {
            return Err(Error::Config(format!(
                "{i} UE antenna counts but {} noise powers and {} weights",
                self.ue_noise.len(),
                self.ue_weight.len()
            )));
        }
        let mut seen = vec![false; i];
        for (b, set) in self.assignment.iter().enumerate() {
            for &u in set {
                if u >= i {
                    return Err(Error::Config(format!("BS {b} serves unknown UE {u}")));
                }
                if std::mem::replace(&mut seen[u], true) {
                    return Err(Error::Config(format!("UE {u} is assigned more than once")));
                }
            }
        }
        if let Some(u) = seen.iter().position(|s| !s) {
            return Err(Error::Config(format!("UE {u} is not assigned to any BS")));
        }
        let positive = |v: &[f64]| v.iter().all(|&x| x > 0.0 && x.is_finite());
        if !positive(&self.bs_power) || !positive(&self.ue_noise) || !positive(&self.ue_weight) {
            return Err(Error::Config("powers, noise variances and weights must be positive".into()));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::Config("bandwidth must be positive".into()));
        }
        if self.bs_antennas.iter().chain(&self.ue_antennas).any(|&a| a == 0) {
            return Err(Error::Config("antenna counts must be at least 1".into()));
        }
        match self.channel {
            ChannelModel::IidRayleigh { variance } if !(variance > 0.0) => {
                Err(Error::Config("channel variance must be positive".into()))
            }
            ChannelModel::TrianglePicocell { bs_distance } if !(bs_distance > 0.0) => {
                Err(Error::Config("BS distance must be positive".into()))
            }
            ChannelModel::TrianglePicocell { .. } if k != 3 => Err(Error::Config(format!(
                "triangle picocell layout needs exactly 3 BSs, got {k}"
            ))),
            _ => Ok(()),
        }
    }

    /// Serving base station of every UE.
    pub fn serving_bs(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.num_ues()];
        for (b, set) in self.assignment.iter().enumerate() {
            for &u in set {
                out[u] = b;
            }
        }
        out
    }
}

/// Node positions in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
}

/// A configuration together with one draw of every channel matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioRealization<T> {
    config: ScenarioConfig,
    serving: Vec<usize>,
    /// `channels[i * K + k]` is `H_ik`, of shape `N_i x M_k`.
    channels: Vec<ComplexMatrix<T>>,
    geometry: Option<Geometry>,
}

impl<T: Real> ScenarioRealization<T> {
    /// Assembles a realization, checking every channel shape against the config.
    /// `channels` is indexed UE-major: entry `i * K + k` is the channel from BS
    /// `k` to UE `i`.
    pub fn new(config: ScenarioConfig, channels: Vec<ComplexMatrix<T>>, geometry: Option<Geometry>) -> Result<Self> {
        config.validate()?;
        let (k, i) = (config.num_bs(), config.num_ues());
        if channels.len() != i * k {
            return Err(Error::dim("realization", format!("expected {} channels, got {}", i * k, channels.len())));
        }
        for ue in 0..i {
            for bs in 0..k {
                let h = &channels[ue * k + bs];
                let want = (config.ue_antennas[ue], config.bs_antennas[bs]);
                if h.shape() != want {
                    return Err(Error::dim(
                        "realization",
                        format!("H[{ue},{bs}] is {:?}, expected {want:?}", h.shape()),
                    ));
                }
                if !h.is_finite() {
                    return Err(Error::numeric("realization", format!("H[{ue},{bs}] has non-finite entries")));
                }
            }
        }
        Ok(Self {
            serving: config.serving_bs(),
            config,
            channels,
            geometry,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn geometry(&self) -> Option<&Geometry> {
        self.geometry.as_ref()
    }

    pub fn num_bs(&self) -> usize {
        self.config.num_bs()
    }

    pub fn num_ues(&self) -> usize {
        self.config.num_ues()
    }

    #[inline]
    pub fn channel(&self, ue: usize, bs: usize) -> &ComplexMatrix<T> {
        &self.channels[ue * self.num_bs() + bs]
    }

    /// Channel from the serving base station of `ue`.
    #[inline]
    pub fn direct_channel(&self, ue: usize) -> &ComplexMatrix<T> {
        self.channel(ue, self.serving[ue])
    }

    #[inline]
    pub fn serving_bs(&self, ue: usize) -> usize {
        self.serving[ue]
    }

    pub fn cell(&self, bs: usize) -> &[usize] {
        &self.config.assignment[bs]
    }

    pub fn bs_antennas(&self, bs: usize) -> usize {
        self.config.bs_antennas[bs]
    }

    pub fn ue_antennas(&self, ue: usize) -> usize {
        self.config.ue_antennas[ue]
    }

    pub fn power(&self, bs: usize) -> T {
        T::lit(self.config.bs_power[bs])
    }

    pub fn noise(&self, ue: usize) -> T {
        T::lit(self.config.ue_noise[ue])
    }

    pub fn weight(&self, ue: usize) -> T {
        T::lit(self.config.ue_weight[ue])
    }

    pub fn bandwidth(&self) -> T {
        T::lit(self.config.bandwidth)
    }

    pub fn channels(&self) -> &[ComplexMatrix<T>] {
        &self.channels
    }

    /// Converts the channel scalar type.
    pub fn cast<U: Real>(&self) -> ScenarioRealization<U> {
        ScenarioRealization {
            config: self.config.clone(),
            serving: self.serving.clone(),
            channels: self.channels.iter().map(|h| h.cast()).collect(),
            geometry: self.geometry.clone(),
        }
    }

    /// Relabels the antennas of base station `bs`: column `c` of every new
    /// `H_·bs` is column `perm[c]` of the old one.
    pub fn permute_bs_antennas(&self, bs: usize, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for ue in 0..self.num_ues() {
            let idx = ue * self.num_bs() + bs;
            out.channels[idx] = self.channels[idx].permute_cols(perm);
        }
        out
    }

    /// Relabels the antennas of `ue`: row `r` of every new `H_ue·` is row
    /// `perm[r]` of the old one.
    pub fn permute_ue_antennas(&self, ue: usize, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for bs in 0..self.num_bs() {
            let idx = ue * self.num_bs() + bs;
            out.channels[idx] = self.channels[idx].permute_rows(perm);
        }
        out
    }

    /// Relabels UEs: new UE `j` is old UE `perm[j]`. Cell membership follows
    /// the UEs, so the assignment sets are rewritten accordingly.
    pub fn relabel_ues(&self, perm: &[usize]) -> Self {
        let n = self.num_ues();
        assert_eq!(perm.len(), n);
        let mut inverse = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let c = &self.config;
        let config = ScenarioConfig {
            bs_antennas: c.bs_antennas.clone(),
            bs_power: c.bs_power.clone(),
            assignment: c
                .assignment
                .iter()
                .map(|set| set.iter().map(|&u| inverse[u]).collect())
                .collect(),
            ue_antennas: perm.iter().map(|&o| c.ue_antennas[o]).collect(),
            ue_noise: perm.iter().map(|&o| c.ue_noise[o]).collect(),
            ue_weight: perm.iter().map(|&o| c.ue_weight[o]).collect(),
            bandwidth: c.bandwidth,
            channel: c.channel.clone(),
        };
        let k = self.num_bs();
        let mut channels = Vec::with_capacity(self.channels.len());
        for &old in perm {
            channels.extend_from_slice(&self.channels[old * k..(old + 1) * k]);
        }
        let geometry = self.geometry.as_ref().map(|g| Geometry {
            bs_positions: g.bs_positions.clone(),
            ue_positions: perm.iter().map(|&o| g.ue_positions[o]).collect(),
        });
        ScenarioRealization {
            serving: config.serving_bs(),
            config,
            channels,
            geometry,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ScenarioConfig {
        ScenarioConfig::homogeneous(2, 3, 2, 1, 1.0, 0.1, ChannelModel::IidRayleigh { variance: 1.0 })
    }

    #[test]
    fn homogeneous_config_is_valid() {
        let c = tiny();
        c.validate().unwrap();
        assert_eq!(c.serving_bs(), vec![0, 0, 1, 1]);
        ScenarioConfig::picocell_base().validate().unwrap();
    }

    #[test]
    fn validation_rejects_broken_assignments() {
        let mut c = tiny();
        c.assignment[1] = vec![1, 3];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = tiny();
        c.assignment[1] = vec![2];
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.ue_weight[0] = 0.0;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.channel = ChannelModel::TrianglePicocell { bs_distance: 100.0 };
        assert!(c.validate().is_err());
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(-100.0) - 1e-13).abs() < 1e-28);
        assert!((dbm_to_watts(20.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn realization_rejects_misshaped_channels() {
        let c = tiny();
        let chans = vec![ComplexMatrix::<f64>::zeros(1, 3); 8];
        assert!(ScenarioRealization::new(c.clone(), chans.clone(), None).is_ok());
        let mut bad = chans;
        bad[3] = ComplexMatrix::zeros(3, 1);
        assert!(matches!(ScenarioRealization::new(c, bad, None), Err(Error::Dimension { .. })));
    }

    #[test]
    fn relabel_moves_channels_and_cells() {
        let s = sample_iid::<f64>(&tiny(), 3).unwrap();
        let r = s.relabel_ues(&[1, 0, 2, 3]);
        assert_eq!(r.channel(0, 1), s.channel(1, 1));
        assert_eq!(r.cell(0), &[1, 0]);
        assert_eq!(r.serving_bs(0), 0);
    }
}

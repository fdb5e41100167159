use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChannelModel, Geometry, ScenarioConfig, ScenarioRealization};
use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;
use crate::scalar::{Real, C};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ChannelEntry {
    ue: usize,
    bs: usize,
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    sextant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    path_loss: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    schema_version: u32,
    config: ScenarioConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    metadata: Option<Metadata>,
    channels: Vec<ChannelEntry>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    geometry: Option<Geometry>,
}

pub(crate) fn check_schema(value: &serde_json::Value, expected: u32) -> Result<()> {
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == expected as u64 => Ok(()),
        Some(v) => Err(Error::SchemaVersion {
            found: v.min(u32::MAX as u64) as u32,
            expected,
        }),
        None => Err(Error::Parse {
            line: 0,
            column: 0,
            message: "missing or non-integer schema_version".into(),
        }),
    }
}

pub fn realization_to_json<T: Real>(s: &ScenarioRealization<T>) -> Result<String> {
    let k = s.num_bs();
    let channels = s
        .channels()
        .iter()
        .enumerate()
        .map(|(idx, h)| ChannelEntry {
            ue: idx / k,
            bs: idx % k,
            rows: h.rows(),
            cols: h.cols(),
            data: h.as_slice().iter().map(|z| [z.re.to_f64_lossy(), z.im.to_f64_lossy()]).collect(),
        })
        .collect();
    let metadata = match s.config().channel {
        ChannelModel::TrianglePicocell { .. } => Some(Metadata {
            sextant: Some("apex at serving BS, bisector toward triangle centroid".into()),
            path_loss: Some("-(140.7 + 36.7 log10(d/1km)) dB, capped at 0 dB, d >= 1 m".into()),
        }),
        ChannelModel::IidRayleigh { .. } => None,
    };
    let file = ScenarioFile {
        schema_version: SCHEMA_VERSION,
        config: s.config().clone(),
        metadata,
        channels,
        geometry: s.geometry().cloned(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn realization_from_json<T: Real>(text: &str) -> Result<ScenarioRealization<T>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    check_schema(&value, SCHEMA_VERSION)?;
    let file: ScenarioFile = serde_json::from_value(value)?;
    file.config.validate()?;
    let k = file.config.num_bs();
    let i = file.config.num_ues();
    let mut slots: Vec<Option<ComplexMatrix<T>>> = vec![None; i * k];
    for e in file.channels {
        if e.ue >= i || e.bs >= k {
            return Err(Error::dim("scenario file", format!("channel ({}, {}) out of range", e.ue, e.bs)));
        }
        let data = e.data.iter().map(|&[re, im]| C::new(T::lit(re), T::lit(im))).collect();
        let h = ComplexMatrix::from_row_major(e.rows, e.cols, data).ok_or_else(|| {
            Error::dim(
                "scenario file",
                format!("channel ({}, {}) declares {}x{} but data length differs", e.ue, e.bs, e.rows, e.cols),
            )
        })?;
        if slots[e.ue * k + e.bs].replace(h).is_some() {
            return Err(Error::dim("scenario file", format!("channel ({}, {}) given twice", e.ue, e.bs)));
        }
    }
    let channels = slots
        .into_iter()
        .enumerate()
        .map(|(idx, h)| h.ok_or_else(|| Error::dim("scenario file", format!("channel ({}, {}) missing", idx / k, idx % k))))
        .collect::<Result<Vec<_>>>()?;
    ScenarioRealization::new(file.config, channels, file.geometry)
}

pub fn write_realization<T: Real>(path: &Path, s: &ScenarioRealization<T>) -> Result<()> {
    fs::write(path, realization_to_json(s)?)?;
    Ok(())
}

pub fn read_realization<T: Real>(path: &Path) -> Result<ScenarioRealization<T>> {
    realization_from_json(&fs::read_to_string(path)?)
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{LayerParams, ParameterSet, PgdParameterSet};
use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;
use crate::scalar::C;
use crate::scenario::check_schema;

pub const PARAMS_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerFile {
    #[serde(rename = "a_W")]
    a_w: Vec<f64>,
    #[serde(rename = "a_V1")]
    a_v1: Vec<[f64; 2]>,
    #[serde(rename = "a_V0")]
    a_v0: Vec<[f64; 2]>,
    b: Vec<f64>,
    c: Vec<[f64; 2]>,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none", default)]
    d: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    schema_version: u32,
    #[serde(rename = "L")]
    layers_count: usize,
    #[serde(rename = "F")]
    features: usize,
    #[serde(rename = "G")]
    degree: usize,
    #[serde(rename = "b_S")]
    b_s: f64,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct PgdFile {
    schema_version: u32,
    #[serde(rename = "L")]
    layers_count: usize,
    #[serde(rename = "Q")]
    substeps: usize,
    gamma: Vec<Vec<f64>>,
}

fn pairs(v: &[C<f64>]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn complex(v: &[[f64; 2]]) -> Vec<C<f64>> {
    v.iter().map(|&[re, im]| C::new(re, im)).collect()
}

pub fn params_to_json(p: &ParameterSet<f64>) -> Result<String> {
    let file = ParamsFile {
        schema_version: PARAMS_SCHEMA_VERSION,
        layers_count: p.num_layers(),
        features: p.features,
        degree: p.degree,
        b_s: p.b_s,
        layers: p
            .layers
            .iter()
            .map(|l| LayerFile {
                a_w: l.a_w.clone(),
                a_v1: pairs(&l.a_v1),
                a_v0: pairs(&l.a_v0),
                b: l.b.clone(),
                c: pairs(&l.c),
                d: l.d.as_ref().map(|d| (0..d.rows()).map(|r| pairs(&d.as_slice()[r * d.cols()..(r + 1) * d.cols()])).collect()),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn params_from_json(text: &str) -> Result<ParameterSet<f64>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    check_schema(&value, PARAMS_SCHEMA_VERSION)?;
    let file: ParamsFile = serde_json::from_value(value)?;
    if file.layers.len() != file.layers_count {
        return Err(Error::Config(format!("L = {} but {} layers given", file.layers_count, file.layers.len())));
    }
    let layers = file
        .layers
        .into_iter()
        .map(|l| {
            let d = match l.d {
                None => None,
                Some(rows) => {
                    let r = rows.len();
                    let data: Vec<C<f64>> = rows.iter().flat_map(|row| complex(row)).collect();
                    let cols = if r == 0 { 0 } else { data.len() / r };
                    if rows.iter().any(|row| row.len() != cols) {
                        return Err(Error::Config("skip map D has ragged rows".into()));
                    }
                    Some(ComplexMatrix::from_row_major(r, cols, data).expect("row lengths checked"))
                }
            };
            Ok(LayerParams {
                a_w: l.a_w,
                a_v1: complex(&l.a_v1),
                a_v0: complex(&l.a_v0),
                b: l.b,
                c: complex(&l.c),
                d,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let p = ParameterSet {
        features: file.features,
        degree: file.degree,
        b_s: file.b_s,
        layers,
    };
    p.validate()?;
    Ok(p)
}

pub fn pgd_to_json(p: &PgdParameterSet<f64>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&PgdFile {
        schema_version: PARAMS_SCHEMA_VERSION,
        layers_count: p.num_layers(),
        substeps: p.substeps(),
        gamma: p.gammas.clone(),
    })?)
}

pub fn pgd_from_json(text: &str) -> Result<PgdParameterSet<f64>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    check_schema(&value, PARAMS_SCHEMA_VERSION)?;
    let file: PgdFile = serde_json::from_value(value)?;
    let p = PgdParameterSet { gammas: file.gamma };
    if p.num_layers() != file.layers_count || p.substeps() != file.substeps {
        return Err(Error::Config("PGD file L/Q do not match the step-size table".into()));
    }
    p.validate()?;
    Ok(p)
}

pub fn read_params(path: &Path) -> Result<ParameterSet<f64>> {
    params_from_json(&fs::read_to_string(path)?)
}

pub fn write_params(path: &Path, p: &ParameterSet<f64>) -> Result<()> {
    fs::write(path, params_to_json(p)?)?;
    Ok(())
}

pub fn read_pgd(path: &Path) -> Result<PgdParameterSet<f64>> {
    pgd_from_json(&fs::read_to_string(path)?)
}

pub fn write_pgd(path: &Path, p: &PgdParameterSet<f64>) -> Result<()> {
    fs::write(path, pgd_to_json(p)?)?;
    Ok(())
}

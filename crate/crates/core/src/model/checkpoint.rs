//! Checkpoint directories: `weights.bin` (little-endian f32 values of every
//! parameter, in declaration order) plus a `model.json` sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::classifier::{build_classifier, ModelConfig, PadModel};
use super::nn::{HasParams, Param};
use super::uai::{build_uai, UaiConfig, UaiModel};
use crate::error::{PadError, Result};

pub const WEIGHTS_FILE: &str = "weights.bin";
pub const SIDECAR_FILE: &str = "model.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointModel {
    Classifier { config: ModelConfig },
    Uai { config: UaiConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub model: CheckpointModel,
    /// Binary head index -> label, and the rule for the attack-type head.
    pub class_index: BTreeMap<String, String>,
    pub params: Vec<ParamShape>,
}

fn class_index() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("binary.0".to_string(), "genuine".to_string()),
        ("binary.1".to_string(), "attack".to_string()),
        ("multiclass".to_string(), "index = attack type code (0 = genuine)".to_string()),
    ])
}

/// A model of either kind, as restored from a checkpoint.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum AnyModel {
    Classifier(PadModel),
    Uai(UaiModel),
}

fn write_params(dir: &Path, model: CheckpointModel, params: Vec<&Param>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(WEIGHTS_FILE))?);
    for p in &params {
        for v in p.value.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    let sidecar = Sidecar {
        model,
        class_index: class_index(),
        params: params
            .iter()
            .map(|p| ParamShape { name: p.name.clone(), shape: p.value.shape().to_vec() })
            .collect(),
    };
    serde_json::to_writer_pretty(BufWriter::new(fs::File::create(dir.join(SIDECAR_FILE))?), &sidecar)?;
    Ok(())
}

fn read_params(dir: &Path, sidecar: &Sidecar, params: Vec<&mut Param>) -> Result<()> {
    if params.len() != sidecar.params.len() {
        return Err(PadError::Config(format!(
            "checkpoint has {} tensors, model expects {}",
            sidecar.params.len(),
            params.len()
        )));
    }
    let mut bytes = Vec::new();
    BufReader::new(fs::File::open(dir.join(WEIGHTS_FILE))?).read_to_end(&mut bytes)?;
    let mut values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    for (p, meta) in params.into_iter().zip(&sidecar.params) {
        if p.name != meta.name || p.value.shape() != meta.shape.as_slice() {
            return Err(PadError::Config(format!("checkpoint tensor {} does not match model", meta.name)));
        }
        for v in p.value.iter_mut() {
            *v = values
                .next()
                .ok_or_else(|| PadError::Config("checkpoint weights truncated".into()))?;
        }
    }
    if values.next().is_some() {
        return Err(PadError::Config("checkpoint has trailing weights".into()));
    }
    Ok(())
}

pub fn save_classifier(model: &PadModel, dir: &Path) -> Result<()> {
    write_params(dir, CheckpointModel::Classifier { config: model.config.clone() }, model.params())
}

pub fn save_uai(model: &UaiModel, dir: &Path) -> Result<()> {
    write_params(dir, CheckpointModel::Uai { config: model.config.clone() }, model.params())
}

impl AnyModel {
    pub fn save(&self, dir: &Path) -> Result<()> {
        match self {
            AnyModel::Classifier(m) => save_classifier(m, dir),
            AnyModel::Uai(m) => save_uai(m, dir),
        }
    }
}

pub fn read_sidecar(dir: &Path) -> Result<Sidecar> {
    let f = fs::File::open(dir.join(SIDECAR_FILE))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

pub fn load(dir: &Path) -> Result<AnyModel> {
    let sidecar = read_sidecar(dir)?;
    match &sidecar.model {
        CheckpointModel::Classifier { config } => {
            let mut model = build_classifier(config)?;
            read_params(dir, &sidecar, model.params_mut())?;
            Ok(AnyModel::Classifier(model))
        }
        CheckpointModel::Uai { config } => {
            let mut model = build_uai(config)?;
            read_params(dir, &sidecar, model.params_mut())?;
            Ok(AnyModel::Uai(model))
        }
    }
}

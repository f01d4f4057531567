//! Versioned JSON checkpoints with base64 little-endian `f64` arrays.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "irslab-checkpoint";
pub const VERSION: u32 = 1;

pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Checkpoint(format!("bad base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint("payload is not a whole number of f64s".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// One stored parameter vector plus a description of its architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRecord {
    pub architecture: serde_json::Value,
    pub num_params: usize,
    pub params: String,
}

impl NetworkRecord {
    pub fn new<A: Serialize>(architecture: &A, params: &[f64]) -> Result<Self> {
        Ok(Self {
            architecture: serde_json::to_value(architecture)?,
            num_params: params.len(),
            params: encode_f64s(params),
        })
    }

    pub fn decode_params(&self) -> Result<Vec<f64>> {
        let p = decode_f64s(&self.params)?;
        if p.len() != self.num_params {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, decoded {}",
                self.num_params,
                p.len()
            )));
        }
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub algorithm: String,
    /// Full run configuration.
    pub config: serde_json::Value,
    pub networks: BTreeMap<String, NetworkRecord>,
}

impl Checkpoint {
    pub fn new(algorithm: &str, config: serde_json::Value) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            algorithm: algorithm.into(),
            config,
            networks: BTreeMap::new(),
        }
    }

    pub fn insert<A: Serialize>(&mut self, name: &str, architecture: &A, params: &[f64]) -> Result<()> {
        self.networks.insert(name.into(), NetworkRecord::new(architecture, params)?);
        Ok(())
    }

    /// Parameters of network `name`, checked against `expected_len`.
    pub fn params(&self, name: &str, expected_len: usize) -> Result<Vec<f64>> {
        let rec = self
            .networks
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing network {name}")))?;
        let p = rec.decode_params()?;
        if p.len() != expected_len {
            return Err(Error::Checkpoint(format!(
                "network {name} has {} parameters, expected {expected_len}",
                p.len()
            )));
        }
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let expected = format!("expected format {FORMAT:?} version {VERSION}");
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("{expected}: {e}")))?;
        if c.format != FORMAT {
            return Err(Error::Checkpoint(format!("{expected}, found format {:?}", c.format)));
        }
        if c.version != VERSION {
            return Err(Error::Checkpoint(format!("{expected}, found version {}", c.version)));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

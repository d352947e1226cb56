//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `DSVBCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, a JSON header, then every parameter
//! value as little-endian `f64` in header order. Values round-trip bit-exactly.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dat::{DiscArch, Discriminator};
use crate::data::NormalizationStats;
use crate::diffcore::Tensor;
use crate::error::{DsvbError, Result};
use crate::nn::ParamStore;
use crate::trainer::baseline::{BaselineArch, BaselineModel};
use crate::vrnn::{VrnnArch, VrnnModel};

pub const MAGIC: &[u8; 8] = b"DSVBCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Dsvb { arch: VrnnArch },
    Baseline { arch: BaselineArch },
}

impl ModelSpec {
    pub fn method(&self) -> &'static str {
        match self {
            ModelSpec::Dsvb { .. } => "dsvb",
            ModelSpec::Baseline { .. } => "baseline",
        }
    }

    pub fn cell(&self) -> crate::cells::CellType {
        match self {
            ModelSpec::Dsvb { arch } => arch.cell,
            ModelSpec::Baseline { arch } => arch.cell,
        }
    }

    /// Display label such as `DSVB-GRU` or `GRU`.
    pub fn label(&self) -> String {
        let cell = self.cell().as_str().to_uppercase();
        match self {
            ModelSpec::Dsvb { .. } => format!("DSVB-{cell}"),
            ModelSpec::Baseline { .. } => cell,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: usize,
    pub final_loss: Option<f64>,
    pub source_validation_rmse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    model: ModelSpec,
    normalization: Option<NormalizationStats>,
    meta: CheckpointMeta,
    params: Vec<ParamEntry>,
    discriminator_arch: Option<DiscArch>,
    discriminator_params: Vec<ParamEntry>,
}

/// Parameters plus everything needed to rebuild and apply a trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelSpec,
    pub normalization: Option<NormalizationStats>,
    pub meta: CheckpointMeta,
    pub params: ParamStore,
    pub discriminator: Option<(DiscArch, ParamStore)>,
}

fn entries(store: &ParamStore) -> Vec<ParamEntry> {
    store
        .names()
        .iter()
        .zip(store.values())
        .map(|(name, v)| ParamEntry {
            name: name.clone(),
            shape: v.shape().to_vec(),
        })
        .collect()
}

fn read_store(entries: &[ParamEntry], bytes: &[u8], offset: &mut usize) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    for e in entries {
        let n: usize = e.shape.iter().product();
        let end = *offset + n * 8;
        if end > bytes.len() {
            return Err(DsvbError::Checkpoint(format!("truncated values for `{}`", e.name)));
        }
        let data = bytes[*offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        *offset = end;
        store.add(e.name.clone(), Tensor::new(e.shape.clone(), data)?);
    }
    Ok(store)
}

impl Checkpoint {
    pub fn from_vrnn(
        model: &VrnnModel,
        disc: Option<&Discriminator>,
        normalization: Option<NormalizationStats>,
        meta: CheckpointMeta,
    ) -> Self {
        Checkpoint {
            model: ModelSpec::Dsvb {
                arch: model.arch.clone(),
            },
            normalization,
            meta,
            params: model.params.clone(),
            discriminator: disc.map(|d| (d.arch.clone(), d.params.clone())),
        }
    }

    pub fn from_baseline(
        model: &BaselineModel,
        normalization: Option<NormalizationStats>,
        meta: CheckpointMeta,
    ) -> Self {
        Checkpoint {
            model: ModelSpec::Baseline {
                arch: model.arch.clone(),
            },
            normalization,
            meta,
            params: model.params.clone(),
            discriminator: None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model: self.model.clone(),
            normalization: self.normalization.clone(),
            meta: self.meta.clone(),
            params: entries(&self.params),
            discriminator_arch: self.discriminator.as_ref().map(|(a, _)| a.clone()),
            discriminator_params: self
                .discriminator
                .as_ref()
                .map(|(_, s)| entries(s))
                .unwrap_or_default(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.params.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let stores = std::iter::once(&self.params).chain(self.discriminator.as_ref().map(|(_, s)| s));
        for store in stores {
            for v in store.values() {
                for x in v.data() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(DsvbError::Checkpoint("not a dsvb checkpoint".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(DsvbError::Checkpoint(format!("unsupported format version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let Some(json) = bytes.get(20..20 + len) else {
            return Err(DsvbError::Checkpoint("truncated header".into()));
        };
        let header: Header = serde_json::from_slice(json)?;
        let mut offset = 20 + len;
        let params = read_store(&header.params, bytes, &mut offset)?;
        let discriminator = match header.discriminator_arch {
            Some(arch) => Some((arch, read_store(&header.discriminator_params, bytes, &mut offset)?)),
            None => None,
        };
        if offset != bytes.len() {
            return Err(DsvbError::Checkpoint(format!(
                "{} trailing bytes after parameter values",
                bytes.len() - offset
            )));
        }
        Ok(Checkpoint {
            model: header.model,
            normalization: header.normalization,
            meta: header.meta,
            params,
            discriminator,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Rebuild the trained model.
    pub fn build(&self) -> Result<TrainedModel> {
        // Construction needs an RNG; every value is overwritten right after.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match &self.model {
            ModelSpec::Dsvb { arch } => {
                let mut model = VrnnModel::new(arch.clone(), &mut rng)?;
                model
                    .params
                    .load_from(self.params.names(), self.params.values().to_vec())?;
                Ok(TrainedModel::Dsvb(model))
            }
            ModelSpec::Baseline { arch } => {
                let mut model = BaselineModel::new(arch.clone(), &mut rng)?;
                model
                    .params
                    .load_from(self.params.names(), self.params.values().to_vec())?;
                Ok(TrainedModel::Baseline(model))
            }
        }
    }

    pub fn build_discriminator(&self) -> Result<Option<Discriminator>> {
        let Some((arch, store)) = &self.discriminator else {
            return Ok(None);
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut disc = Discriminator::new(arch.clone(), &mut rng)?;
        disc.params.load_from(store.names(), store.values().to_vec())?;
        Ok(Some(disc))
    }
}

#[derive(Clone, Debug)]
pub enum TrainedModel {
    Dsvb(VrnnModel),
    Baseline(BaselineModel),
}

/// Point estimates and (for the VRNN) per-dimension posterior std, both in
/// the model's normalised units.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub mean: Tensor,
    pub std: Option<Tensor>,
}

impl TrainedModel {
    pub fn n_y(&self) -> usize {
        match self {
            TrainedModel::Dsvb(m) => m.arch.n_y,
            TrainedModel::Baseline(m) => m.arch.n_y,
        }
    }

    pub fn n_x(&self) -> usize {
        match self {
            TrainedModel::Dsvb(m) => m.arch.n_x,
            TrainedModel::Baseline(m) => m.arch.n_x,
        }
    }

    /// Estimate states from already-normalised measurements `[T, n_y]`.
    pub fn estimate(&self, measurements: &Tensor, chunk_len: usize) -> Result<Estimate> {
        match self {
            TrainedModel::Dsvb(m) => {
                let (mean, std) = m.estimate(measurements, chunk_len)?;
                Ok(Estimate { mean, std: Some(std) })
            }
            TrainedModel::Baseline(m) => Ok(Estimate {
                mean: m.estimate(measurements, chunk_len)?,
                std: None,
            }),
        }
    }
}

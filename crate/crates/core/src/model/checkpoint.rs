//! Versioned binary checkpoints and vanilla-to-multimodal transfer.
//!
//! Layout: 8-byte magic, u32 format version, u64 header length, a JSON
//! header, then every parameter as little-endian f64 in header order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::layout::{fusion_weight_name, param_specs, weather_rows, FUSION_POINTS};
use super::Model;
use crate::error::{Error, Result};
use crate::nn::ParamStore;

const MAGIC: &[u8; 8] = b"SMKYCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingStage {
    Vanilla,
    Multimodal,
}

impl TrainingStage {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainingStage::Vanilla => "vanilla",
            TrainingStage::Multimodal => "multimodal",
        }
    }
}

/// Snapshot of a ChaCha stream position, enough to resume sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Stored as text; JSON numbers cannot hold 128 bits.
    #[serde(with = "u128_text")]
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

mod u128_text {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub stage: TrainingStage,
    pub val_loss: Option<f64>,
    pub epoch: Option<usize>,
    pub rng: Option<RngState>,
    pub params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    stage: TrainingStage,
    val_loss: Option<f64>,
    epoch: Option<usize>,
    rng: Option<RngState>,
    params: Vec<ParamEntry>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, stage: TrainingStage, val_loss: Option<f64>) -> Self {
        Self {
            config: model.config().clone(),
            stage,
            val_loss,
            epoch: None,
            rng: None,
            params: model.params().clone(),
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        Model::from_params(self.config.clone(), self.params.clone())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let header = Header {
            config: self.config.clone(),
            stage: self.stage,
            val_loss: self.val_loss,
            epoch: self.epoch,
            rng: self.rng,
            params: self
                .params
                .iter()
                .map(|(_, name, t)| ParamEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let io = |e| Error::Model(format!("writing checkpoint: {e}"));
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&json).map_err(io)?;
        for (_, _, t) in self.params.iter() {
            let mut buf = Vec::with_capacity(t.len() * 8);
            for v in t.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |m: String| Error::Model(format!("invalid checkpoint: {m}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| bad(e.to_string()))?;
        if &magic != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let mut u32b = [0u8; 4];
        r.read_exact(&mut u32b).map_err(|e| bad(e.to_string()))?;
        let version = u32::from_le_bytes(u32b);
        if version != VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let mut u64b = [0u8; 8];
        r.read_exact(&mut u64b).map_err(|e| bad(e.to_string()))?;
        let len = u64::from_le_bytes(u64b) as usize;
        if len > 64 << 20 {
            return Err(bad(format!("header length {len} is implausible")));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(|e| bad(e.to_string()))?;
        let header: Header = serde_json::from_slice(&json)?;

        let mut params = ParamStore::new();
        for p in header.params {
            let n: usize = p.shape.iter().product();
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes)
                .map_err(|e| bad(format!("data for {}: {e}", p.name)))?;
            let data: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let t = ArrayD::from_shape_vec(IxDyn(&p.shape), data).map_err(|e| bad(e.to_string()))?;
            params.insert(p.name, t)?;
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| bad(e.to_string()))? != 0 {
            return Err(bad("trailing bytes".into()));
        }
        let ckpt = Self {
            config: header.config,
            stage: header.stage,
            val_loss: header.val_loss,
            epoch: header.epoch,
            rng: header.rng,
            params,
        };
        ckpt.to_model()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut std::io::BufReader::new(f))
            .map_err(|e| Error::Model(format!("{}: {e}", path.display())))
    }
}

/// Widen a vanilla checkpoint for weather fusion. Shared parameters are
/// copied verbatim; fusion layers gain weather rows drawn from `seed`, or
/// zeros when `config.fusion_test_mode` is set.
pub fn init_from_vanilla(vanilla: &Checkpoint, config: &ModelConfig, seed: u64) -> Result<Checkpoint> {
    if vanilla.stage != TrainingStage::Vanilla {
        return Err(Error::Model(format!(
            "expected a vanilla checkpoint, got stage {}",
            vanilla.stage.as_str()
        )));
    }
    if !config.fusion_enabled {
        return Err(Error::Model("target configuration must enable fusion".into()));
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pad = config.fusion_pad_width();
    let mut params = ParamStore::new();
    let mut problems = Vec::new();
    for spec in param_specs(config) {
        let Some(src) = vanilla.params.by_name(&spec.name) else {
            problems.push(format!("{} missing from vanilla checkpoint", spec.name));
            continue;
        };
        let is_fusion = FUSION_POINTS.iter().any(|p| fusion_weight_name(p) == spec.name);
        let value = if src.shape() == spec.shape.as_slice() {
            src.clone()
        } else if is_fusion && src.ndim() == 2 && src.shape()[0] + pad == spec.shape[0] && src.shape()[1] == spec.shape[1] {
            let embed = src.shape()[0];
            let mut t = ArrayD::zeros(IxDyn(&spec.shape));
            t.slice_mut(s![..embed, ..]).assign(src);
            let rows = weather_rows(embed, pad, spec.shape[1], config.fusion_test_mode, &mut rng);
            t.slice_mut(s![embed.., ..]).assign(&rows);
            t
        } else {
            problems.push(format!(
                "{}: vanilla shape {:?} incompatible with {:?}",
                spec.name,
                src.shape(),
                spec.shape
            ));
            continue;
        };
        params.insert(spec.name, value)?;
    }
    if !problems.is_empty() {
        return Err(Error::Model(format!("cannot transfer weights: {}", problems.join("; "))));
    }
    let out = Checkpoint {
        config: config.clone(),
        stage: TrainingStage::Multimodal,
        val_loss: None,
        epoch: None,
        rng: None,
        params,
    };
    out.to_model()?;
    Ok(out)
}

//! The spatiotemporal smoke detector.
//!
//! Per-tile residual CNN features from the previous and current frame are
//! widened with the replicated weather vector and passed through a hidden
//! layer, combined per tile by an LSTM over the two frames, fused with the
//! weather again, and contextualised across tiles by a transformer encoder
//! with a classification token. Three tile heads (CNN, LSTM, transformer) and
//! one image head produce logits.

mod checkpoint;
mod config;
mod layout;

use ndarray::{Array2, ArrayD, Axis, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{init_from_vanilla, Checkpoint, RngState, TrainingStage};
pub use config::{FusionSpec, ModelConfig, WEATHER_DIM};

use crate::dataset::AlignedSample;
use crate::error::{Error, Result};
use crate::image::TileGrid;
use crate::nn::{logistic, Graph, ParamStore, Tensor, Var};
use crate::weather::WeatherVector;
use layout::{init_tensor, param_specs, Dense, Layout};

const LN_EPS: f64 = 1e-5;

/// Which of the two weather injection points a fusion layer serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionPoint {
    /// Between the CNN embedding and the LSTM.
    Backbone,
    /// Between the LSTM output and the transformer.
    Temporal,
}

/// Logits from every head, for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub cnn_tile_logits: Vec<f64>,
    pub temporal_tile_logits: Vec<f64>,
    pub spatial_tile_logits: Vec<f64>,
    pub image_logit: f64,
}

impl ModelOutput {
    pub fn image_probability(&self) -> f64 {
        logistic(self.image_logit)
    }

    pub fn tile_probabilities(&self) -> [Vec<f64>; 3] {
        let p = |v: &Vec<f64>| v.iter().map(|&z| logistic(z)).collect();
        [
            p(&self.cnn_tile_logits),
            p(&self.temporal_tile_logits),
            p(&self.spatial_tile_logits),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.image_logit.is_finite()
            && self
                .cnn_tile_logits
                .iter()
                .chain(&self.temporal_tile_logits)
                .chain(&self.spatial_tile_logits)
                .all(|v| v.is_finite())
    }
}

/// Tensors fed to one forward pass.
#[derive(Debug, Clone)]
pub struct ModelInput {
    /// `[tiles, tile, tile, 3]`, NHWC.
    pub previous: Tensor,
    pub current: Tensor,
    pub weather: Option<WeatherVector>,
}

impl ModelInput {
    pub fn from_grids(previous: &TileGrid, current: &TileGrid, weather: Option<WeatherVector>) -> Self {
        Self {
            previous: previous.to_tensor(),
            current: current.to_tensor(),
            weather,
        }
    }

    /// Weather is attached only when the model fuses it.
    pub fn from_sample(sample: &AlignedSample, fusion_enabled: bool) -> Self {
        Self::from_grids(
            &sample.previous.grid,
            &sample.current.grid,
            if fusion_enabled { sample.weather.clone() } else { None },
        )
    }
}

/// Graph nodes of a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub cnn_tile_logits: Var,
    pub temporal_tile_logits: Var,
    pub spatial_tile_logits: Var,
    pub image_logit: Var,
    /// `[1, 8]` weather input, present when fusion is enabled.
    pub weather: Option<Var>,
}

impl ForwardVars {
    pub fn output(&self, g: &Graph) -> ModelOutput {
        let flat = |v: Var| g.value(v).iter().copied().collect::<Vec<_>>();
        ModelOutput {
            cnn_tile_logits: flat(self.cnn_tile_logits),
            temporal_tile_logits: flat(self.temporal_tile_logits),
            spatial_tile_logits: flat(self.spatial_tile_logits),
            image_logit: flat(self.image_logit)[0],
        }
    }
}

/// Detector parameters plus the configuration they were built for.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

impl Model {
    /// Freshly initialised model. Deterministic in `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for spec in param_specs(&config) {
            let t = init_tensor(&spec, config.fusion_test_mode, &mut rng);
            params.insert(spec.name, t)?;
        }
        Self::from_params(config, params)
    }

    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let layout = Layout::resolve(&config, &params)?;
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Mutable parameter access. Shapes must be preserved.
    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    /// Copy `backbone.*` parameters from a pretrained store.
    pub fn load_pretrained_backbone(&mut self, source: &ParamStore) -> Result<usize> {
        let mut copied = 0;
        let names: Vec<String> = self
            .params
            .iter()
            .filter(|(_, n, _)| n.starts_with("backbone."))
            .map(|(_, n, _)| n.to_string())
            .collect();
        for name in names {
            let src = source
                .by_name(&name)
                .ok_or_else(|| Error::Model(format!("pretrained backbone lacks {name}")))?;
            let id = self.params.id(&name).unwrap();
            if src.shape() != self.params.get(id).shape() {
                return Err(Error::Model(format!(
                    "pretrained {name} has shape {:?}, expected {:?}",
                    src.shape(),
                    self.params.get(id).shape()
                )));
            }
            self.params.get_mut(id).assign(src);
            copied += 1;
        }
        Ok(copied)
    }

    fn conv(&self, g: &mut Graph, x: Var, d: Dense, stride: usize) -> Var {
        let w = g.param(d.weight);
        let b = g.param(d.bias);
        g.conv2d(x, w, b, stride, 1)
    }

    /// Residual CNN applied to each tile independently; `[n, t, t, 3]` to
    /// `[n, embed]` via global average pooling of rectified features.
    pub fn encode_tiles(&self, g: &mut Graph, tiles: Var) -> Var {
        let l = &self.layout;
        let x = self.conv(g, tiles, l.stem, 2);
        let mut x = g.relu(x);
        for stage in &l.stages {
            if let Some(down) = stage.down {
                let y = self.conv(g, x, down, 2);
                x = g.relu(y);
            }
            let y = self.conv(g, x, stage.res1, 1);
            let y = g.relu(y);
            let y = self.conv(g, y, stage.res2, 1);
            let y = g.add(x, y);
            x = g.relu(y);
        }
        g.mean_pool(x)
    }

    /// `[1, weather_dim]` input repeated `replication_factor` times.
    fn replicated_weather(&self, g: &mut Graph, weather: Var, rows: usize) -> Var {
        let copies = vec![weather; self.config.replication_factor];
        let wide = g.concat_cols(&copies);
        g.repeat_rows(wide, rows)
    }

    /// Weather fusion hidden layer: `relu([emb | weather x r] W + b)`.
    /// With fusion disabled the layer sees the embedding alone.
    pub fn fuse_weather(&self, g: &mut Graph, point: FusionPoint, embeddings: Var, weather: Option<Var>) -> Var {
        let dense = match point {
            FusionPoint::Backbone => self.layout.fusion_cnn,
            FusionPoint::Temporal => self.layout.fusion_temporal,
        };
        let x = match weather {
            Some(w) if self.config.fusion_enabled => {
                let rows = g.value(embeddings).shape()[0];
                let rep = self.replicated_weather(g, w, rows);
                g.concat_cols(&[embeddings, rep])
            }
            _ => embeddings,
        };
        let y = g.linear(x, dense.weight, dense.bias);
        g.relu(y)
    }

    /// Per-tile LSTM over the two-step sequence (previous, current); returns
    /// the final hidden state, `[tiles, hidden]`.
    pub fn temporal_combine(&self, g: &mut Graph, previous: Var, current: Var) -> Var {
        let hdim = self.config.temporal_hidden_dim;
        let w_ih = g.param(self.layout.lstm_ih);
        let w_hh = g.param(self.layout.lstm_hh);
        let bias = g.param(self.layout.lstm_bias);
        let rows = g.value(previous).shape()[0];
        let zero = g.input(ArrayD::zeros(IxDyn(&[rows, hdim])));
        let (mut h, mut c) = (zero, zero);
        for x in [previous, current] {
            let xi = g.matmul(x, w_ih);
            let hh = g.matmul(h, w_hh);
            let pre = g.add(xi, hh);
            let gates = g.add_bias(pre, bias);
            let i = g.slice_cols(gates, 0, hdim);
            let f = g.slice_cols(gates, hdim, 2 * hdim);
            let u = g.slice_cols(gates, 2 * hdim, 3 * hdim);
            let o = g.slice_cols(gates, 3 * hdim, 4 * hdim);
            let i = g.sigmoid(i);
            let f = g.sigmoid(f);
            let u = g.tanh(u);
            let o = g.sigmoid(o);
            let keep = g.mul(f, c);
            let write = g.mul(i, u);
            c = g.add(keep, write);
            let tc = g.tanh(c);
            h = g.mul(o, tc);
        }
        h
    }

    /// Transformer encoder over `[cls; tiles] + position`. Returns the
    /// contextualised tile tokens and the classification token.
    pub fn spatial_encode(&self, g: &mut Graph, tiles: Var) -> (Var, Var) {
        let l = &self.layout;
        let n = g.value(tiles).shape()[0];
        let tokens = match l.proj {
            Some(p) => g.linear(tiles, p.weight, p.bias),
            None => tiles,
        };
        let cls = g.param(l.cls);
        let seq = g.concat_rows(&[cls, tokens]);
        let pos = g.param(l.pos);
        let mut x = g.add(seq, pos);
        for block in &l.blocks {
            let y = g.layer_norm(x, block.ln1.0, block.ln1.1, LN_EPS);
            let y = self.attention(g, y, block.qkv, block.attn_out);
            x = g.add(x, y);
            let y = g.layer_norm(x, block.ln2.0, block.ln2.1, LN_EPS);
            let y = g.linear(y, block.fc1.weight, block.fc1.bias);
            let y = g.gelu(y);
            let y = g.linear(y, block.fc2.weight, block.fc2.bias);
            x = g.add(x, y);
        }
        let cls_out = g.slice_rows(x, 0, 1);
        let tile_out = g.slice_rows(x, 1, n + 1);
        (tile_out, cls_out)
    }

    fn attention(&self, g: &mut Graph, x: Var, qkv: Dense, out: Dense) -> Var {
        let d = self.config.spatial_token_dim;
        let heads = self.config.spatial_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let proj = g.linear(x, qkv.weight, qkv.bias);
        let mut per_head = Vec::with_capacity(heads);
        for h in 0..heads {
            let q = g.slice_cols(proj, h * dh, (h + 1) * dh);
            let k = g.slice_cols(proj, d + h * dh, d + (h + 1) * dh);
            let v = g.slice_cols(proj, 2 * d + h * dh, 2 * d + (h + 1) * dh);
            let kt = g.transpose(k);
            let scores = g.matmul(q, kt);
            let scores = g.scale(scores, scale);
            let attn = g.softmax_rows(scores);
            per_head.push(g.matmul(attn, v));
        }
        let merged = g.concat_cols(&per_head);
        g.linear(merged, out.weight, out.bias)
    }

    /// Tile heads on each stage's per-tile features, image head on the
    /// classification token.
    pub fn predict_heads(&self, g: &mut Graph, cnn: Var, temporal: Var, tiles: Var, cls: Var) -> [Var; 4] {
        let l = &self.layout;
        let c = g.linear(cnn, l.head_cnn.weight, l.head_cnn.bias);
        let t = g.linear(temporal, l.head_temporal.weight, l.head_temporal.bias);
        let s = g.linear(tiles, l.head_spatial.weight, l.head_spatial.bias);
        let i = g.linear(cls, l.head_image1.weight, l.head_image1.bias);
        let i = g.relu(i);
        let i = g.linear(i, l.head_image2.weight, l.head_image2.bias);
        [c, t, s, i]
    }

    fn check_input(&self, input: &ModelInput) -> Result<()> {
        let n = self.config.num_tiles();
        let ts = self.config.tile_size;
        let expected = [n, ts, ts, 3];
        for (what, t) in [("previous", &input.previous), ("current", &input.current)] {
            if t.shape() != expected {
                return Err(Error::Model(format!(
                    "{what} frame tiles have shape {:?}, expected {expected:?}",
                    t.shape()
                )));
            }
        }
        match (&input.weather, self.config.fusion_enabled) {
            (None, true) => Err(Error::Model("fusion enabled but no weather vector supplied".into())),
            (Some(_), false) => Err(Error::Model("weather vector supplied to a model without fusion".into())),
            (Some(w), true) => {
                if !w.normalized {
                    return Err(Error::Model("weather vector must be normalized before fusion".into()));
                }
                if w.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Model("weather vector has non-finite values".into()));
                }
                Ok(())
            }
            (None, false) => Ok(()),
        }
    }

    /// Full forward pass recorded on `g`.
    pub fn forward_graph(&self, g: &mut Graph, input: &ModelInput) -> Result<ForwardVars> {
        self.check_input(input)?;
        let n = self.config.num_tiles();
        let both = ndarray::concatenate(Axis(0), &[input.previous.view(), input.current.view()])
            .expect("tile shapes checked");
        let tiles = g.constant(both);
        let weather = input.weather.as_ref().map(|w| {
            let row = Array2::from_shape_vec((1, w.values.len()), w.values.to_vec()).unwrap();
            g.input(row.into_dyn())
        });

        let emb = self.encode_tiles(g, tiles);
        let prev_emb = g.slice_rows(emb, 0, n);
        let curr_emb = g.slice_rows(emb, n, 2 * n);
        let prev_fused = self.fuse_weather(g, FusionPoint::Backbone, prev_emb, weather);
        let curr_fused = self.fuse_weather(g, FusionPoint::Backbone, curr_emb, weather);
        let temporal = self.temporal_combine(g, prev_fused, curr_fused);
        let temporal_fused = self.fuse_weather(g, FusionPoint::Temporal, temporal, weather);
        let (tile_tokens, cls) = self.spatial_encode(g, temporal_fused);
        let [c, t, s, i] = self.predict_heads(g, curr_emb, temporal, tile_tokens, cls);
        Ok(ForwardVars {
            cnn_tile_logits: c,
            temporal_tile_logits: t,
            spatial_tile_logits: s,
            image_logit: i,
            weather,
        })
    }

    /// Evaluation-mode forward pass.
    pub fn forward(&self, input: &ModelInput) -> Result<ModelOutput> {
        let mut g = Graph::new(&self.params);
        let vars = self.forward_graph(&mut g, input)?;
        Ok(vars.output(&g))
    }

    pub fn forward_sample(&self, sample: &AlignedSample) -> Result<ModelOutput> {
        if self.config.fusion_enabled && sample.weather.is_none() {
            return Err(Error::Model(format!(
                "sample {} offset {} has no weather vector",
                sample.fire_id, sample.offset
            )));
        }
        self.forward(&ModelInput::from_sample(sample, self.config.fusion_enabled))
    }
}

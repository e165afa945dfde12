//! Canonical parameter inventory of the detector.
//!
//! Every parameter has a stable dotted name, a shape derived from the
//! [`ModelConfig`], and an initialisation rule. The inventory order is the
//! order parameters appear in a [`ParamStore`] and in checkpoint files.

use rand::Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{ones, uniform, zeros, ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    /// He-uniform for convolutions feeding a rectifier.
    Conv { fan_in: usize },
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    Linear { fan_in: usize },
    /// Small symmetric uniform for tokens and position tables.
    Embedding,
    Zeros,
    Ones,
    /// LSTM gate bias: forget-gate block set to one.
    ForgetBias { hidden: usize },
    /// Fusion hidden layer: `embed` rows acting on the embedding followed by
    /// `pad` rows acting on the replicated weather block.
    Fusion { embed: usize, pad: usize },
}

#[derive(Debug, Clone)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn spec(name: impl Into<String>, shape: &[usize], init: Init) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        shape: shape.to_vec(),
        init,
    }
}

fn conv_specs(out: &mut Vec<ParamSpec>, prefix: &str, cin: usize, cout: usize) {
    out.push(spec(
        format!("{prefix}.weight"),
        &[3, 3, cin, cout],
        Init::Conv { fan_in: 9 * cin },
    ));
    out.push(spec(format!("{prefix}.bias"), &[cout], Init::Zeros));
}

fn linear_specs(out: &mut Vec<ParamSpec>, prefix: &str, fan_in: usize, fan_out: usize) {
    out.push(spec(
        format!("{prefix}.weight"),
        &[fan_in, fan_out],
        Init::Linear { fan_in },
    ));
    out.push(spec(format!("{prefix}.bias"), &[fan_out], Init::Zeros));
}

fn norm_specs(out: &mut Vec<ParamSpec>, prefix: &str, dim: usize) {
    out.push(spec(format!("{prefix}.gamma"), &[dim], Init::Ones));
    out.push(spec(format!("{prefix}.beta"), &[dim], Init::Zeros));
}

pub(crate) fn fusion_weight_name(point: &str) -> String {
    format!("{point}.weight")
}

pub(crate) const FUSION_POINTS: [&str; 2] = ["fusion_cnn", "fusion_temporal"];

/// Full parameter inventory for a configuration.
pub(crate) fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let widths = &cfg.backbone_widths;
    conv_specs(&mut out, "backbone.stem", 3, widths[0]);
    for (i, &w) in widths.iter().enumerate() {
        if i > 0 {
            conv_specs(&mut out, &format!("backbone.stage{i}.down"), widths[i - 1], w);
        }
        conv_specs(&mut out, &format!("backbone.stage{i}.res1"), w, w);
        conv_specs(&mut out, &format!("backbone.stage{i}.res2"), w, w);
    }

    let e = cfg.backbone_embed_dim;
    let h = cfg.temporal_hidden_dim;
    let d = cfg.spatial_token_dim;
    let pad = cfg.fusion_pad_width();

    out.push(spec(
        fusion_weight_name("fusion_cnn"),
        &[e + pad, e],
        Init::Fusion { embed: e, pad },
    ));
    out.push(spec("fusion_cnn.bias", &[e], Init::Zeros));

    out.push(spec("temporal.w_ih", &[e, 4 * h], Init::Linear { fan_in: h }));
    out.push(spec("temporal.w_hh", &[h, 4 * h], Init::Linear { fan_in: h }));
    out.push(spec("temporal.bias", &[4 * h], Init::ForgetBias { hidden: h }));

    out.push(spec(
        fusion_weight_name("fusion_temporal"),
        &[h + pad, h],
        Init::Fusion { embed: h, pad },
    ));
    out.push(spec("fusion_temporal.bias", &[h], Init::Zeros));

    if h != d {
        linear_specs(&mut out, "spatial.proj", h, d);
    }
    out.push(spec("spatial.cls", &[1, d], Init::Embedding));
    out.push(spec("spatial.pos", &[cfg.num_tiles() + 1, d], Init::Embedding));
    for l in 0..cfg.spatial_depth {
        let p = format!("spatial.block{l}");
        norm_specs(&mut out, &format!("{p}.ln1"), d);
        linear_specs(&mut out, &format!("{p}.attn.qkv"), d, 3 * d);
        linear_specs(&mut out, &format!("{p}.attn.out"), d, d);
        norm_specs(&mut out, &format!("{p}.ln2"), d);
        linear_specs(&mut out, &format!("{p}.mlp.fc1"), d, cfg.spatial_mlp_dim);
        linear_specs(&mut out, &format!("{p}.mlp.fc2"), cfg.spatial_mlp_dim, d);
    }

    linear_specs(&mut out, "head.cnn_tile", e, 1);
    linear_specs(&mut out, "head.temporal_tile", h, 1);
    linear_specs(&mut out, "head.spatial_tile", d, 1);
    linear_specs(&mut out, "head.image.fc1", d, cfg.image_head_hidden);
    linear_specs(&mut out, "head.image.fc2", cfg.image_head_hidden, 1);
    out
}

/// Initial value for one parameter. `test_mode` selects the deterministic
/// fusion pattern (identity on the embedding, zero on the weather block).
pub(crate) fn init_tensor(spec: &ParamSpec, test_mode: bool, rng: &mut impl Rng) -> Tensor {
    match spec.init {
        Init::Conv { fan_in } => uniform(&spec.shape, (6.0 / fan_in as f64).sqrt(), rng),
        Init::Linear { fan_in } => uniform(&spec.shape, 1.0 / (fan_in as f64).sqrt(), rng),
        Init::Embedding => uniform(&spec.shape, 0.02, rng),
        Init::Zeros => zeros(&spec.shape),
        Init::Ones => ones(&spec.shape),
        Init::ForgetBias { hidden } => {
            let mut t = zeros(&spec.shape);
            t.as_slice_mut().unwrap()[hidden..2 * hidden].fill(1.0);
            t
        }
        Init::Fusion { embed, pad } => {
            let mut t = zeros(&spec.shape);
            if test_mode {
                for i in 0..embed {
                    t[[i, i]] = 1.0;
                }
            } else {
                let fresh = uniform(&spec.shape, 1.0 / ((embed + pad) as f64).sqrt(), rng);
                t.assign(&fresh);
            }
            t
        }
    }
}

/// Fresh rows for the weather block of a fusion layer being widened from a
/// vanilla checkpoint.
pub(crate) fn weather_rows(
    embed: usize,
    pad: usize,
    out: usize,
    test_mode: bool,
    rng: &mut impl Rng,
) -> Tensor {
    if test_mode {
        zeros(&[pad, out])
    } else {
        uniform(&[pad, out], 1.0 / ((embed + pad) as f64).sqrt(), rng)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Stage {
    pub down: Option<Dense>,
    pub res1: Dense,
    pub res2: Dense,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Block {
    pub ln1: (ParamId, ParamId),
    pub qkv: Dense,
    pub attn_out: Dense,
    pub ln2: (ParamId, ParamId),
    pub fc1: Dense,
    pub fc2: Dense,
}

/// Parameter handles resolved against a store.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub stem: Dense,
    pub stages: Vec<Stage>,
    pub fusion_cnn: Dense,
    pub lstm_ih: ParamId,
    pub lstm_hh: ParamId,
    pub lstm_bias: ParamId,
    pub fusion_temporal: Dense,
    pub proj: Option<Dense>,
    pub cls: ParamId,
    pub pos: ParamId,
    pub blocks: Vec<Block>,
    pub head_cnn: Dense,
    pub head_temporal: Dense,
    pub head_spatial: Dense,
    pub head_image1: Dense,
    pub head_image2: Dense,
}

impl Layout {
    /// Resolve handles and verify that the store holds exactly the
    /// inventory for `cfg`, with matching shapes.
    pub fn resolve(cfg: &ModelConfig, store: &ParamStore) -> Result<Self> {
        let specs = param_specs(cfg);
        let mut problems = Vec::new();
        for s in &specs {
            match store.by_name(&s.name) {
                None => problems.push(format!("missing {}", s.name)),
                Some(t) if t.shape() != s.shape.as_slice() => problems.push(format!(
                    "{} has shape {:?}, expected {:?}",
                    s.name,
                    t.shape(),
                    s.shape
                )),
                _ => {}
            }
        }
        if store.len() != specs.len() {
            for (_, name, _) in store.iter() {
                if !specs.iter().any(|s| s.name == name) {
                    problems.push(format!("unexpected {name}"));
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Model(format!(
                "parameter set does not match config: {}",
                problems.join("; ")
            )));
        }

        let id = |n: &str| store.id(n).expect("checked above");
        let dense = |p: &str| Dense {
            weight: id(&format!("{p}.weight")),
            bias: id(&format!("{p}.bias")),
        };
        let norm = |p: &str| (id(&format!("{p}.gamma")), id(&format!("{p}.beta")));

        let stages = (0..cfg.backbone_widths.len())
            .map(|i| Stage {
                down: (i > 0).then(|| dense(&format!("backbone.stage{i}.down"))),
                res1: dense(&format!("backbone.stage{i}.res1")),
                res2: dense(&format!("backbone.stage{i}.res2")),
            })
            .collect();
        let blocks = (0..cfg.spatial_depth)
            .map(|l| {
                let p = format!("spatial.block{l}");
                Block {
                    ln1: norm(&format!("{p}.ln1")),
                    qkv: dense(&format!("{p}.attn.qkv")),
                    attn_out: dense(&format!("{p}.attn.out")),
                    ln2: norm(&format!("{p}.ln2")),
                    fc1: dense(&format!("{p}.mlp.fc1")),
                    fc2: dense(&format!("{p}.mlp.fc2")),
                }
            })
            .collect();

        Ok(Self {
            stem: dense("backbone.stem"),
            stages,
            fusion_cnn: dense("fusion_cnn"),
            lstm_ih: id("temporal.w_ih"),
            lstm_hh: id("temporal.w_hh"),
            lstm_bias: id("temporal.bias"),
            fusion_temporal: dense("fusion_temporal"),
            proj: (cfg.temporal_hidden_dim != cfg.spatial_token_dim).then(|| dense("spatial.proj")),
            cls: id("spatial.cls"),
            pos: id("spatial.pos"),
            blocks,
            head_cnn: dense("head.cnn_tile"),
            head_temporal: dense("head.temporal_tile"),
            head_spatial: dense("head.spatial_tile"),
            head_image1: dense("head.image.fc1"),
            head_image2: dense("head.image.fc2"),
        })
    }
}

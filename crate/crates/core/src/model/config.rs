use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of the fused weather vector.
pub const WEATHER_DIM: usize = 8;

/// Architecture dimensions of the spatiotemporal detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub tile_size: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Channel width of each backbone stage; the last entry is the embedding.
    pub backbone_widths: Vec<usize>,
    pub backbone_embed_dim: usize,
    pub temporal_hidden_dim: usize,
    pub spatial_token_dim: usize,
    pub spatial_depth: usize,
    pub spatial_heads: usize,
    pub spatial_mlp_dim: usize,
    pub image_head_hidden: usize,
    pub weather_dim: usize,
    pub replication_factor: usize,
    pub fusion_enabled: bool,
    pub fusion_test_mode: bool,
    pub backbone_pretrained: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            tile_size: 224,
            grid_rows: 5,
            grid_cols: 9,
            backbone_widths: vec![64, 128, 256, 512],
            backbone_embed_dim: 512,
            temporal_hidden_dim: 512,
            spatial_token_dim: 512,
            spatial_depth: 4,
            spatial_heads: 8,
            spatial_mlp_dim: 2048,
            image_head_hidden: 256,
            weather_dim: WEATHER_DIM,
            replication_factor: 10,
            fusion_enabled: false,
            fusion_test_mode: false,
            backbone_pretrained: false,
        }
    }
}

impl ModelConfig {
    /// Desk-scale configuration: 2x3 grid of 16 px tiles, 32-wide features.
    pub fn toy() -> Self {
        Self {
            tile_size: 16,
            grid_rows: 2,
            grid_cols: 3,
            backbone_widths: vec![8, 16, 32],
            backbone_embed_dim: 32,
            temporal_hidden_dim: 32,
            spatial_token_dim: 32,
            spatial_depth: 1,
            spatial_heads: 2,
            spatial_mlp_dim: 64,
            image_head_hidden: 32,
            ..Self::default()
        }
    }

    pub fn num_tiles(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    /// Width of the replicated weather block appended at each fusion point.
    /// Zero when fusion is disabled.
    pub fn fusion_pad_width(&self) -> usize {
        if self.fusion_enabled {
            self.weather_dim * self.replication_factor
        } else {
            0
        }
    }

    pub fn cnn_fusion(&self) -> Result<FusionSpec> {
        FusionSpec::new(
            self.backbone_embed_dim,
            self.weather_dim,
            if self.fusion_enabled { self.replication_factor } else { 0 },
            self.backbone_embed_dim,
            self.temporal_input_dim(),
        )
    }

    pub fn temporal_fusion(&self) -> Result<FusionSpec> {
        FusionSpec::new(
            self.temporal_hidden_dim,
            self.weather_dim,
            if self.fusion_enabled { self.replication_factor } else { 0 },
            self.temporal_hidden_dim,
            self.temporal_hidden_dim,
        )
    }

    fn temporal_input_dim(&self) -> usize {
        self.backbone_embed_dim
    }

    /// Same architecture with weather fusion switched on or off.
    pub fn with_fusion(&self, enabled: bool) -> Self {
        Self {
            fusion_enabled: enabled,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tile_size", self.tile_size),
            ("grid_rows", self.grid_rows),
            ("grid_cols", self.grid_cols),
            ("backbone_embed_dim", self.backbone_embed_dim),
            ("temporal_hidden_dim", self.temporal_hidden_dim),
            ("spatial_token_dim", self.spatial_token_dim),
            ("spatial_heads", self.spatial_heads),
            ("spatial_mlp_dim", self.spatial_mlp_dim),
            ("image_head_hidden", self.image_head_hidden),
            ("weather_dim", self.weather_dim),
            ("replication_factor", self.replication_factor),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Model(format!("{name} must be > 0")));
            }
        }
        if self.backbone_widths.is_empty() || self.backbone_widths.contains(&0) {
            return Err(Error::Model("backbone_widths must be non-empty and positive".into()));
        }
        if self.backbone_widths.last() != Some(&self.backbone_embed_dim) {
            return Err(Error::Model(format!(
                "last backbone width {:?} must equal backbone_embed_dim {}",
                self.backbone_widths.last(),
                self.backbone_embed_dim
            )));
        }
        let min_tile = 1usize << self.backbone_widths.len();
        if self.tile_size < min_tile {
            return Err(Error::Model(format!(
                "tile_size {} too small for {} downsampling stages",
                self.tile_size,
                self.backbone_widths.len()
            )));
        }
        if self.temporal_hidden_dim != self.backbone_embed_dim {
            return Err(Error::Model(format!(
                "temporal_hidden_dim {} must equal backbone_embed_dim {} so one fusion layout serves both injection points",
                self.temporal_hidden_dim, self.backbone_embed_dim
            )));
        }
        if self.spatial_token_dim % self.spatial_heads != 0 {
            return Err(Error::Model(format!(
                "spatial_token_dim {} not divisible by {} heads",
                self.spatial_token_dim, self.spatial_heads
            )));
        }
        if self.weather_dim != WEATHER_DIM {
            return Err(Error::Model(format!(
                "weather_dim must be {WEATHER_DIM}, got {}",
                self.weather_dim
            )));
        }
        self.cnn_fusion()?;
        self.temporal_fusion()?;
        Ok(())
    }
}

/// Layout of one weather fusion hidden layer.
///
/// The layer consumes `[embedding | weather repeated replication times]` and
/// produces a vector of the downstream component's input width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionSpec {
    pub embed_dim: usize,
    pub weather_dim: usize,
    pub replication_factor: usize,
    pub output_dim: usize,
}

impl FusionSpec {
    /// `downstream_dim` is the input width expected by the next component;
    /// construction fails when the hidden layer would not match it.
    pub fn new(
        embed_dim: usize,
        weather_dim: usize,
        replication_factor: usize,
        output_dim: usize,
        downstream_dim: usize,
    ) -> Result<Self> {
        if embed_dim == 0 || output_dim == 0 {
            return Err(Error::Model("fusion widths must be > 0".into()));
        }
        if output_dim != downstream_dim {
            return Err(Error::Model(format!(
                "fusion output width {output_dim} does not match downstream input width {downstream_dim}"
            )));
        }
        if output_dim != embed_dim {
            return Err(Error::Model(format!(
                "fusion output width {output_dim} must restore the embedding width {embed_dim}"
            )));
        }
        Ok(Self {
            embed_dim,
            weather_dim,
            replication_factor,
            output_dim,
        })
    }

    pub fn pad_width(&self) -> usize {
        self.weather_dim * self.replication_factor
    }

    pub fn input_width(&self) -> usize {
        self.embed_dim + self.pad_width()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fusion_widths() {
        let cfg = ModelConfig {
            fusion_enabled: true,
            ..ModelConfig::default()
        };
        cfg.validate().unwrap();
        let f = cfg.cnn_fusion().unwrap();
        assert_eq!(f.pad_width(), 80);
        assert_eq!(f.input_width(), 592);
        assert_eq!(f.output_dim, 512);
    }

    #[test]
    fn vanilla_has_no_weather_columns() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.fusion_pad_width(), 0);
        assert_eq!(cfg.cnn_fusion().unwrap().input_width(), 512);
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let bad = [
            ModelConfig {
                backbone_embed_dim: 256,
                ..ModelConfig::default()
            },
            ModelConfig {
                temporal_hidden_dim: 384,
                ..ModelConfig::default()
            },
            ModelConfig {
                spatial_heads: 7,
                ..ModelConfig::default()
            },
            ModelConfig {
                replication_factor: 0,
                fusion_enabled: true,
                ..ModelConfig::default()
            },
            ModelConfig {
                weather_dim: 6,
                ..ModelConfig::default()
            },
            ModelConfig {
                tile_size: 4,
                ..ModelConfig::toy()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?} should be rejected");
        }
        assert!(FusionSpec::new(512, 8, 10, 512, 256).is_err());
    }
}

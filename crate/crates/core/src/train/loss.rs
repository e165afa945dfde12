use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ForwardVars, ModelOutput};
use crate::nn::{softplus, Graph, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub image_positive_weight: f64,
    /// cnn tile, temporal tile, spatial tile, image.
    pub head_weights: [f64; 4],
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            image_positive_weight: 5.0,
            head_weights: [1.0; 4],
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.image_positive_weight > 0.0 && self.image_positive_weight.is_finite()) {
            return Err(Error::Config(format!(
                "image_positive_weight must be positive, got {}",
                self.image_positive_weight
            )));
        }
        if self.head_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Config(format!(
                "head weights must be non-negative, got {:?}",
                self.head_weights
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cnn_tile: f64,
    pub temporal_tile: f64,
    pub spatial_tile: f64,
    pub image: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn heads(&self) -> [f64; 4] {
        [self.cnn_tile, self.temporal_tile, self.spatial_tile, self.image]
    }
}

fn bce(logits: &[f64], labels: &[bool], pos_weight: f64) -> f64 {
    let sum: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| if y { pos_weight * softplus(-z) } else { softplus(z) })
        .sum();
    sum / logits.len() as f64
}

fn targets(labels: &[bool]) -> Vec<f64> {
    labels.iter().map(|&y| f64::from(u8::from(y))).collect()
}

/// Per-head binary cross entropy from logits and their weighted total.
pub fn compute_losses(
    output: &ModelOutput,
    tile_labels: &[bool],
    image_label: bool,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    if !output.is_finite() {
        return Err(Error::Training("non-finite logits".into()));
    }
    for (head, logits) in [
        ("cnn", &output.cnn_tile_logits),
        ("temporal", &output.temporal_tile_logits),
        ("spatial", &output.spatial_tile_logits),
    ] {
        if logits.len() != tile_labels.len() {
            return Err(Error::Training(format!(
                "{head} head has {} logits for {} tile labels",
                logits.len(),
                tile_labels.len()
            )));
        }
    }
    let heads = [
        bce(&output.cnn_tile_logits, tile_labels, 1.0),
        bce(&output.temporal_tile_logits, tile_labels, 1.0),
        bce(&output.spatial_tile_logits, tile_labels, 1.0),
        bce(&[output.image_logit], &[image_label], cfg.image_positive_weight),
    ];
    let total = heads.iter().zip(cfg.head_weights).map(|(l, w)| l * w).sum();
    Ok(LossBreakdown {
        cnn_tile: heads[0],
        temporal_tile: heads[1],
        spatial_tile: heads[2],
        image: heads[3],
        total,
    })
}

/// The same loss recorded on a graph, for backpropagation.
pub fn loss_graph(g: &mut Graph, vars: &ForwardVars, tile_labels: &[bool], image_label: bool, cfg: &LossConfig) -> Var {
    let t = targets(tile_labels);
    let c = g.bce_with_logits(vars.cnn_tile_logits, &t, 1.0);
    let l = g.bce_with_logits(vars.temporal_tile_logits, &t, 1.0);
    let s = g.bce_with_logits(vars.spatial_tile_logits, &t, 1.0);
    let i = g.bce_with_logits(vars.image_logit, &targets(&[image_label]), cfg.image_positive_weight);
    let w = cfg.head_weights;
    g.weighted_sum(&[(c, w[0]), (l, w[1]), (s, w[2]), (i, w[3])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn output(tiles: [f64; 3], image: f64, n: usize) -> ModelOutput {
        ModelOutput {
            cnn_tile_logits: vec![tiles[0]; n],
            temporal_tile_logits: vec![tiles[1]; n],
            spatial_tile_logits: vec![tiles[2]; n],
            image_logit: image,
        }
    }

    #[test]
    fn saturated_correct_predictions_cost_nothing() {
        let out = ModelOutput {
            cnn_tile_logits: vec![20.0, -20.0],
            temporal_tile_logits: vec![20.0, -20.0],
            spatial_tile_logits: vec![20.0, -20.0],
            image_logit: 20.0,
        };
        let l = compute_losses(&out, &[true, false], true, &LossConfig::default()).unwrap();
        assert!(l.total < 1e-6);
    }

    #[test]
    fn image_loss_at_even_odds() {
        let cfg = LossConfig::default();
        let pos = compute_losses(&output([0.0; 3], 0.0, 1), &[false], true, &cfg).unwrap();
        assert!((pos.image - 5.0 * 2f64.ln()).abs() < 1e-12);
        assert!((pos.image - 3.4657).abs() < 1e-4);
        let neg = compute_losses(&output([0.0; 3], 0.0, 1), &[false], false, &cfg).unwrap();
        assert!((neg.image - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn head_weights_gate_the_total() {
        let cfg = LossConfig {
            head_weights: [0.0, 0.0, 0.0, 1.0],
            ..LossConfig::default()
        };
        let l = compute_losses(&output([1.0, -2.0, 3.0], 0.4, 6), &[true; 6], false, &cfg).unwrap();
        assert_eq!(l.total, l.image);
    }

    #[test]
    fn nan_logits_are_rejected() {
        let out = output([f64::NAN, 0.0, 0.0], 0.0, 2);
        assert!(compute_losses(&out, &[true, false], true, &LossConfig::default()).is_err());
    }

    #[test]
    fn invalid_configs() {
        let bad = LossConfig {
            image_positive_weight: 0.0,
            ..LossConfig::default()
        };
        assert!(bad.validate().is_err());
        let neg = LossConfig {
            head_weights: [1.0, -1.0, 1.0, 1.0],
            ..LossConfig::default()
        };
        assert!(neg.validate().is_err());
    }

    /// Textbook weighted cross entropy through probabilities.
    fn naive(z: f64, y: bool, w: f64) -> f64 {
        let p = 1.0 / (1.0 + (-z).exp());
        if y {
            -w * p.ln()
        } else {
            -(1.0 - p).ln()
        }
    }

    proptest! {
        #[test]
        fn matches_elementwise_oracle(
            logits in proptest::collection::vec(-15.0f64..15.0, 13),
            labels in proptest::collection::vec(any::<bool>(), 7),
            weights in proptest::array::uniform4(0.0f64..3.0),
            pw in 0.1f64..10.0,
        ) {
            let out = ModelOutput {
                cnn_tile_logits: logits[0..4].to_vec(),
                temporal_tile_logits: logits[4..8].to_vec(),
                spatial_tile_logits: logits[8..12].to_vec(),
                image_logit: logits[12],
            };
            let cfg = LossConfig { image_positive_weight: pw, head_weights: weights };
            let got = compute_losses(&out, &labels[..4], labels[4], &cfg).unwrap();
            let tile = |zs: &[f64]| zs.iter().zip(&labels[..4]).map(|(&z, &y)| naive(z, y, 1.0)).sum::<f64>() / 4.0;
            let heads = [tile(&logits[0..4]), tile(&logits[4..8]), tile(&logits[8..12]), naive(logits[12], labels[4], pw)];
            let total: f64 = heads.iter().zip(weights).map(|(h, w)| h * w).sum();
            for (a, b) in got.heads().iter().zip(heads) {
                prop_assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
            }
            prop_assert!((got.total - total).abs() < 1e-9 * total.abs().max(1.0));
        }
    }
}

//! Per-pixel flood-candidate classification.
//!
//! Two classifiers share one output type: a deterministic rule over the
//! feature stack ([`classify_rule`]) and a forward-only convolution engine for
//! externally trained early-fusion weights ([`infer`]).

mod convnet;
mod rule;

pub use convnet::{
    infer, load_weights, BoundNet, ConvLayer, ConvNetSpec, Layer, Tensor, INPUT_CHANNELS,
};
pub use rule::{classify_rule, RuleConfig};

use crate::metrics::{ConfusionCounts, Scores};
use crate::raster::Raster;
use crate::{Error, Result};

pub const DEFAULT_DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct FloodCandidateMask {
    /// Binary byte raster (1 = flood candidate, 255 = nodata).
    pub mask: Raster,
    /// Float32 probabilities in [0, 1] when produced by the network.
    pub probability: Option<Raster>,
    pub threshold: Option<f64>,
}

impl FloodCandidateMask {
    pub fn from_mask(mask: Raster) -> Self {
        Self {
            mask,
            probability: None,
            threshold: None,
        }
    }

    pub fn positives(&self) -> usize {
        self.mask.count_value(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision/recall/F1 of `probability >= t` against `truth` for every `t`.
pub fn decision_threshold_sweep(
    probability: &Raster,
    truth: &Raster,
    thresholds: &[f64],
) -> Result<Vec<SweepRow>> {
    probability.check_congruent(truth, "probability vs truth")?;
    let p = probability.expect_f32("probability")?;
    let t = truth.expect_u8("truth")?;
    let valid: Vec<usize> = (0..p.len())
        .filter(|&i| !probability.is_nodata(i) && !truth.is_nodata(i))
        .collect();
    if let Some(&i) = valid.iter().find(|&&i| t[i] > 1) {
        return Err(Error::InvalidRaster(format!(
            "truth pixel {i} is {} (expected 0/1)",
            t[i]
        )));
    }
    Ok(thresholds
        .iter()
        .map(|&threshold| {
            let mut c = ConfusionCounts::default();
            for &i in &valid {
                c.add(p[i] as f64 >= threshold, t[i] == 1);
            }
            let s = Scores::from_counts(&c);
            SweepRow {
                threshold,
                counts: c,
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
            }
        })
        .collect())
}

//! Coordinate and representation losses and their stage composition.

use crate::error::{Result, SfrError};
use crate::types::{DepthOffsetMap, Grid, Heatmap, JointSetUvd};

/// Scale factors on the two representation losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_h: f64,
    pub lambda_d: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_h: 1.0,
            lambda_d: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_h: f64, lambda_d: f64) -> Result<Self> {
        if !(lambda_h >= 0.0 && lambda_d >= 0.0) {
            return Err(SfrError::InvalidInput(format!(
                "loss weights must be nonnegative, got ({lambda_h}, {lambda_d})"
            )));
        }
        Ok(Self { lambda_h, lambda_d })
    }
}

/// The four loss terms of one stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub uv: f64,
    pub d: f64,
    pub heatmap: f64,
    pub depthmap: f64,
}

/// `Σ_j ‖pred_uv - gt_uv‖²`
pub fn loss_uv(pred: &JointSetUvd, gt: &JointSetUvd) -> Result<f64> {
    gt.check_same_len(pred)?;
    Ok(pred
        .iter()
        .zip(gt.iter())
        .map(|(p, g)| (p.u - g.u).powi(2) + (p.v - g.v).powi(2))
        .sum())
}

/// `Σ_j (pred_d - gt_d)²`
pub fn loss_d(pred: &JointSetUvd, gt: &JointSetUvd) -> Result<f64> {
    gt.check_same_len(pred)?;
    Ok(pred
        .iter()
        .zip(gt.iter())
        .map(|(p, g)| (p.d - g.d).powi(2))
        .sum())
}

fn grid_sq_dist<'a>(
    pred: impl ExactSizeIterator<Item = &'a Grid>,
    gt: impl ExactSizeIterator<Item = &'a Grid>,
) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(SfrError::JointCountMismatch {
            expected: gt.len(),
            got: pred.len(),
        });
    }
    let mut total = 0.0;
    for (p, g) in pred.zip(gt) {
        g.check_same_shape(p)?;
        total += p
            .as_slice()
            .iter()
            .zip(g.as_slice())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
    }
    Ok(total)
}

/// Sum over joints and pixels of squared heatmap differences.
pub fn loss_heatmap(pred: &[Heatmap], gt: &[Heatmap]) -> Result<f64> {
    grid_sq_dist(pred.iter().map(Heatmap::grid), gt.iter().map(Heatmap::grid))
}

/// Sum over joints and pixels of squared offset-map differences.
pub fn loss_depthmap(pred: &[DepthOffsetMap], gt: &[DepthOffsetMap]) -> Result<f64> {
    grid_sq_dist(
        pred.iter().map(DepthOffsetMap::grid),
        gt.iter().map(DepthOffsetMap::grid),
    )
}

/// `L_uv + L_d + λ_H·L_H + λ_D·L_D`
pub fn stage_loss(parts: &LossParts, w: &LossWeights) -> f64 {
    parts.uv + parts.d + w.lambda_h * parts.heatmap + w.lambda_d * parts.depthmap
}

/// Sum of per-stage losses.
pub fn total_loss(stages: &[f64]) -> Result<f64> {
    if stages.is_empty() {
        return Err(SfrError::NoStages);
    }
    Ok(stages.iter().sum())
}

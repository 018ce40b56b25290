//! Fits heatmaps and offset maps to a target joint set by gradient descent
//! through the decoders.
//!
//! Each joint owns a free score grid, mapped onto the probability simplex by
//! a softmax, and a free offset grid, masked to on-hand pixels. Three
//! objectives select which losses supervise the fit:
//!
//! * [`FitMode::Full`]: coordinate losses through both decoders plus the
//!   weighted representation losses against the encoder targets.
//! * [`FitMode::CoordinateUnsupervised`]: representation losses only. The
//!   decoders sit outside the objective and are applied post hoc.
//! * [`FitMode::RepresentationUnsupervised`]: coordinate losses only,
//!   differentiated through both decoders.
//!
//! Offsets take plain gradient steps of size `step_size`. Scores take the
//! mirror-descent step on the simplex, `s ← s - η_s (∂L/∂h - ⟨h, ∂L/∂h⟩)`
//! with `η_s = step_size · score_step_scale`, which is the softmax-score
//! gradient rescaled per pixel by `1/h`. Without that rescaling, mass on
//! pixels far from the target decays too slowly for a fixed step to reach
//! the coordinate gate.
//!
//! Offsets are stable for `step_size < 1 / (1 + λ_D)`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::depth::{build_mask, decode_depth_raw, encode_depth_map, on_hand_mass, DENOMINATOR_EPS};
use crate::error::{Result, SfrError};
use crate::losses::{LossParts, LossWeights};
use crate::plane::{com, encode_heatmap, ComKernel, GaussKernel};
use crate::types::{DepthFrame, DepthOffsetMap, Grid, Heatmap, JointSetUvd, JointUvd, MaskMatrix};

/// Loss blow-up factor over the initial loss that counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitMode {
    Full,
    CoordinateUnsupervised,
    RepresentationUnsupervised,
}

impl FitMode {
    pub const ALL: [FitMode; 3] = [
        FitMode::Full,
        FitMode::CoordinateUnsupervised,
        FitMode::RepresentationUnsupervised,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FitMode::Full => "full",
            FitMode::CoordinateUnsupervised => "coordinate_unsupervised",
            FitMode::RepresentationUnsupervised => "representation_unsupervised",
        }
    }

    fn uses_coordinates(&self) -> bool {
        !matches!(self, FitMode::CoordinateUnsupervised)
    }

    fn uses_representations(&self) -> bool {
        !matches!(self, FitMode::RepresentationUnsupervised)
    }

    /// The optimized objective for this mode.
    pub fn objective(&self, parts: &LossParts, w: &LossWeights) -> f64 {
        let mut total = 0.0;
        if self.uses_coordinates() {
            total += parts.uv + parts.d;
        }
        if self.uses_representations() {
            total += w.lambda_h * parts.heatmap + w.lambda_d * parts.depthmap;
        }
        total
    }
}

impl fmt::Display for FitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitMode {
    type Err = SfrError;

    fn from_str(s: &str) -> Result<Self> {
        FitMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                SfrError::InvalidInput(format!(
                    "unknown fit mode '{s}' (expected full, coordinate_unsupervised or representation_unsupervised)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub mode: FitMode,
    /// Gradient step on offsets. Zero freezes the fit.
    pub step_size: f64,
    /// Multiplier turning `step_size` into the score step.
    pub score_step_scale: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Standard deviation of the initial score noise.
    pub init_noise: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            mode: FitMode::Full,
            step_size: 0.4,
            score_step_scale: 10.0,
            max_iters: 2000,
            seed: 0,
            init_noise: 1e-2,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(SfrError::InvalidInput(format!(
                "step size must be finite and nonnegative, got {}",
                self.step_size
            )));
        }
        if !(self.score_step_scale >= 0.0 && self.score_step_scale.is_finite()) {
            return Err(SfrError::InvalidInput(
                "score step scale must be nonnegative".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(SfrError::InvalidInput(
                "max_iters must be at least 1".into(),
            ));
        }
        if !(self.init_noise >= 0.0) {
            return Err(SfrError::InvalidInput(
                "init noise must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Free variables of the fit: per-joint score and offset grids.
#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub scores: Vec<Grid>,
    pub offsets: Vec<Grid>,
}

/// Losses, objective and gradients at one state.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub parts: LossParts,
    pub objective: f64,
    pub heatmaps: Vec<Heatmap>,
    pub decoded: Vec<JointUvd>,
    /// `∂objective/∂h` per joint.
    pub grad_heatmaps: Vec<Grid>,
    /// `∂objective/∂scores` per joint (through the softmax).
    pub grad_scores: Vec<Grid>,
    /// `∂objective/∂offsets` per joint.
    pub grad_offsets: Vec<Grid>,
}

/// Target representations and scene data for one frame.
#[derive(Debug, Clone)]
pub struct FitProblem {
    target: JointSetUvd,
    img: DepthFrame,
    mask: MaskMatrix,
    com_kernel: ComKernel,
    target_heatmaps: Vec<Heatmap>,
    target_depthmaps: Vec<DepthOffsetMap>,
}

impl FitProblem {
    pub fn new(target: &JointSetUvd, img: &DepthFrame, kernel: &GaussKernel) -> Result<Self> {
        let n = img.resolution();
        let mask = build_mask(img);
        let mut target_heatmaps = Vec::with_capacity(target.len());
        let mut target_depthmaps = Vec::with_capacity(target.len());
        for joint in target.iter() {
            let h = encode_heatmap(joint.u, joint.v, n, kernel)?;
            let mass = on_hand_mass(&h, &mask);
            if !(mass > DENOMINATOR_EPS) {
                return Err(SfrError::UnsupportedJoint { mass });
            }
            target_depthmaps.push(encode_depth_map(joint.d, &h, img, &mask)?);
            target_heatmaps.push(h);
        }
        Ok(Self {
            target: target.clone(),
            img: img.clone(),
            mask,
            com_kernel: ComKernel::new(n),
            target_heatmaps,
            target_depthmaps,
        })
    }

    pub fn resolution(&self) -> usize {
        self.img.resolution()
    }

    pub fn target(&self) -> &JointSetUvd {
        &self.target
    }

    pub fn mask(&self) -> &MaskMatrix {
        &self.mask
    }

    pub fn target_heatmaps(&self) -> &[Heatmap] {
        &self.target_heatmaps
    }

    pub fn target_depthmaps(&self) -> &[DepthOffsetMap] {
        &self.target_depthmaps
    }

    /// Seeded initial state: small Gaussian score noise, zero offsets.
    pub fn initial_state(&self, seed: u64, noise: f64) -> FitState {
        let n = self.resolution();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise.max(0.0)).expect("finite std");
        let scores = (0..self.target.len())
            .map(|_| {
                Grid::from_fn(n, |_, _| {
                    if noise > 0.0 {
                        normal.sample(&mut rng)
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        let offsets = (0..self.target.len()).map(|_| Grid::zeros(n)).collect();
        FitState { scores, offsets }
    }

    /// Masked predicted offset map for one joint.
    pub fn predicted_depthmap(&self, offsets: &Grid) -> DepthOffsetMap {
        let n = offsets.n();
        DepthOffsetMap::new(Grid::from_fn(n, |i, k| {
            if self.mask.get(i, k) {
                offsets.get(i, k)
            } else {
                0.0
            }
        }))
    }

    /// Losses and `mode`-objective gradients at `state`.
    pub fn evaluate(&self, state: &FitState, mode: FitMode, w: &LossWeights) -> Result<Evaluation> {
        let n = self.resolution();
        let img = self.img.grid().as_slice();
        let mask = self.mask.as_slice();
        let cu = self.com_kernel.u().as_slice();
        let cv = self.com_kernel.v().as_slice();

        let mut parts = LossParts::default();
        let mut heatmaps = Vec::with_capacity(self.target.len());
        let mut decoded = Vec::with_capacity(self.target.len());
        let mut grad_heatmaps = Vec::with_capacity(self.target.len());
        let mut grad_scores = Vec::with_capacity(self.target.len());
        let mut grad_offsets = Vec::with_capacity(self.target.len());

        for (j, joint) in self.target.iter().enumerate() {
            let h = softmax(&state.scores[j]);
            let hs = h.as_slice();
            let pred_d = self.predicted_depthmap(&state.offsets[j]);
            let ds = pred_d.as_slice();

            let (pu, pv) = com(hs, &self.com_kernel);
            let pd = decode_depth_raw(ds, hs, img, mask)?;
            let den = on_hand_mass(&h, &self.mask);

            let (eu, ev, ed) = (pu - joint.u, pv - joint.v, pd - joint.d);
            parts.uv += eu * eu + ev * ev;
            parts.d += ed * ed;
            let th = self.target_heatmaps[j].as_slice();
            let td = self.target_depthmaps[j].as_slice();
            parts.heatmap += hs.iter().zip(th).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            parts.depthmap += ds.iter().zip(td).map(|(a, b)| (a - b).powi(2)).sum::<f64>();

            let mut gh = vec![0.0; n * n];
            let mut go = vec![0.0; n * n];
            if mode.uses_coordinates() {
                for idx in 0..n * n {
                    gh[idx] += 2.0 * eu * cu[idx] + 2.0 * ev * cv[idx];
                    if mask[idx] {
                        gh[idx] += 2.0 * ed * ((img[idx] + ds[idx]) - pd) / den;
                        go[idx] += 2.0 * ed * hs[idx] / den;
                    }
                }
            }
            if mode.uses_representations() {
                for idx in 0..n * n {
                    gh[idx] += w.lambda_h * 2.0 * (hs[idx] - th[idx]);
                    if mask[idx] {
                        go[idx] += w.lambda_d * 2.0 * (ds[idx] - td[idx]);
                    }
                }
            }
            let mean_g: f64 = hs.iter().zip(&gh).map(|(a, b)| a * b).sum();
            let gs: Vec<f64> = hs.iter().zip(&gh).map(|(a, g)| a * (g - mean_g)).collect();

            decoded.push(JointUvd::new(pu, pv, pd));
            heatmaps.push(h);
            grad_heatmaps.push(Grid::from_vec(n, gh)?);
            grad_scores.push(Grid::from_vec(n, gs)?);
            grad_offsets.push(Grid::from_vec(n, go)?);
        }

        Ok(Evaluation {
            objective: mode.objective(&parts, w),
            parts,
            heatmaps,
            decoded,
            grad_heatmaps,
            grad_scores,
            grad_offsets,
        })
    }
}

/// Numerically stable softmax of a score grid.
pub fn softmax(scores: &Grid) -> Heatmap {
    let max = scores
        .as_slice()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.as_slice().iter().map(|s| (s - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    Heatmap::from_grid_unchecked(Grid::from_vec(scores.n(), out).expect("same shape"))
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub parts: LossParts,
    /// The objective optimized by the run's mode.
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub heatmaps: Vec<Heatmap>,
    pub depthmaps: Vec<DepthOffsetMap>,
    /// Decoded coordinates of the final representations.
    pub decoded: JointSetUvd,
    /// `max_iters + 1` rows: the state before each step, then the final state.
    pub trace: Vec<TraceRow>,
}

impl FitResult {
    /// Largest absolute per-coordinate error against `target`.
    pub fn max_coordinate_error(&self, target: &JointSetUvd) -> f64 {
        self.decoded
            .iter()
            .zip(target.iter())
            .map(|(p, t)| {
                (p.u - t.u)
                    .abs()
                    .max((p.v - t.v).abs())
                    .max((p.d - t.d).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Fits spatial-form representations to `target` on frame `img`.
pub fn fit_representation(
    target: &JointSetUvd,
    img: &DepthFrame,
    kernel: &GaussKernel,
    cfg: &FitConfig,
    w: &LossWeights,
) -> Result<FitResult> {
    cfg.validate()?;
    let problem = FitProblem::new(target, img, kernel)?;
    let mut state = problem.initial_state(cfg.seed, cfg.init_noise);
    let score_step = cfg.step_size * cfg.score_step_scale;
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    let mut initial = None;

    for iteration in 0..=cfg.max_iters {
        let eval = problem.evaluate(&state, cfg.mode, w)?;
        let initial_loss = *initial.get_or_insert(eval.objective);
        if !eval.objective.is_finite()
            || eval.objective > initial_loss.max(f64::MIN_POSITIVE) * DIVERGENCE_FACTOR
        {
            return Err(SfrError::Divergence {
                iteration,
                loss: eval.objective,
                initial: initial_loss,
            });
        }
        trace.push(TraceRow {
            iteration,
            parts: eval.parts,
            total: eval.objective,
        });

        if iteration == cfg.max_iters {
            let depthmaps = state
                .offsets
                .iter()
                .map(|o| problem.predicted_depthmap(o))
                .collect();
            return Ok(FitResult {
                heatmaps: eval.heatmaps,
                depthmaps,
                decoded: JointSetUvd::new(eval.decoded)?,
                trace,
            });
        }

        for j in 0..state.scores.len() {
            let hs = eval.heatmaps[j].as_slice();
            let gh = eval.grad_heatmaps[j].as_slice();
            let mean_g: f64 = hs.iter().zip(gh).map(|(a, b)| a * b).sum();
            for (s, g) in state.scores[j].as_mut_slice().iter_mut().zip(gh) {
                *s -= score_step * (g - mean_g);
            }
            for (o, g) in state.offsets[j]
                .as_mut_slice()
                .iter_mut()
                .zip(eval.grad_offsets[j].as_slice())
            {
                *o -= cfg.step_size * g;
            }
        }
    }
    unreachable!("loop returns at the final iteration")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> (JointSetUvd, DepthFrame) {
        let n = 16;
        let img = Grid::from_fn(n, |i, k| {
            let (di, dk) = (i as f64 - 7.5, k as f64 - 8.0);
            if di * di + dk * dk <= 30.0 {
                0.5 + 0.01 * ((i + k) % 3) as f64
            } else {
                0.0
            }
        });
        let target = JointSetUvd::new(vec![JointUvd::new(0.47, 0.52, 0.53)]).unwrap();
        (target, DepthFrame::new(img).unwrap())
    }

    #[test]
    fn mode_parsing() {
        for m in FitMode::ALL {
            assert_eq!(m.as_str().parse::<FitMode>().unwrap(), m);
        }
        assert!("supervised".parse::<FitMode>().is_err());
    }

    #[test]
    fn softmax_is_on_simplex() {
        let s = Grid::from_fn(4, |i, k| (i * 7 + k) as f64 * 0.3 - 2.0);
        let h = softmax(&s);
        assert!(h.as_slice().iter().all(|&x| x > 0.0));
        assert!((h.grid().sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_fit_converges() {
        let (target, img) = scene();
        let g = GaussKernel::with_default_sigma(7).unwrap();
        let res = fit_representation(
            &target,
            &img,
            &g,
            &FitConfig::default(),
            &LossWeights::default(),
        )
        .unwrap();
        assert_eq!(res.trace.len(), 2001);
        assert!(res.max_coordinate_error(&target) < 1e-3);
        assert!(res.trace.last().unwrap().total < res.trace[0].total);
    }

    #[test]
    fn zero_step_freezes_trace() {
        let (target, img) = scene();
        let g = GaussKernel::with_default_sigma(7).unwrap();
        let cfg = FitConfig {
            step_size: 0.0,
            max_iters: 20,
            ..FitConfig::default()
        };
        let res = fit_representation(&target, &img, &g, &cfg, &LossWeights::default()).unwrap();
        assert!(res.trace.iter().all(|r| r.total == res.trace[0].total));
    }

    #[test]
    fn huge_step_diverges() {
        let (target, img) = scene();
        let g = GaussKernel::with_default_sigma(7).unwrap();
        let cfg = FitConfig {
            step_size: 50.0,
            score_step_scale: 0.0,
            max_iters: 200,
            ..FitConfig::default()
        };
        let err = fit_representation(&target, &img, &g, &cfg, &LossWeights::default()).unwrap_err();
        assert!(matches!(err, SfrError::Divergence { .. }));
    }

    #[test]
    fn undecodable_target_is_rejected() {
        let mut grid = Grid::zeros(16);
        grid.set(15, 15, 0.5);
        let img = DepthFrame::new(grid).unwrap();
        let g = GaussKernel::with_default_sigma(7).unwrap();
        let far = JointSetUvd::new(vec![JointUvd::new(0.3, 0.3, 0.5)]).unwrap();
        let err = fit_representation(
            &far,
            &img,
            &g,
            &FitConfig::default(),
            &LossWeights::default(),
        )
        .unwrap_err();
        assert!(matches!(err, SfrError::UnsupportedJoint { .. }));
    }

    #[test]
    fn config_validation() {
        let bad = FitConfig {
            max_iters: 0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FitConfig {
            step_size: -0.1,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

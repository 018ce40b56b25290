//! Central finite-difference checks of the decoder Jacobians and of the
//! stage-loss gradient used by the fit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::depth::{build_mask, decode_depth_jacobian, decode_depth_raw};
use crate::error::{Result, SfrError};
use crate::fit::{FitMode, FitProblem, FitState};
use crate::losses::LossWeights;
use crate::plane::{com, decode_plane_jacobian, ComKernel, GaussKernel};
use crate::types::{DepthFrame, DepthOffsetMap, Grid, Heatmap, JointSetUvd, JointUvd};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Magnitude below which errors are measured absolutely.
pub const REL_FLOOR: f64 = 1e-3;
/// Pass threshold on the maximum relative error.
pub const PASS_THRESHOLD: f64 = 1e-4;

/// `|a - b| / max(|a|, |b|, REL_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central difference of `f` with respect to `x[idx]`.
pub fn central_difference(
    x: &mut [f64],
    idx: usize,
    step: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let orig = x[idx];
    x[idx] = orig + step;
    let plus = f(x);
    x[idx] = orig - step;
    let minus = f(x);
    x[idx] = orig;
    (plus - minus) / (2.0 * step)
}

/// One random gradient-check instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub frame: DepthFrame,
    pub joints: JointSetUvd,
    pub heatmaps: Vec<Heatmap>,
    pub offsets: Vec<DepthOffsetMap>,
}

/// Random `n`×`n` instance with a mostly on-hand frame and interior joints.
pub fn random_instance(rng: &mut impl Rng, n: usize, joints: usize) -> Result<Instance> {
    let frame = DepthFrame::new(Grid::from_fn(n, |_, _| {
        if rng.random_bool(0.8) {
            rng.random_range(0.2..0.8)
        } else {
            0.0
        }
    }))?;
    let (lo, hi) = (1.5 / n as f64, 1.0 - 1.5 / n as f64);
    let set = (0..joints)
        .map(|_| {
            JointUvd::new(
                rng.random_range(lo..hi),
                rng.random_range(lo..hi),
                rng.random_range(0.2..0.8),
            )
        })
        .collect();
    let mut heatmaps = Vec::with_capacity(joints);
    let mut offsets = Vec::with_capacity(joints);
    for _ in 0..joints {
        let raw: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        heatmaps.push(Heatmap::from_vec(
            n,
            raw.into_iter().map(|x| x / total).collect(),
        )?);
        offsets.push(DepthOffsetMap::new(Grid::from_fn(n, |_, _| {
            rng.random_range(-0.2..0.2)
        })));
    }
    Ok(Instance {
        frame,
        joints: JointSetUvd::new(set)?,
        heatmaps,
        offsets,
    })
}

/// Maximum relative error of the plane Jacobian over every heatmap entry.
pub fn check_plane(inst: &Instance) -> Result<f64> {
    let n = inst.frame.resolution();
    let c = ComKernel::new(n);
    let mut worst: f64 = 0.0;
    for h in &inst.heatmaps {
        let jac = decode_plane_jacobian(h, &c)?;
        let mut x = h.as_slice().to_vec();
        for idx in 0..x.len() {
            let du = central_difference(&mut x, idx, FD_STEP, |x| com(x, &c).0);
            let dv = central_difference(&mut x, idx, FD_STEP, |x| com(x, &c).1);
            worst = worst
                .max(relative_error(jac.du.as_slice()[idx], du))
                .max(relative_error(jac.dv.as_slice()[idx], dv));
        }
    }
    Ok(worst)
}

/// Maximum relative error of the depth Jacobian over every offset and
/// heatmap entry.
pub fn check_depth(inst: &Instance) -> Result<f64> {
    let mask = build_mask(&inst.frame);
    let img = inst.frame.grid().as_slice();
    let m = mask.as_slice();
    let mut worst: f64 = 0.0;
    for (h, d) in inst.heatmaps.iter().zip(&inst.offsets) {
        let jac = decode_depth_jacobian(d, h, &inst.frame, &mask)?;
        let hs = h.as_slice();
        let mut dx = d.as_slice().to_vec();
        for idx in 0..dx.len() {
            let fd = central_difference(&mut dx, idx, FD_STEP, |dx| {
                decode_depth_raw(dx, hs, img, m).unwrap_or(f64::NAN)
            });
            worst = worst.max(relative_error(jac.wrt_offsets.as_slice()[idx], fd));
        }
        let ds = d.as_slice();
        let mut hx = hs.to_vec();
        for idx in 0..hx.len() {
            let fd = central_difference(&mut hx, idx, FD_STEP, |hx| {
                decode_depth_raw(ds, hx, img, m).unwrap_or(f64::NAN)
            });
            worst = worst.max(relative_error(jac.wrt_heatmap.as_slice()[idx], fd));
        }
    }
    Ok(worst)
}

/// Maximum relative error of the full-mode stage-loss gradient with respect
/// to heatmap scores and offsets.
pub fn check_stage_loss(inst: &Instance, rng: &mut impl Rng) -> Result<f64> {
    let n = inst.frame.resolution();
    let kernel = GaussKernel::with_default_sigma(3)?;
    let problem = FitProblem::new(&inst.joints, &inst.frame, &kernel)?;
    let w = LossWeights::default();
    let state = FitState {
        scores: (0..inst.joints.len())
            .map(|_| Grid::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
            .collect(),
        offsets: inst.offsets.iter().map(|o| o.grid().clone()).collect(),
    };
    let eval = problem.evaluate(&state, FitMode::Full, &w)?;
    let objective = |s: &FitState| -> f64 {
        problem
            .evaluate(s, FitMode::Full, &w)
            .map(|e| e.objective)
            .unwrap_or(f64::NAN)
    };

    let mut worst: f64 = 0.0;
    for j in 0..state.scores.len() {
        for idx in 0..n * n {
            for scores in [true, false] {
                let perturbed = |delta: f64| {
                    let mut s = state.clone();
                    let g = if scores {
                        &mut s.scores[j]
                    } else {
                        &mut s.offsets[j]
                    };
                    g.as_mut_slice()[idx] += delta;
                    objective(&s)
                };
                let fd = (perturbed(FD_STEP) - perturbed(-FD_STEP)) / (2.0 * FD_STEP);
                let analytic = if scores {
                    eval.grad_scores[j].as_slice()[idx]
                } else {
                    eval.grad_offsets[j].as_slice()[idx]
                };
                worst = worst.max(relative_error(analytic, fd));
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub seed: u64,
    pub instances: usize,
    pub resolution: usize,
    pub joints: usize,
    pub max_rel_plane: f64,
    pub max_rel_depth: f64,
    pub max_rel_stage: f64,
}

impl GradcheckReport {
    pub fn max_rel(&self) -> f64 {
        self.max_rel_plane
            .max(self.max_rel_depth)
            .max(self.max_rel_stage)
    }

    pub fn passed(&self) -> bool {
        self.max_rel() < PASS_THRESHOLD
    }
}

/// Runs all three checks over `instances` seeded random `n`×`n` instances.
pub fn run_gradcheck(
    seed: u64,
    instances: usize,
    n: usize,
    joints: usize,
) -> Result<GradcheckReport> {
    if instances == 0 {
        return Err(SfrError::InvalidInput(
            "gradcheck needs at least one instance".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradcheckReport {
        seed,
        instances,
        resolution: n,
        joints,
        max_rel_plane: 0.0,
        max_rel_depth: 0.0,
        max_rel_stage: 0.0,
    };
    let mut done = 0;
    while done < instances {
        let inst = random_instance(&mut rng, n, joints)?;
        // redraw instances whose target supports miss the hand entirely
        let stage = match check_stage_loss(&inst, &mut rng) {
            Err(SfrError::UnsupportedJoint { .. }) => continue,
            other => other?,
        };
        report.max_rel_plane = report.max_rel_plane.max(check_plane(&inst)?);
        report.max_rel_depth = report.max_rel_depth.max(check_depth(&inst)?);
        report.max_rel_stage = report.max_rel_stage.max(stage);
        done += 1;
    }
    Ok(report)
}

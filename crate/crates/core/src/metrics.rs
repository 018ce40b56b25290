//! Mean 3D joint error and the frames-under-threshold curve, plus the UVD ↔
//! XYZ conversion needed to express errors in millimeters.

use crate::error::{Result, SfrError};
use crate::types::{CameraIntrinsics, CropGeometry, JointSetUvd, JointUvd, NormalizationCube};

pub type Point3 = [f64; 3];

/// Camera and crop parameters that place a normalized frame in camera space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGeometry {
    pub cube: NormalizationCube,
    pub intrinsics: CameraIntrinsics,
    pub crop: CropGeometry,
}

/// Converts normalized UVD joints back to camera-space millimeters.
pub fn uvd_to_xyz(
    joints: &JointSetUvd,
    cube: &NormalizationCube,
    intr: &CameraIntrinsics,
    crop: &CropGeometry,
) -> Result<Vec<Point3>> {
    intr.validate()?;
    cube.validate()?;
    Ok(joints
        .iter()
        .map(|p| {
            let z = cube.denormalize_depth(p.d);
            let (px, py) = crop.to_sensor(p.u, p.v);
            intr.back_project(px, py, z)
        })
        .collect())
}

/// Inverse of [`uvd_to_xyz`]. The result is not range-checked.
pub fn xyz_to_uvd(
    points: &[Point3],
    cube: &NormalizationCube,
    intr: &CameraIntrinsics,
    crop: &CropGeometry,
) -> Result<Vec<JointUvd>> {
    intr.validate()?;
    cube.validate()?;
    Ok(points
        .iter()
        .map(|p| {
            let (px, py) = intr.project(*p);
            let (u, v) = crop.to_normalized(px, py);
            JointUvd::new(u, v, cube.normalize_depth(p[2]))
        })
        .collect())
}

fn dist(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn check_aligned(preds: &[Vec<Point3>], gts: &[Vec<Point3>]) -> Result<usize> {
    if preds.len() != gts.len() {
        return Err(SfrError::FrameCountMismatch {
            expected: gts.len(),
            got: preds.len(),
        });
    }
    if gts.is_empty() {
        return Err(SfrError::InvalidInput("no frames to evaluate".into()));
    }
    let joints = gts[0].len();
    for (p, g) in preds.iter().zip(gts) {
        for got in [p.len(), g.len()] {
            if got != joints {
                return Err(SfrError::JointCountMismatch {
                    expected: joints,
                    got,
                });
            }
        }
    }
    Ok(joints)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanError {
    /// Mean Euclidean error per joint over all frames, in millimeters.
    pub per_joint: Vec<f64>,
    /// Mean of `per_joint`.
    pub overall: f64,
}

pub fn mean_3d_error(preds: &[Vec<Point3>], gts: &[Vec<Point3>]) -> Result<MeanError> {
    let joints = check_aligned(preds, gts)?;
    let mut per_joint = vec![0.0; joints];
    for (p, g) in preds.iter().zip(gts) {
        for (acc, (a, b)) in per_joint.iter_mut().zip(p.iter().zip(g)) {
            *acc += dist(a, b);
        }
    }
    let frames = gts.len() as f64;
    per_joint.iter_mut().for_each(|e| *e /= frames);
    let overall = per_joint.iter().sum::<f64>() / joints.max(1) as f64;
    Ok(MeanError { per_joint, overall })
}

/// Fraction of frames whose worst joint error is strictly below each
/// threshold (millimeters, ascending).
pub fn frames_under_threshold(
    preds: &[Vec<Point3>],
    gts: &[Vec<Point3>],
    thresholds: &[f64],
) -> Result<Vec<f64>> {
    check_aligned(preds, gts)?;
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(SfrError::InvalidInput(
            "thresholds must be sorted ascending".into(),
        ));
    }
    let mut worst: Vec<f64> = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| p.iter().zip(g).map(|(a, b)| dist(a, b)).fold(0.0, f64::max))
        .collect();
    worst.sort_by(f64::total_cmp);
    let frames = worst.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| worst.partition_point(|&e| e < t) as f64 / frames)
        .collect())
}

/// `0, 1, …, 80` millimeters.
pub fn default_thresholds() -> Vec<f64> {
    (0..=80).map(f64::from).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry() -> FrameGeometry {
        FrameGeometry {
            cube: NormalizationCube::new([10.0, -20.0, 400.0], 250.0).unwrap(),
            intrinsics: CameraIntrinsics::new(475.0, 475.0, 160.0, 120.0).unwrap(),
            crop: CropGeometry {
                x0: 40.0,
                y0: 10.0,
                width: 300.0,
                height: 300.0,
            },
        }
    }

    #[test]
    fn crop_center_at_mid_depth_is_cube_center() {
        let g = geometry();
        let intr = g.intrinsics;
        let (pcx, pcy) = intr.project(g.cube.center);
        let half = 0.5 * g.cube.edge * intr.fx / g.cube.center[2];
        let crop = CropGeometry {
            x0: pcx - half,
            y0: pcy - half,
            width: 2.0 * half,
            height: 2.0 * half,
        };
        let j = JointSetUvd::new(vec![JointUvd::new(0.5, 0.5, 0.5)]).unwrap();
        let xyz = uvd_to_xyz(&j, &g.cube, &intr, &crop).unwrap();
        for (got, want) in xyz[0].iter().zip(&g.cube.center) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn xyz_roundtrip() {
        let g = geometry();
        let j = JointSetUvd::new(vec![
            JointUvd::new(0.31, 0.77, 0.42),
            JointUvd::new(0.9, 0.1, 0.6),
        ])
        .unwrap();
        let xyz = uvd_to_xyz(&j, &g.cube, &g.intrinsics, &g.crop).unwrap();
        let back = xyz_to_uvd(&xyz, &g.cube, &g.intrinsics, &g.crop).unwrap();
        let xyz2 = uvd_to_xyz(
            &JointSetUvd::new(back).unwrap(),
            &g.cube,
            &g.intrinsics,
            &g.crop,
        )
        .unwrap();
        for (a, b) in xyz.iter().zip(&xyz2) {
            assert!(dist(a, b) < 1e-6);
        }
    }

    #[test]
    fn cube_shift_shifts_z() {
        let g = geometry();
        let j = JointSetUvd::new(vec![
            JointUvd::new(0.2, 0.3, 0.1),
            JointUvd::new(0.6, 0.5, 0.9),
        ])
        .unwrap();
        let mut shifted = g.cube;
        shifted.center[2] += 10.0;
        let a = uvd_to_xyz(&j, &g.cube, &g.intrinsics, &g.crop).unwrap();
        let b = uvd_to_xyz(&j, &shifted, &g.intrinsics, &g.crop).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((q[2] - p[2] - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        let g = geometry();
        let bad = CameraIntrinsics {
            fx: 0.0,
            ..g.intrinsics
        };
        let j = JointSetUvd::new(vec![JointUvd::new(0.5, 0.5, 0.5)]).unwrap();
        assert!(matches!(
            uvd_to_xyz(&j, &g.cube, &bad, &g.crop),
            Err(SfrError::InvalidIntrinsics { .. })
        ));
    }

    #[test]
    fn mean_error_examples() {
        let gt = vec![vec![[0.0, 0.0, 400.0]]];
        assert_eq!(mean_3d_error(&gt, &gt).unwrap().overall, 0.0);
        let pred = vec![vec![[3.0, 0.0, 400.0]]];
        let e = mean_3d_error(&pred, &gt).unwrap();
        assert_eq!(e.overall, 3.0);
        assert_eq!(e.per_joint, vec![3.0]);
        assert!(matches!(
            mean_3d_error(&[], &gt),
            Err(SfrError::FrameCountMismatch { .. })
        ));
        let two = vec![vec![[0.0; 3], [0.0; 3]]];
        assert!(matches!(
            mean_3d_error(&two, &gt),
            Err(SfrError::JointCountMismatch {
                expected: 1,
                got: 2
            })
        ));
    }

    #[test]
    fn threshold_is_strict() {
        let gt = vec![vec![[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]];
        let pred = vec![vec![[10.0, 0.0, 0.0], [1.0, 0.0, 0.0]]];
        let c = frames_under_threshold(&pred, &gt, &[10.0, 10.001]).unwrap();
        assert_eq!(c, vec![0.0, 1.0]);
        let c = frames_under_threshold(&gt, &gt, &[0.5, 1.0]).unwrap();
        assert_eq!(c, vec![1.0, 1.0]);
        assert!(frames_under_threshold(&gt, &gt, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn default_threshold_axis() {
        let t = default_thresholds();
        assert_eq!(t.len(), 81);
        assert_eq!((t[0], t[80]), (0.0, 80.0));
    }
}

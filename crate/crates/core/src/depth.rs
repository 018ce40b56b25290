//! Depth coordinate ↔ local offset depth map.
//!
//! The offset map stores `joint depth - surface depth` on pixels that are both
//! on the hand and inside the joint's heatmap support. The decoder recovers
//! the joint depth as the heatmap-weighted mean of `surface + offset` over
//! on-hand pixels. All sums run in row-major order.

use crate::error::{Result, SfrError};
use crate::types::{DepthFrame, DepthOffsetMap, Grid, Heatmap, MaskMatrix};

/// Smallest admissible on-hand heatmap mass in the depth decoder.
pub const DENOMINATOR_EPS: f64 = 1e-12;

/// On-hand mask: a pixel is on the hand iff its depth is positive.
pub fn build_mask(img: &DepthFrame) -> MaskMatrix {
    let n = img.resolution();
    let on_hand = img.grid().as_slice().iter().map(|&d| d > 0.0).collect();
    MaskMatrix::from_vec(n, on_hand).expect("frame grid is n×n")
}

fn check_shapes(n: usize, h: &Heatmap, img: &DepthFrame, m: &MaskMatrix) -> Result<()> {
    for got in [h.resolution(), img.resolution(), m.resolution()] {
        if got != n {
            return Err(SfrError::ShapeMismatch { expected: n, got });
        }
    }
    Ok(())
}

/// Local offset depth map for a joint at normalized depth `p_d`.
pub fn encode_depth_map(
    p_d: f64,
    h: &Heatmap,
    img: &DepthFrame,
    m: &MaskMatrix,
) -> Result<DepthOffsetMap> {
    let n = h.resolution();
    check_shapes(n, h, img, m)?;
    let grid = Grid::from_fn(n, |i, k| {
        if h.get(i, k) > 0.0 && m.get(i, k) {
            p_d - img.get(i, k)
        } else {
            0.0
        }
    });
    Ok(DepthOffsetMap::new(grid))
}

/// Heatmap-weighted on-hand mass `Σ m·h`.
pub fn on_hand_mass(h: &Heatmap, m: &MaskMatrix) -> f64 {
    h.as_slice()
        .iter()
        .zip(m.as_slice())
        .filter(|(_, &on)| on)
        .map(|(&w, _)| w)
        .sum()
}

/// Heatmap-weighted depth decoder `Σ m·h·(img + d) / Σ m·h`.
pub fn decode_depth(
    d: &DepthOffsetMap,
    h: &Heatmap,
    img: &DepthFrame,
    m: &MaskMatrix,
) -> Result<f64> {
    let n = d.resolution();
    check_shapes(n, h, img, m)?;
    decode_depth_raw(
        d.as_slice(),
        h.as_slice(),
        img.grid().as_slice(),
        m.as_slice(),
    )
}

pub(crate) fn decode_depth_raw(d: &[f64], h: &[f64], img: &[f64], m: &[bool]) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for idx in 0..h.len() {
        if m[idx] {
            num += h[idx] * (img[idx] + d[idx]);
            den += h[idx];
        }
    }
    if !(den > DENOMINATOR_EPS) {
        return Err(SfrError::UnsupportedJoint { mass: den });
    }
    Ok(num / den)
}

/// Decoded depth together with its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthJacobian {
    pub value: f64,
    /// `∂out/∂d(i,k) = m·h / Σ m·h`
    pub wrt_offsets: Grid,
    /// `∂out/∂h(i,k) = m·[(img + d) - out] / Σ m·h`
    pub wrt_heatmap: Grid,
}

pub fn decode_depth_jacobian(
    d: &DepthOffsetMap,
    h: &Heatmap,
    img: &DepthFrame,
    m: &MaskMatrix,
) -> Result<DepthJacobian> {
    let n = d.resolution();
    check_shapes(n, h, img, m)?;
    let value = decode_depth(d, h, img, m)?;
    let den = on_hand_mass(h, m);
    let wrt_offsets = Grid::from_fn(n, |i, k| m.weight(i, k) * h.get(i, k) / den);
    let wrt_heatmap = Grid::from_fn(n, |i, k| {
        m.weight(i, k) * ((img.get(i, k) + d.get(i, k)) - value) / den
    });
    Ok(DepthJacobian {
        value,
        wrt_offsets,
        wrt_heatmap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(n: usize, values: Vec<f64>) -> DepthFrame {
        DepthFrame::from_vec(n, values).unwrap()
    }

    #[test]
    fn mask_examples() {
        let m = build_mask(&frame(2, vec![0.3; 4]));
        assert_eq!(m.count(), 4);
        let m = build_mask(&frame(2, vec![0.0; 4]));
        assert_eq!(m.count(), 0);
        let m = build_mask(&frame(2, vec![0.0, 0.0, 0.7, 0.0]));
        assert_eq!(m.as_slice(), &[false, false, true, false]);
        assert!(m.validate(&frame(2, vec![0.0, 0.0, 0.7, 0.0])).is_ok());
    }

    #[test]
    fn flat_surface_at_joint_depth_gives_zero_offsets() {
        let img = frame(4, vec![0.6; 16]);
        let m = build_mask(&img);
        let h = Heatmap::uniform(4);
        let d = encode_depth_map(0.6, &h, &img, &m).unwrap();
        assert!(d.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn background_frame_gives_zero_offsets() {
        let img = frame(4, vec![0.0; 16]);
        let m = build_mask(&img);
        let d = encode_depth_map(0.8, &Heatmap::uniform(4), &img, &m).unwrap();
        assert!(d.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn four_pixel_support_example() {
        let img = frame(4, vec![0.5; 16]);
        let m = build_mask(&img);
        let mut hv = vec![0.0; 16];
        for idx in [5, 6, 9, 10] {
            hv[idx] = 0.25;
        }
        let h = Heatmap::from_vec(4, hv).unwrap();
        let d = encode_depth_map(0.6, &h, &img, &m).unwrap();
        for idx in 0..16 {
            let expected = if [5, 6, 9, 10].contains(&idx) {
                0.1
            } else {
                0.0
            };
            assert!((d.as_slice()[idx] - expected).abs() < 1e-15, "idx {idx}");
        }
        assert!(d.validate(&h, &m).is_ok());
        assert!((decode_depth(&d, &h, &img, &m).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn off_hand_support_is_unsupported() {
        let mut v = vec![0.0; 16];
        v[0] = 0.5;
        let img = frame(4, v);
        let m = build_mask(&img);
        let h = Heatmap::delta(4, 2, 2).unwrap();
        let d = DepthOffsetMap::zeros(4);
        assert!(matches!(
            decode_depth(&d, &h, &img, &m),
            Err(SfrError::UnsupportedJoint { .. })
        ));
        assert!(decode_depth_jacobian(&d, &h, &img, &m).is_err());
    }

    #[test]
    fn two_pixel_weighted_mean() {
        let img = frame(2, vec![0.3, 0.5, 0.0, 0.0]);
        let m = build_mask(&img);
        let h = Heatmap::from_vec(2, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let d = DepthOffsetMap::new(Grid::from_vec(2, vec![0.1, 0.1, 0.0, 0.0]).unwrap());
        assert!((decode_depth(&d, &h, &img, &m).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn jacobian_examples() {
        let img = frame(2, vec![0.3, 0.5, 0.0, 0.4]);
        let m = build_mask(&img);
        let h = Heatmap::from_vec(2, vec![0.2, 0.3, 0.4, 0.1]).unwrap();
        let d = DepthOffsetMap::new(Grid::from_vec(2, vec![0.05, -0.02, 0.3, 0.01]).unwrap());
        let j = decode_depth_jacobian(&d, &h, &img, &m).unwrap();
        assert!((j.wrt_offsets.sum() - 1.0).abs() < 1e-12);
        assert_eq!(j.wrt_offsets.get(1, 0), 0.0);
        assert_eq!(j.wrt_heatmap.get(1, 0), 0.0);

        // perfect encoding: residual vanishes, heatmap gradient is zero
        let enc = encode_depth_map(0.45, &h, &img, &m).unwrap();
        let j = decode_depth_jacobian(&enc, &h, &img, &m).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                if m.get(i, k) {
                    assert!(j.wrt_heatmap.get(i, k).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let img = frame(2, vec![0.3; 4]);
        let m = build_mask(&img);
        let h = Heatmap::uniform(3);
        assert!(matches!(
            encode_depth_map(0.5, &h, &img, &m),
            Err(SfrError::ShapeMismatch { .. })
        ));
    }
}

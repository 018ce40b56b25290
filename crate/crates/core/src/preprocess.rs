//! Frame preparation: background removal, cube crop with depth
//! normalization, representation-scale decimation and rotation augmentation.
//!
//! Every resampling step is nearest-neighbor so background stays exactly zero
//! and no depth is ever interpolated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SfrError};
use crate::types::{
    pixel_center_unchecked, rotate_point, CameraIntrinsics, CropGeometry, DepthFrame, Grid,
    JointSetUvd, JointUvd, NormalizationCube,
};

/// Raw sensor depth in millimeters; zero marks invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    intrinsics: CameraIntrinsics,
}

impl RawFrame {
    pub fn new(
        width: usize,
        height: usize,
        depth: Vec<f64>,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self> {
        if depth.len() != width * height {
            return Err(SfrError::ShapeMismatch {
                expected: width * height,
                got: depth.len(),
            });
        }
        if let Some(bad) = depth.iter().find(|z| !(**z >= 0.0) || !z.is_finite()) {
            return Err(SfrError::InvalidInput(format!(
                "raw depth {bad} is negative or not finite"
            )));
        }
        intrinsics.validate()?;
        Ok(Self {
            width,
            height,
            depth,
            intrinsics,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    /// Depth of sensor pixel `(row, col)`.
    #[inline]
    pub fn depth(&self, row: usize, col: usize) -> f64 {
        self.depth[row * self.width + col]
    }

    pub fn depths(&self) -> &[f64] {
        &self.depth
    }

    /// Back-projected 3D points of every valid pixel, row-major.
    pub fn points(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.depth
            .iter()
            .enumerate()
            .filter(|(_, z)| **z > 0.0)
            .map(|(idx, &z)| {
                let (row, col) = (idx / self.width, idx % self.width);
                self.intrinsics.back_project(col as f64, row as f64, z)
            })
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|z| **z > 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Side of the cropped input image.
    pub input_size: usize,
    /// Side of the representation grids.
    pub repr_size: usize,
    /// Normalization cube edge in millimeters.
    pub cube_edge: f64,
    /// Maximum absolute augmentation angle in degrees.
    pub rotation_range: f64,
    /// Depth slack in millimeters past the joints' depth range.
    pub background_threshold: f64,
    /// Slack in millimeters around the joints' x/y bounding box.
    pub bbox_margin: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            input_size: 128,
            repr_size: 64,
            cube_edge: 250.0,
            rotation_range: 30.0,
            background_threshold: 150.0,
            bbox_margin: 25.0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.input_size > self.repr_size && self.repr_size > 0) {
            return Err(SfrError::InvalidInput(format!(
                "need input size > representation size > 0, got {} and {}",
                self.input_size, self.repr_size
            )));
        }
        if !(self.cube_edge > 0.0) {
            return Err(SfrError::InvalidInput("cube edge must be positive".into()));
        }
        if !(self.rotation_range >= 0.0) {
            return Err(SfrError::InvalidInput(
                "rotation range must be nonnegative".into(),
            ));
        }
        if !(self.background_threshold >= 0.0 && self.bbox_margin >= 0.0) {
            return Err(SfrError::InvalidInput(
                "background threshold and box margin must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Keeps pixels whose back-projection falls inside the joints' x/y box grown
/// by `bbox_margin` and whose depth is within `background_threshold` of the
/// joints' depth range.
pub fn remove_background(
    raw: &RawFrame,
    joints_xyz: &[[f64; 3]],
    cfg: &PreprocessConfig,
) -> Result<RawFrame> {
    if joints_xyz.is_empty() {
        return Err(SfrError::InvalidInput(
            "background removal needs at least one joint".into(),
        ));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in joints_xyz {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let slack = [cfg.bbox_margin, cfg.bbox_margin, cfg.background_threshold];

    let intr = raw.intrinsics;
    let mut depth = raw.depth.clone();
    for (idx, z) in depth.iter_mut().enumerate() {
        if *z <= 0.0 {
            continue;
        }
        let (row, col) = (idx / raw.width, idx % raw.width);
        let p = intr.back_project(col as f64, row as f64, *z);
        let inside = (0..3).all(|a| p[a] >= lo[a] - slack[a] && p[a] <= hi[a] + slack[a]);
        if !inside {
            *z = 0.0;
        }
    }
    if depth.iter().all(|&z| z == 0.0) {
        return Err(SfrError::EmptyHand);
    }
    Ok(RawFrame {
        depth,
        ..raw.clone()
    })
}

/// A normalized crop plus the parameters needed to undo it.
#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pub frame: DepthFrame,
    pub cube: NormalizationCube,
    pub geometry: CropGeometry,
}

impl Crop {
    /// Sensor pixel `(row, col)` sampled by output pixel `(i, k)`, if inside
    /// the sensor.
    pub fn source_pixel(
        &self,
        i: usize,
        k: usize,
        width: usize,
        height: usize,
    ) -> Option<(usize, usize)> {
        source_pixel(&self.geometry, i, k, self.frame.resolution(), width, height)
    }
}

fn source_pixel(
    geometry: &CropGeometry,
    i: usize,
    k: usize,
    m: usize,
    width: usize,
    height: usize,
) -> Option<(usize, usize)> {
    let (u, v) = pixel_center_unchecked(i, k, m);
    let (px, py) = geometry.to_sensor(u, v);
    let (col, row) = (px.round(), py.round());
    if col < 0.0 || row < 0.0 || col >= width as f64 || row >= height as f64 {
        return None;
    }
    Some((row as usize, col as usize))
}

/// 3D center of mass of the valid pixels.
pub fn center_of_mass(raw: &RawFrame) -> Result<[f64; 3]> {
    let mut sum = [0.0; 3];
    let mut count = 0usize;
    for p in raw.points() {
        for a in 0..3 {
            sum[a] += p[a];
        }
        count += 1;
    }
    if count == 0 {
        return Err(SfrError::EmptyHand);
    }
    Ok(sum.map(|s| s / count as f64))
}

/// Crops a cube of edge `cfg.cube_edge` centered on the frame's 3D center of
/// mass and normalizes it to an `input_size` square.
pub fn crop_normalize(raw: &RawFrame, cfg: &PreprocessConfig) -> Result<Crop> {
    let center = center_of_mass(raw)?;
    let cube = NormalizationCube::new(center, cfg.cube_edge)?;
    crop_normalize_with_cube(raw, &cube, cfg.input_size)
}

/// Crops an explicit cube to an `m`×`m` frame.
///
/// The window is the cube's x/y extent projected at the center depth. Depths
/// map affinely with the front face at 0 and the back face at 1. Depths
/// outside `(front, back]` become background, as do pixels off the sensor.
pub fn crop_normalize_with_cube(
    raw: &RawFrame,
    cube: &NormalizationCube,
    m: usize,
) -> Result<Crop> {
    cube.validate()?;
    if m == 0 {
        return Err(SfrError::InvalidInput("crop size must be positive".into()));
    }
    let zc = cube.center[2];
    if !(zc > 0.0) {
        return Err(SfrError::InvalidInput(format!(
            "cube center depth {zc} is not in front of the camera"
        )));
    }
    let intr = raw.intrinsics;
    let (pcx, pcy) = intr.project(cube.center);
    let half_w = 0.5 * cube.edge * intr.fx / zc;
    let half_h = 0.5 * cube.edge * intr.fy / zc;
    let geometry = CropGeometry {
        x0: pcx - half_w,
        y0: pcy - half_h,
        width: 2.0 * half_w,
        height: 2.0 * half_h,
    };

    let grid = Grid::from_fn(m, |i, k| {
        let Some((row, col)) = source_pixel(&geometry, i, k, m, raw.width, raw.height) else {
            return 0.0;
        };
        let z = raw.depth(row, col);
        if z <= 0.0 {
            return 0.0;
        }
        let d = cube.normalize_depth(z);
        if d > 0.0 && d <= 1.0 {
            d
        } else {
            0.0
        }
    });
    if grid.as_slice().iter().all(|&d| d == 0.0) {
        return Err(SfrError::EmptyCrop);
    }
    Ok(Crop {
        frame: DepthFrame::new(grid)?,
        cube: *cube,
        geometry,
    })
}

/// Nearest-neighbor decimation taking the top-left sample of each block.
pub fn downsample_repr(frame: &DepthFrame, n: usize) -> Result<DepthFrame> {
    let m = frame.resolution();
    if n == 0 || !m.is_multiple_of(n) {
        return Err(SfrError::NotDivisible { m, n });
    }
    let f = m / n;
    DepthFrame::new(Grid::from_fn(n, |i, k| frame.get(i * f, k * f)))
}

/// Rotates a frame and its joints about the image center by `angle_deg`.
///
/// Multiples of 90° are exact grid permutations; other angles pull each
/// output pixel from the nearest source pixel, filling with background.
/// Joint depth is unchanged.
pub fn rotate_augment(
    frame: &DepthFrame,
    joints: &JointSetUvd,
    angle_deg: f64,
) -> Result<(DepthFrame, JointSetUvd)> {
    let rotated_grid = rotate_grid(frame.grid(), angle_deg);
    let mut rotated = Vec::with_capacity(joints.len());
    for (j, p) in joints.iter().enumerate() {
        let (u, v) = rotate_point(p.u, p.v, angle_deg);
        if !((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)) {
            return Err(SfrError::RotatedOutOfFrame { joint: j, u, v });
        }
        rotated.push(JointUvd::new(u, v, p.d));
    }
    Ok((DepthFrame::new(rotated_grid)?, JointSetUvd::new(rotated)?))
}

/// Rotates any square grid the same way [`rotate_augment`] rotates frames.
pub fn rotate_grid(grid: &Grid, angle_deg: f64) -> Grid {
    let quarter = angle_deg / 90.0;
    if quarter.fract() == 0.0 {
        return grid.rotate_quarter_turns((quarter as i64).rem_euclid(4) as i32);
    }
    let n = grid.n();
    let nf = n as f64;
    Grid::from_fn(n, |i, k| {
        let (u, v) = pixel_center_unchecked(i, k, n);
        let (su, sv) = rotate_point(u, v, -angle_deg);
        let (sk, si) = ((su * nf).floor(), (sv * nf).floor());
        if sk < 0.0 || si < 0.0 || sk >= nf || si >= nf {
            0.0
        } else {
            grid.get(si as usize, sk as usize)
        }
    })
}

/// Samples an angle uniformly in `[-rotation_range, rotation_range]`.
pub fn sample_rotation(cfg: &PreprocessConfig, seed: u64) -> f64 {
    if cfg.rotation_range == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.random_range(-cfg.rotation_range..=cfg.rotation_range)
}

/// Seeded random rotation within the configured range.
pub fn augment(
    frame: &DepthFrame,
    joints: &JointSetUvd,
    cfg: &PreprocessConfig,
    seed: u64,
) -> Result<(DepthFrame, JointSetUvd, f64)> {
    let angle = sample_rotation(cfg, seed);
    let (f, j) = rotate_augment(frame, joints, angle)?;
    Ok((f, j, angle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::build_mask;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(240.0, 240.0, 31.5, 31.5).unwrap()
    }

    fn blob_scene(wall: bool) -> RawFrame {
        let (w, h) = (64, 64);
        let mut depth = vec![0.0; w * h];
        for r in 0..h {
            for c in 0..w {
                let (dr, dc) = (r as f64 - 31.5, c as f64 - 31.5);
                if dr * dr + dc * dc <= 64.0 {
                    depth[r * w + c] = 400.0 + 0.1 * (r as f64);
                } else if wall {
                    depth[r * w + c] = 900.0;
                }
            }
        }
        RawFrame::new(w, h, depth, intr()).unwrap()
    }

    #[test]
    fn config_defaults_validate() {
        let cfg = PreprocessConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!((cfg.input_size, cfg.repr_size), (128, 64));
        let bad = PreprocessConfig {
            repr_size: 128,
            ..cfg
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn wall_is_removed_blob_survives() {
        let raw = blob_scene(true);
        let joints = [intr().back_project(31.5, 31.5, 403.0)];
        let cfg = PreprocessConfig {
            bbox_margin: 1000.0,
            ..PreprocessConfig::default()
        };
        let clean = remove_background(&raw, &joints, &cfg).unwrap();
        assert_eq!(clean.valid_count(), blob_scene(false).valid_count());
        assert!(clean.depths().iter().all(|&z| z == 0.0 || z < 500.0));
    }

    #[test]
    fn hand_only_frame_is_unchanged() {
        let raw = blob_scene(false);
        let joints = [
            intr().back_project(20.0, 20.0, 400.0),
            intr().back_project(44.0, 44.0, 406.0),
        ];
        let clean = remove_background(&raw, &joints, &PreprocessConfig::default()).unwrap();
        assert_eq!(clean, raw);
    }

    #[test]
    fn degenerate_box_keeps_single_pixel() {
        let raw = RawFrame::new(4, 4, vec![500.0; 16], intr()).unwrap();
        let joint = intr().back_project(2.0, 1.0, 500.0);
        let cfg = PreprocessConfig {
            bbox_margin: 0.0,
            background_threshold: 0.0,
            ..PreprocessConfig::default()
        };
        let clean = remove_background(&raw, &[joint], &cfg).unwrap();
        assert_eq!(clean.valid_count(), 1);
        assert_eq!(clean.depth(1, 2), 500.0);
        assert!(remove_background(&raw, &[], &cfg).is_err());
    }

    #[test]
    fn everything_removed_is_empty_hand() {
        let raw = blob_scene(false);
        let far = [intr().back_project(31.5, 31.5, 2000.0)];
        assert!(matches!(
            remove_background(&raw, &far, &PreprocessConfig::default()),
            Err(SfrError::EmptyHand)
        ));
    }

    #[test]
    fn flat_plate_at_center_depth_is_half() {
        let raw = RawFrame::new(64, 64, vec![400.0; 64 * 64], intr()).unwrap();
        let cube = NormalizationCube::new([0.0, 0.0, 400.0], 250.0).unwrap();
        let crop = crop_normalize_with_cube(&raw, &cube, 32).unwrap();
        for &d in crop.frame.grid().as_slice() {
            assert!(d == 0.0 || d == 0.5);
        }
        assert!(crop.frame.on_hand_count() > 0);
    }

    #[test]
    fn back_face_maps_to_one_front_face_to_background() {
        let raw = RawFrame::new(64, 64, vec![525.0; 64 * 64], intr()).unwrap();
        let cube = NormalizationCube::new([0.0, 0.0, 400.0], 250.0).unwrap();
        let crop = crop_normalize_with_cube(&raw, &cube, 16).unwrap();
        // the window is wider than the sensor, so outside pixels stay background
        assert!(crop
            .frame
            .grid()
            .as_slice()
            .iter()
            .all(|&d| d == 0.0 || d == 1.0));
        assert!(crop.frame.on_hand_count() > 0);
        let raw = RawFrame::new(64, 64, vec![275.0; 64 * 64], intr()).unwrap();
        assert!(matches!(
            crop_normalize_with_cube(&raw, &cube, 16),
            Err(SfrError::EmptyCrop)
        ));
    }

    #[test]
    fn com_crop_centers_on_blob() {
        let raw = blob_scene(false);
        let crop = crop_normalize(&raw, &PreprocessConfig::default()).unwrap();
        let (pcx, pcy) = intr().project(crop.cube.center);
        assert!((pcx - 31.5).abs() < 0.5 && (pcy - 31.5).abs() < 0.5);
        assert_eq!(crop.frame.resolution(), 128);
        // on-hand depths are near the middle of the cube
        for &d in crop.frame.grid().as_slice() {
            assert!(d == 0.0 || (d - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn downsample_examples() {
        let f = DepthFrame::from_vec(4, vec![0.3; 16]).unwrap();
        assert_eq!(downsample_repr(&f, 2).unwrap().grid().as_slice(), &[0.3; 4]);
        let checker = DepthFrame::new(Grid::from_fn(
            4,
            |i, k| if (i + k) % 2 == 0 { 0.0 } else { 0.5 },
        ))
        .unwrap();
        let d = downsample_repr(&checker, 2).unwrap();
        assert_eq!(d.grid().as_slice(), &[0.0, 0.0, 0.0, 0.0]);
        let shifted = DepthFrame::new(Grid::from_fn(4, |i, k| {
            if i % 2 == 0 && k % 2 == 0 {
                0.5
            } else {
                0.0
            }
        }))
        .unwrap();
        assert_eq!(
            downsample_repr(&shifted, 2).unwrap().grid().as_slice(),
            &[0.5; 4]
        );
        assert!(matches!(
            downsample_repr(&f, 3),
            Err(SfrError::NotDivisible { .. })
        ));
        let m = build_mask(&downsample_repr(&checker, 2).unwrap());
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let f = DepthFrame::new(Grid::from_fn(8, |i, k| ((i * 8 + k) % 5) as f64 / 5.0)).unwrap();
        let j = JointSetUvd::new(vec![JointUvd::new(0.3, 0.7, 0.4)]).unwrap();
        let (rf, rj) = rotate_augment(&f, &j, 0.0).unwrap();
        assert_eq!(rf, f);
        assert_eq!(rj, j);
    }

    #[test]
    fn quarter_rotation_of_joint() {
        let f = DepthFrame::new(Grid::from_fn(8, |_, _| 0.5)).unwrap();
        let j = JointSetUvd::new(vec![JointUvd::new(0.25, 0.5, 0.4)]).unwrap();
        let (rf, rj) = rotate_augment(&f, &j, 90.0).unwrap();
        assert_eq!(rf, f);
        assert_eq!(rj.joints()[0], JointUvd::new(0.5, 0.25, 0.4));
    }

    #[test]
    fn general_rotation_moves_delta_near_rotated_point() {
        let n = 32;
        let mut g = Grid::zeros(n);
        g.set(8, 20, 1.0);
        let r = rotate_grid(&g, 30.0);
        let (u, v) = pixel_center_unchecked(8, 20, n);
        let (ru, rv) = rotate_point(u, v, 30.0);
        let (ri, rk) = ((rv * n as f64) as usize, (ru * n as f64) as usize);
        let mut found = false;
        for i in ri.saturating_sub(1)..=(ri + 1).min(n - 1) {
            for k in rk.saturating_sub(1)..=(rk + 1).min(n - 1) {
                found |= r.get(i, k) == 1.0;
            }
        }
        assert!(found);
    }

    #[test]
    fn corner_joint_rotated_out_of_frame() {
        let f = DepthFrame::new(Grid::from_fn(8, |_, _| 0.5)).unwrap();
        let j = JointSetUvd::new(vec![JointUvd::new(0.02, 0.02, 0.4)]).unwrap();
        assert!(matches!(
            rotate_augment(&f, &j, 30.0),
            Err(SfrError::RotatedOutOfFrame { joint: 0, .. })
        ));
    }

    #[test]
    fn sampled_rotation_in_range_and_seeded() {
        let cfg = PreprocessConfig::default();
        for seed in 0..50 {
            let a = sample_rotation(&cfg, seed);
            assert!(a.abs() <= 30.0);
            assert_eq!(a, sample_rotation(&cfg, seed));
        }
    }
}

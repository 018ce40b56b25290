//! Shared domain types and the normalized coordinate convention.
//!
//! All grids are square, row-major, and indexed `(row, col)`. Normalized plane
//! coordinates put `u` along columns and `v` along rows; pixel `(i, k)` sits at
//! `((k + 0.5) / n, (i + 0.5) / n)`. Normalized depth lives in `[0, 1]` with
//! `0` reserved for background.

use crate::error::{Result, SfrError};

/// Tolerance on the unit-sum invariant of a [`Heatmap`].
pub const HEATMAP_SUM_TOL: f64 = 1e-9;

/// Normalized plane coordinates of the center of pixel `(i, k)`.
///
/// Returns `(u, v)` where `u` follows the column index and `v` the row index.
pub fn pixel_center(i: usize, k: usize, n: usize) -> Result<(f64, f64)> {
    if i >= n || k >= n {
        return Err(SfrError::IndexOutOfRange { row: i, col: k, n });
    }
    Ok(pixel_center_unchecked(i, k, n))
}

#[inline]
pub(crate) fn pixel_center_unchecked(i: usize, k: usize, n: usize) -> (f64, f64) {
    let n = n as f64;
    ((k as f64 + 0.5) / n, (i as f64 + 0.5) / n)
}

/// A square row-major grid of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn from_vec(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(SfrError::InvalidInput(
                "grid resolution must be positive".into(),
            ));
        }
        if values.len() != n * n {
            return Err(SfrError::ShapeMismatch {
                expected: n * n,
                got: values.len(),
            });
        }
        Ok(Self { n, values })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for k in 0..n {
                values.push(f(i, k));
            }
        }
        Self { n, values }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.n + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, k: usize, value: f64) {
        self.values[i * self.n + k] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Row-major sum.
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Rotates the grid by `quarter_turns * 90°` about its center.
    ///
    /// A positive quarter turn maps the point `(u, v)` to `(1 - v, u)`, the
    /// same direction as [`rotate_point`] with a positive angle.
    pub fn rotate_quarter_turns(&self, quarter_turns: i32) -> Grid {
        let n = self.n;
        let q = quarter_turns.rem_euclid(4);
        Grid::from_fn(n, |i, k| {
            // inverse map: output (i, k) pulls from the source pixel rotated back
            let (si, sk) = match q {
                0 => (i, k),
                1 => (n - 1 - k, i),
                2 => (n - 1 - i, n - 1 - k),
                _ => (k, n - 1 - i),
            };
            self.get(si, sk)
        })
    }

    pub(crate) fn check_same_shape(&self, other: &Grid) -> Result<()> {
        if self.n != other.n {
            return Err(SfrError::ShapeMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        Ok(())
    }
}

/// Rotates a normalized plane point about `(0.5, 0.5)` by `angle_deg`.
///
/// Positive angles turn `+u` toward `+v` (clockwise on screen, since `v`
/// points down).
pub fn rotate_point(u: f64, v: f64, angle_deg: f64) -> (f64, f64) {
    let quarter = angle_deg / 90.0;
    if quarter.fract() == 0.0 {
        // exact permutation for multiples of 90°
        return match (quarter as i64).rem_euclid(4) {
            0 => (u, v),
            1 => (1.0 - v, u),
            2 => (1.0 - u, 1.0 - v),
            _ => (v, 1.0 - u),
        };
    }
    let (s, c) = angle_deg.to_radians().sin_cos();
    let (du, dv) = (u - 0.5, v - 0.5);
    (0.5 + c * du - s * dv, 0.5 + s * du + c * dv)
}

/// Normalized depth image; `0` marks background.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    grid: Grid,
}

impl DepthFrame {
    pub fn new(grid: Grid) -> Result<Self> {
        let frame = Self { grid };
        frame.validate()?;
        Ok(frame)
    }

    pub fn from_vec(n: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(Grid::from_vec(n, values)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (idx, &v) in self.grid.as_slice().iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(SfrError::InvalidInput(format!(
                    "depth value {v} at pixel ({}, {}) outside [0, 1]",
                    idx / self.grid.n(),
                    idx % self.grid.n()
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn resolution(&self) -> usize {
        self.grid.n()
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.grid.get(i, k)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn into_grid(self) -> Grid {
        self.grid
    }

    pub fn on_hand_count(&self) -> usize {
        self.grid.as_slice().iter().filter(|&&v| v > 0.0).count()
    }
}

/// One joint in normalized UVD coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointUvd {
    pub u: f64,
    pub v: f64,
    pub d: f64,
}

impl JointUvd {
    pub fn new(u: f64, v: f64, d: f64) -> Self {
        Self { u, v, d }
    }

    pub fn uv(&self) -> (f64, f64) {
        (self.u, self.v)
    }
}

/// Ordered per-joint UVD coordinates for a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSetUvd {
    joints: Vec<JointUvd>,
}

impl JointSetUvd {
    pub fn new(joints: Vec<JointUvd>) -> Result<Self> {
        let set = Self { joints };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(SfrError::InvalidInput("joint set is empty".into()));
        }
        for (j, p) in self.joints.iter().enumerate() {
            for (name, x) in [("u", p.u), ("v", p.v), ("d", p.d)] {
                if !(0.0..=1.0).contains(&x) {
                    return Err(SfrError::InvalidInput(format!(
                        "joint {j}: {name} = {x} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn joints(&self) -> &[JointUvd] {
        &self.joints
    }

    pub fn iter(&self) -> std::slice::Iter<'_, JointUvd> {
        self.joints.iter()
    }

    pub(crate) fn check_same_len(&self, other: &JointSetUvd) -> Result<()> {
        if self.len() != other.len() {
            return Err(SfrError::JointCountMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(())
    }
}

/// Per-joint nonnegative grid whose mass sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    grid: Grid,
}

impl Heatmap {
    /// Wraps a grid after checking entries are finite and nonnegative.
    ///
    /// The unit-sum invariant is checked separately by [`Heatmap::validate`],
    /// so decoders can report degenerate (all-zero) input themselves.
    pub fn new(grid: Grid) -> Result<Self> {
        if let Some(bad) = grid.as_slice().iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(SfrError::InvalidInput(format!(
                "heatmap entry {bad} is negative or not finite"
            )));
        }
        Ok(Self { grid })
    }

    pub fn from_vec(n: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(Grid::from_vec(n, values)?)
    }

    /// All mass on pixel `(i, k)`.
    pub fn delta(n: usize, i: usize, k: usize) -> Result<Self> {
        if i >= n || k >= n {
            return Err(SfrError::IndexOutOfRange { row: i, col: k, n });
        }
        let mut grid = Grid::zeros(n);
        grid.set(i, k, 1.0);
        Ok(Self { grid })
    }

    pub fn uniform(n: usize) -> Self {
        let w = 1.0 / (n * n) as f64;
        Self {
            grid: Grid::from_fn(n, |_, _| w),
        }
    }

    /// Checks nonnegativity and unit sum within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let sum = self.grid.sum();
        if (sum - 1.0).abs() > tol {
            return Err(SfrError::InvalidInput(format!(
                "heatmap sums to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    pub(crate) fn from_grid_unchecked(grid: Grid) -> Self {
        Self { grid }
    }

    #[inline]
    pub fn resolution(&self) -> usize {
        self.grid.n()
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.grid.get(i, k)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn as_slice(&self) -> &[f64] {
        self.grid.as_slice()
    }

    pub fn into_grid(self) -> Grid {
        self.grid
    }

    pub fn rotate_quarter_turns(&self, quarter_turns: i32) -> Heatmap {
        Heatmap {
            grid: self.grid.rotate_quarter_turns(quarter_turns),
        }
    }
}

/// Per-joint grid of signed depth offsets, zero off the heatmap support and
/// off the hand.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthOffsetMap {
    grid: Grid,
}

impl DepthOffsetMap {
    pub fn new(grid: Grid) -> Self {
        Self { grid }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            grid: Grid::zeros(n),
        }
    }

    /// Checks the map vanishes wherever `heatmap` or `mask` is zero.
    pub fn validate(&self, heatmap: &Heatmap, mask: &MaskMatrix) -> Result<()> {
        self.grid.check_same_shape(heatmap.grid())?;
        let n = self.grid.n();
        if mask.resolution() != n {
            return Err(SfrError::ShapeMismatch {
                expected: n,
                got: mask.resolution(),
            });
        }
        for i in 0..n {
            for k in 0..n {
                let off_support = heatmap.get(i, k) == 0.0 || !mask.get(i, k);
                if off_support && self.grid.get(i, k) != 0.0 {
                    return Err(SfrError::InvalidInput(format!(
                        "offset at ({i}, {k}) is nonzero outside the valid support"
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn resolution(&self) -> usize {
        self.grid.n()
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.grid.get(i, k)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_mut(&mut self) -> &mut Grid {
        &mut self.grid
    }

    pub fn as_slice(&self) -> &[f64] {
        self.grid.as_slice()
    }

    pub fn into_grid(self) -> Grid {
        self.grid
    }
}

/// Binary on-hand mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMatrix {
    n: usize,
    on_hand: Vec<bool>,
}

impl MaskMatrix {
    pub fn from_vec(n: usize, on_hand: Vec<bool>) -> Result<Self> {
        if on_hand.len() != n * n {
            return Err(SfrError::ShapeMismatch {
                expected: n * n,
                got: on_hand.len(),
            });
        }
        Ok(Self { n, on_hand })
    }

    /// Checks the mask marks exactly the pixels where `frame` is positive.
    pub fn validate(&self, frame: &DepthFrame) -> Result<()> {
        if frame.resolution() != self.n {
            return Err(SfrError::ShapeMismatch {
                expected: self.n,
                got: frame.resolution(),
            });
        }
        let consistent = frame
            .grid()
            .as_slice()
            .iter()
            .zip(&self.on_hand)
            .all(|(&d, &m)| (d > 0.0) == m);
        if !consistent {
            return Err(SfrError::InvalidInput(
                "mask disagrees with the frame's on-hand pixels".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn resolution(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> bool {
        self.on_hand[i * self.n + k]
    }

    /// The mask as 0/1 weights.
    #[inline]
    pub fn weight(&self, i: usize, k: usize) -> f64 {
        if self.get(i, k) {
            1.0
        } else {
            0.0
        }
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.on_hand
    }

    pub fn count(&self) -> usize {
        self.on_hand.iter().filter(|&&m| m).count()
    }
}

/// Pinhole intrinsics in pixels. Integer pixel coordinates are pixel centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let intr = Self { fx, fy, cx, cy };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(SfrError::InvalidIntrinsics {
                fx: self.fx,
                fy: self.fy,
            });
        }
        Ok(())
    }

    /// Sensor pixel `(px, py)` of a 3D point in millimeters.
    pub fn project(&self, p: [f64; 3]) -> (f64, f64) {
        (
            self.fx * p[0] / p[2] + self.cx,
            self.fy * p[1] / p[2] + self.cy,
        )
    }

    /// 3D point of sensor pixel `(px, py)` at depth `z` millimeters.
    pub fn back_project(&self, px: f64, py: f64, z: f64) -> [f64; 3] {
        [
            (px - self.cx) * z / self.fx,
            (py - self.cy) * z / self.fy,
            z,
        ]
    }
}

/// Axis-aligned cube in camera space used to normalize depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationCube {
    /// Center in millimeters.
    pub center: [f64; 3],
    /// Edge length in millimeters.
    pub edge: f64,
}

impl NormalizationCube {
    pub fn new(center: [f64; 3], edge: f64) -> Result<Self> {
        let cube = Self { center, edge };
        cube.validate()?;
        Ok(cube)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.edge > 0.0) {
            return Err(SfrError::InvalidInput(format!(
                "cube edge must be positive, got {}",
                self.edge
            )));
        }
        Ok(())
    }

    /// Depth of the near face in millimeters.
    pub fn front(&self) -> f64 {
        self.center[2] - 0.5 * self.edge
    }

    /// Maps millimeters to normalized depth; front face → 0, back face → 1.
    pub fn normalize_depth(&self, z_mm: f64) -> f64 {
        (z_mm - self.front()) / self.edge
    }

    pub fn denormalize_depth(&self, d: f64) -> f64 {
        self.front() + d * self.edge
    }
}

/// Placement of the normalized crop window on the sensor.
///
/// Normalized `(u, v)` maps to sensor pixel `(x0 + u·width, y0 + v·height)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropGeometry {
    pub x0: f64,
    pub y0: f64,
    pub width: f64,
    pub height: f64,
}

impl CropGeometry {
    pub fn to_sensor(&self, u: f64, v: f64) -> (f64, f64) {
        (self.x0 + u * self.width, self.y0 + v * self.height)
    }

    pub fn to_normalized(&self, px: f64, py: f64) -> (f64, f64) {
        ((px - self.x0) / self.width, (py - self.y0) / self.height)
    }
}

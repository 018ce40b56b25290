//! Plane coordinates ↔ heatmap.
//!
//! The encoder builds a four-corner "basic" heatmap whose center of mass is
//! exactly the target point, then smooths it with a normalized Gaussian. The
//! decoder is the heatmap's center of mass, a linear map whose Jacobian is the
//! pixel-center kernel itself.

use crate::error::{Result, SfrError};
use crate::types::{pixel_center_unchecked, Grid, Heatmap};

/// Per-pixel normalized `u` and `v` coordinates, one channel each.
#[derive(Debug, Clone, PartialEq)]
pub struct ComKernel {
    u: Grid,
    v: Grid,
}

impl ComKernel {
    pub fn new(n: usize) -> Self {
        Self {
            u: Grid::from_fn(n, |i, k| pixel_center_unchecked(i, k, n).0),
            v: Grid::from_fn(n, |i, k| pixel_center_unchecked(i, k, n).1),
        }
    }

    pub fn resolution(&self) -> usize {
        self.u.n()
    }

    pub fn u(&self) -> &Grid {
        &self.u
    }

    pub fn v(&self) -> &Grid {
        &self.v
    }
}

/// Normalized square Gaussian smoothing kernel of odd size.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussKernel {
    size: usize,
    sigma: f64,
    weights: Grid,
}

impl GaussKernel {
    pub fn new(size: usize, sigma: f64) -> Result<Self> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(SfrError::InvalidInput(format!(
                "kernel size must be odd and positive, got {size}"
            )));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(SfrError::InvalidInput(format!(
                "kernel sigma must be positive, got {sigma}"
            )));
        }
        let r = (size / 2) as f64;
        let two_s2 = 2.0 * sigma * sigma;
        let mut weights = Grid::from_fn(size, |a, b| {
            let (dy, dx) = (a as f64 - r, b as f64 - r);
            (-(dx * dx + dy * dy) / two_s2).exp()
        });
        let total = weights.sum();
        weights.as_mut_slice().iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            size,
            sigma,
            weights,
        })
    }

    /// Kernel with the default spread `sigma = size / 4`.
    pub fn with_default_sigma(size: usize) -> Result<Self> {
        Self::new(size, size as f64 / 4.0)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Half-width `(size - 1) / 2`.
    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &Grid {
        &self.weights
    }
}

/// Inclusive bounds of the pixel-center hull along either axis.
pub fn hull_bounds(n: usize) -> (f64, f64) {
    let n = n as f64;
    (0.5 / n, 1.0 - 0.5 / n)
}

/// The four bracketing pixels of a point and its fractional offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerCell {
    pub row: usize,
    pub col: usize,
    /// Fractional offset along columns (`u`) from `col`'s center.
    pub a: f64,
    /// Fractional offset along rows (`v`) from `row`'s center.
    pub b: f64,
}

impl CornerCell {
    pub fn locate(u: f64, v: f64, n: usize) -> Result<Self> {
        let (lo, hi) = hull_bounds(n);
        if !(u >= lo && u <= hi && v >= lo && v <= hi) {
            return Err(SfrError::OutOfHull { u, v, lo, hi });
        }
        let last = n.saturating_sub(2);
        let x = u * n as f64 - 0.5;
        let y = v * n as f64 - 0.5;
        let col = (x.floor() as usize).min(last);
        let row = (y.floor() as usize).min(last);
        Ok(Self {
            row,
            col,
            a: (x - col as f64).clamp(0.0, 1.0),
            b: (y - row as f64).clamp(0.0, 1.0),
        })
    }

    /// Feasible interval of the high-row, high-col corner weight.
    pub fn feasible_interval(&self) -> (f64, f64) {
        ((self.a + self.b - 1.0).max(0.0), self.a.min(self.b))
    }

    /// Corner weights for a given free weight `t`, ordered
    /// `[(row, col), (row, col+1), (row+1, col), (row+1, col+1)]`.
    pub fn weights_for(&self, t: f64) -> [f64; 4] {
        [1.0 - self.a - self.b + t, self.a - t, self.b - t, t]
    }

    /// Midpoint of the feasible interval.
    pub fn midpoint_t(&self) -> f64 {
        let (lo, hi) = self.feasible_interval();
        0.5 * (lo + hi)
    }
}

/// Basic heatmap: mass only on the (at most) four pixel centers bracketing
/// `(u, v)`, nonnegative, summing to one, with center of mass `(u, v)`.
pub fn encode_corners(u: f64, v: f64, n: usize) -> Result<Heatmap> {
    if n == 0 {
        return Err(SfrError::InvalidInput("resolution must be positive".into()));
    }
    let cell = CornerCell::locate(u, v, n)?;
    let mut grid = Grid::zeros(n);
    if n == 1 {
        grid.set(0, 0, 1.0);
        return Ok(Heatmap::from_grid_unchecked(grid));
    }
    let w = cell.weights_for(cell.midpoint_t());
    let (r, c) = (cell.row, cell.col);
    grid.set(r, c, w[0]);
    grid.set(r, c + 1, w[1]);
    grid.set(r + 1, c, w[2]);
    grid.set(r + 1, c + 1, w[3]);
    Ok(Heatmap::from_grid_unchecked(grid))
}

/// Zero-padded convolution with `kernel`, renormalized to unit sum.
pub fn gauss_smooth(h: &Heatmap, kernel: &GaussKernel) -> Heatmap {
    let n = h.resolution();
    let r = kernel.radius() as isize;
    let w = kernel.weights();
    let mut out = Grid::zeros(n);
    // scatter each nonzero source pixel; the kernel is symmetric so this is
    // the same as convolution
    for i in 0..n {
        for k in 0..n {
            let mass = h.get(i, k);
            if mass == 0.0 {
                continue;
            }
            for a in -r..=r {
                let ti = i as isize + a;
                if ti < 0 || ti >= n as isize {
                    continue;
                }
                for b in -r..=r {
                    let tk = k as isize + b;
                    if tk < 0 || tk >= n as isize {
                        continue;
                    }
                    let wi = w.get((a + r) as usize, (b + r) as usize);
                    let idx = (ti as usize, tk as usize);
                    out.set(idx.0, idx.1, out.get(idx.0, idx.1) + mass * wi);
                }
            }
        }
    }
    let total = out.sum();
    if total > 0.0 {
        out.as_mut_slice().iter_mut().for_each(|x| *x /= total);
    }
    Heatmap::from_grid_unchecked(out)
}

/// Two-step encoder: four-corner basic heatmap followed by Gaussian smoothing.
pub fn encode_heatmap(u: f64, v: f64, n: usize, kernel: &GaussKernel) -> Result<Heatmap> {
    Ok(gauss_smooth(&encode_corners(u, v, n)?, kernel))
}

/// Center of mass of `h` in normalized plane coordinates.
pub fn decode_plane(h: &Heatmap, c: &ComKernel) -> Result<(f64, f64)> {
    check_kernel(h, c)?;
    if h.as_slice().iter().all(|&x| x == 0.0) {
        return Err(SfrError::DegenerateHeatmap);
    }
    Ok(com(h.as_slice(), c))
}

pub(crate) fn com(values: &[f64], c: &ComKernel) -> (f64, f64) {
    let (mut u, mut v) = (0.0, 0.0);
    for ((&h, &cu), &cv) in values.iter().zip(c.u.as_slice()).zip(c.v.as_slice()) {
        u += h * cu;
        v += h * cv;
    }
    (u, v)
}

/// Gradient of the decoded `(u, v)` with respect to every heatmap entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneJacobian {
    pub du: Grid,
    pub dv: Grid,
}

/// The decoder is linear, so the Jacobian is the kernel and independent of `h`.
pub fn decode_plane_jacobian(h: &Heatmap, c: &ComKernel) -> Result<PlaneJacobian> {
    check_kernel(h, c)?;
    Ok(PlaneJacobian {
        du: c.u.clone(),
        dv: c.v.clone(),
    })
}

fn check_kernel(h: &Heatmap, c: &ComKernel) -> Result<()> {
    if h.resolution() != c.resolution() {
        return Err(SfrError::ShapeMismatch {
            expected: c.resolution(),
            got: h.resolution(),
        });
    }
    Ok(())
}

/// True when some heatmap mass lies within `radius` pixels of the border,
/// i.e. smoothing with a kernel of that half-width would be truncated.
pub fn is_boundary_proximate(h: &Heatmap, radius: usize) -> bool {
    let n = h.resolution();
    (0..n).any(|i| {
        (0..n).any(|k| {
            h.get(i, k) != 0.0 && (i < radius || k < radius || i + radius >= n || k + radius >= n)
        })
    })
}

/// True when the joint is closer than `(k + 1) / 2` pixels to any border, the
/// region where the plane roundtrip is not guaranteed.
pub fn joint_near_border(u: f64, v: f64, n: usize, kernel_size: usize) -> bool {
    let nf = n as f64;
    let margin = (kernel_size as f64 + 1.0) / 2.0;
    let (x, y) = (u * nf, v * nf);
    x.min(y).min(nf - x).min(nf - y) < margin
}

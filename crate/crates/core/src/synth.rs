//! Deterministic synthetic scenes: each joint is rendered as a disk of
//! on-hand depth around its surface depth, with the joint itself sitting a
//! small offset in front of or behind that surface.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SfrError};
use crate::types::{DepthFrame, Grid, JointSetUvd, JointUvd};

/// Fraction of the depth range used for joint-to-surface offsets.
pub const OFFSET_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_joints: usize,
    pub resolution: usize,
    /// Disk radius in pixels.
    pub blob_radius: f64,
    /// Normalized `(near, far)` depth range.
    pub depth_range: (f64, f64),
    pub seed: u64,
    /// Minimum joint distance from every border, in pixels.
    pub margin: f64,
    /// Half-width of the uniform per-pixel depth jitter.
    pub jitter: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_joints: 4,
            resolution: 64,
            blob_radius: 4.0,
            depth_range: (0.3, 0.7),
            seed: 0,
            margin: 4.0,
            jitter: 0.005,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let (near, far) = self.depth_range;
        if self.resolution < 16 {
            return Err(SfrError::InvalidInput(format!(
                "resolution must be at least 16, got {}",
                self.resolution
            )));
        }
        if !(0.0 < near && near < far && far <= 1.0) {
            return Err(SfrError::InvalidInput(format!(
                "depth range must satisfy 0 < near < far <= 1, got ({near}, {far})"
            )));
        }
        if self.n_joints == 0 {
            return Err(SfrError::InvalidInput("need at least one joint".into()));
        }
        if !(self.blob_radius >= 0.0 && self.jitter >= 0.0) {
            return Err(SfrError::InvalidInput(
                "radius and jitter must be nonnegative".into(),
            ));
        }
        if !(self.margin >= 0.0 && 2.0 * self.margin < self.resolution as f64) {
            return Err(SfrError::InvalidInput(format!(
                "margin {} leaves no interior at resolution {}",
                self.margin, self.resolution
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub frame: DepthFrame,
    pub joints: JointSetUvd,
}

pub fn generate_scene(spec: &SynthSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.resolution;
    let nf = n as f64;
    let (near, far) = spec.depth_range;
    let span = far - near;
    let offset = OFFSET_FRACTION * span;
    let (lo, hi) = (spec.margin / nf, 1.0 - spec.margin / nf);

    let mut joints = Vec::with_capacity(spec.n_joints);
    let mut surfaces = Vec::with_capacity(spec.n_joints);
    for _ in 0..spec.n_joints {
        let u = rng.random_range(lo..=hi);
        let v = rng.random_range(lo..=hi);
        let surface = rng.random_range((near + offset)..=(far - offset));
        let d = surface + rng.random_range(-offset..=offset);
        joints.push(JointUvd::new(u, v, d));
        surfaces.push(surface);
    }

    let mut grid = Grid::zeros(n);
    let r2 = spec.blob_radius * spec.blob_radius;
    for (joint, &surface) in joints.iter().zip(&surfaces) {
        let (x, y) = (joint.u * nf, joint.v * nf);
        let own = (
            (y.floor() as usize).min(n - 1),
            (x.floor() as usize).min(n - 1),
        );
        for i in 0..n {
            for k in 0..n {
                let (dx, dy) = (k as f64 + 0.5 - x, i as f64 + 0.5 - y);
                if (i, k) != own && dx * dx + dy * dy > r2 {
                    continue;
                }
                let jitter = if spec.jitter > 0.0 {
                    rng.random_range(-spec.jitter..=spec.jitter)
                } else {
                    0.0
                };
                let value = (surface + jitter).clamp(1e-6, 1.0);
                let current = grid.get(i, k);
                // nearer surface wins where disks overlap
                if current == 0.0 || value < current {
                    grid.set(i, k, value);
                }
            }
        }
    }

    Ok(Scene {
        frame: DepthFrame::new(grid)?,
        joints: JointSetUvd::new(joints)?,
    })
}

/// Seed of the `index`-th scene of a corpus (SplitMix64 mixing).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub index: usize,
    pub seed: u64,
    pub joints: JointSetUvd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub scenes: Vec<Scene>,
    pub manifest: Vec<ManifestEntry>,
}

pub fn generate_corpus(spec: &SynthSpec, count: usize) -> Result<Corpus> {
    if count == 0 {
        return Err(SfrError::InvalidInput(
            "corpus count must be at least 1".into(),
        ));
    }
    spec.validate()?;
    let mut scenes = Vec::with_capacity(count);
    let mut manifest = Vec::with_capacity(count);
    for index in 0..count {
        let seed = derive_seed(spec.seed, index as u64);
        let scene = generate_scene(&spec.with_seed(seed))?;
        manifest.push(ManifestEntry {
            index,
            seed,
            joints: scene.joints.clone(),
        });
        scenes.push(scene);
    }
    Ok(Corpus { scenes, manifest })
}

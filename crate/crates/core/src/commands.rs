//! File-level operations behind the `sfr` binary.
//!
//! Commands write their outputs in frame-id order and return a summary the
//! binary turns into an exit code.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::depth::{build_mask, decode_depth, encode_depth_map};
use crate::error::{Result, SfrError};
use crate::fit::{fit_representation, FitConfig, FitResult};
use crate::gradcheck::{run_gradcheck, GradcheckReport};
use crate::io::{
    read_annotations, read_frames, read_geometry, write_annotations, write_frames, write_geometry,
    write_grids_binary, write_metrics, write_trace, Annotations, FrameRecord,
};
use crate::losses::LossWeights;
use crate::metrics::{
    frames_under_threshold, mean_3d_error, uvd_to_xyz, FrameGeometry, MeanError, Point3,
};
use crate::plane::{decode_plane, encode_heatmap, joint_near_border, ComKernel, GaussKernel};
use crate::preprocess::downsample_repr;
use crate::synth::{generate_corpus, SynthSpec};
use crate::types::{
    CameraIntrinsics, CropGeometry, DepthFrame, Grid, Heatmap, JointSetUvd, JointUvd,
    NormalizationCube,
};

/// Resolution and kernel settings shared by the codec commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecOptions {
    pub size_m: usize,
    pub size_n: usize,
    pub kernel_k: usize,
}

impl Default for CodecOptions {
    fn default() -> Self {
        Self {
            size_m: 128,
            size_n: 64,
            kernel_k: 7,
        }
    }
}

impl CodecOptions {
    pub fn kernel(&self) -> Result<GaussKernel> {
        GaussKernel::with_default_sigma(self.kernel_k)
    }

    /// Brings a frame to representation scale. Frames already at `size_n`
    /// pass through; frames at `size_m` are decimated.
    pub fn to_repr(&self, frame: &DepthFrame) -> Result<DepthFrame> {
        match frame.resolution() {
            r if r == self.size_n => Ok(frame.clone()),
            r if r == self.size_m => downsample_repr(frame, self.size_n),
            r => Err(SfrError::InvalidInput(format!(
                "frame resolution {r} matches neither --size-m {} nor --size-n {}",
                self.size_m, self.size_n
            ))),
        }
    }
}

/// Frames paired with their annotations, ordered by frame id.
pub fn load_inputs(frames: &Path, annotations: &Path) -> Result<Vec<(FrameRecord, JointSetUvd)>> {
    let records = read_frames(frames)?;
    if records.is_empty() {
        return Err(SfrError::InvalidInput(format!(
            "no frames in {}",
            frames.display()
        )));
    }
    let mut ann = read_annotations(annotations)?;
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let joints = ann.remove(&rec.id).ok_or_else(|| {
            SfrError::InvalidInput(format!("frame {} has no annotation rows", rec.id))
        })?;
        out.push((rec, joints));
    }
    out.sort_by_key(|(r, _)| r.id);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub out_dir: PathBuf,
    pub count: usize,
    pub spec: SynthSpec,
    pub binary: bool,
}

/// Nominal camera placement used for synthetic frames.
pub fn synthetic_geometry() -> FrameGeometry {
    let intrinsics = CameraIntrinsics {
        fx: 475.0,
        fy: 475.0,
        cx: 160.0,
        cy: 120.0,
    };
    let cube = NormalizationCube {
        center: [0.0, 0.0, 400.0],
        edge: 250.0,
    };
    let half = 0.5 * cube.edge * intrinsics.fx / cube.center[2];
    FrameGeometry {
        cube,
        intrinsics,
        crop: CropGeometry {
            x0: intrinsics.cx - half,
            y0: intrinsics.cy - half,
            width: 2.0 * half,
            height: 2.0 * half,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub frames: PathBuf,
    pub annotations: PathBuf,
    pub geometry: PathBuf,
    pub manifest: PathBuf,
}

/// Writes a seeded synthetic corpus: frames, annotations, geometry and a
/// manifest of per-scene seeds.
pub fn cmd_synth(opts: &SynthOptions) -> Result<SynthSummary> {
    let corpus = generate_corpus(&opts.spec, opts.count)?;
    fs::create_dir_all(&opts.out_dir)?;
    let frames: Vec<FrameRecord> = corpus
        .scenes
        .iter()
        .enumerate()
        .map(|(id, s)| FrameRecord {
            id: id as u64,
            frame: s.frame.clone(),
        })
        .collect();
    let annotations: Annotations = corpus
        .scenes
        .iter()
        .enumerate()
        .map(|(id, s)| (id as u64, s.joints.clone()))
        .collect();
    let geometry: BTreeMap<u64, FrameGeometry> = (0..opts.count as u64)
        .map(|id| (id, synthetic_geometry()))
        .collect();

    let summary = SynthSummary {
        frames: opts.out_dir.join(if opts.binary {
            "frames.sfrb"
        } else {
            "frames.sfrd"
        }),
        annotations: opts.out_dir.join("annotations.csv"),
        geometry: opts.out_dir.join("geometry.csv"),
        manifest: opts.out_dir.join("manifest.csv"),
    };
    write_frames(&summary.frames, &frames, opts.binary)?;
    write_annotations(&summary.annotations, &annotations)?;
    write_geometry(&summary.geometry, &geometry)?;
    let mut w = BufWriter::new(File::create(&summary.manifest)?);
    writeln!(w, "frame_id,seed")?;
    for entry in &corpus.manifest {
        writeln!(w, "{},{}", entry.index, entry.seed)?;
    }
    w.flush()?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct EncodeOptions {
    pub frames: PathBuf,
    pub annotations: PathBuf,
    pub out_dir: PathBuf,
    pub codec: CodecOptions,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncodeSummary {
    pub frames_encoded: usize,
    /// `(frame id, reason)` for each skipped frame.
    pub skipped: Vec<(u64, String)>,
    pub files: usize,
}

fn bundle_file_name(frame_id: u64, joint_id: usize, kind: &str) -> String {
    format!("f{frame_id:06}_j{joint_id:02}_{kind}.sfrb")
}

fn write_grid_file(path: &Path, grid: &Grid) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_grids_binary(&mut w, grid.n(), &[grid])?;
    w.flush()?;
    Ok(())
}

/// Writes an SFR bundle (heatmap and offset map grids plus manifest).
pub fn write_bundle(
    out_dir: &Path,
    entries: &[(u64, Vec<(Heatmap, crate::types::DepthOffsetMap)>)],
) -> Result<usize> {
    fs::create_dir_all(out_dir)?;
    let mut manifest = BufWriter::new(File::create(out_dir.join("manifest.csv"))?);
    writeln!(manifest, "frame_id,joint_id,kind,file")?;
    let mut files = 0;
    for (frame_id, joints) in entries {
        for (joint_id, (h, d)) in joints.iter().enumerate() {
            for (kind, grid) in [("heatmap", h.grid()), ("depthmap", d.grid())] {
                let name = bundle_file_name(*frame_id, joint_id, kind);
                write_grid_file(&out_dir.join(&name), grid)?;
                writeln!(manifest, "{frame_id},{joint_id},{kind},{name}")?;
                files += 1;
            }
        }
    }
    manifest.flush()?;
    Ok(files)
}

/// Encodes every joint of every frame into its heatmap and offset map.
/// Frames with a joint outside the pixel-center hull are skipped.
pub fn cmd_encode(opts: &EncodeOptions) -> Result<EncodeSummary> {
    let inputs = load_inputs(&opts.frames, &opts.annotations)?;
    let kernel = opts.codec.kernel()?;
    let mut summary = EncodeSummary::default();
    let mut entries = Vec::with_capacity(inputs.len());
    'frames: for (rec, joints) in &inputs {
        let img = opts.codec.to_repr(&rec.frame)?;
        let n = img.resolution();
        let mask = build_mask(&img);
        let mut encoded = Vec::with_capacity(joints.len());
        for (j, p) in joints.iter().enumerate() {
            let h = match encode_heatmap(p.u, p.v, n, &kernel) {
                Ok(h) => h,
                Err(e @ SfrError::OutOfHull { .. }) => {
                    summary.skipped.push((rec.id, format!("joint {j}: {e}")));
                    continue 'frames;
                }
                Err(e) => return Err(e),
            };
            let d = encode_depth_map(p.d, &h, &img, &mask)?;
            encoded.push((h, d));
        }
        entries.push((rec.id, encoded));
    }
    summary.frames_encoded = entries.len();
    summary.files = write_bundle(&opts.out_dir, &entries)?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct RoundtripOptions {
    pub frames: PathBuf,
    pub annotations: PathBuf,
    pub codec: CodecOptions,
    pub tol: f64,
    pub report: PathBuf,
    /// Optional prediction file with the decoded joints of fully decoded
    /// frames.
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointStatus {
    Pass,
    Fail,
    /// Too close to the border for the roundtrip guarantee; not gated.
    Boundary,
    /// Outside the pixel-center hull; not encodable, not gated.
    OutOfHull,
    /// Heatmap support entirely off the hand; counts as a failure.
    Unsupported,
}

impl JointStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            JointStatus::Pass => "pass",
            JointStatus::Fail => "fail",
            JointStatus::Boundary => "boundary",
            JointStatus::OutOfHull => "out_of_hull",
            JointStatus::Unsupported => "unsupported",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundtripRow {
    pub frame_id: u64,
    pub joint_id: usize,
    pub plane_residual: Option<f64>,
    pub depth_residual: Option<f64>,
    pub status: JointStatus,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundtripSummary {
    pub rows: Vec<RoundtripRow>,
    pub passed: usize,
    pub failed: usize,
    pub excluded: usize,
}

impl RoundtripSummary {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// Encodes and decodes every joint, comparing the result with the input.
/// A joint passes when both residuals are strictly below `tol`.
pub fn cmd_roundtrip(opts: &RoundtripOptions) -> Result<RoundtripSummary> {
    let inputs = load_inputs(&opts.frames, &opts.annotations)?;
    let kernel = opts.codec.kernel()?;
    let mut summary = RoundtripSummary::default();
    let mut predictions = Annotations::new();

    for (rec, joints) in &inputs {
        let img = opts.codec.to_repr(&rec.frame)?;
        let n = img.resolution();
        let com_kernel = ComKernel::new(n);
        let mask = build_mask(&img);
        let mut decoded = Vec::with_capacity(joints.len());
        for (j, p) in joints.iter().enumerate() {
            let mut row = RoundtripRow {
                frame_id: rec.id,
                joint_id: j,
                plane_residual: None,
                depth_residual: None,
                status: JointStatus::Fail,
            };
            let h = match encode_heatmap(p.u, p.v, n, &kernel) {
                Ok(h) => h,
                Err(SfrError::OutOfHull { .. }) => {
                    row.status = JointStatus::OutOfHull;
                    summary.excluded += 1;
                    summary.rows.push(row);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let (u, v) = decode_plane(&h, &com_kernel)?;
            row.plane_residual = Some((u - p.u).abs().max((v - p.v).abs()));
            let dmap = encode_depth_map(p.d, &h, &img, &mask)?;
            match decode_depth(&dmap, &h, &img, &mask) {
                Ok(d) => {
                    row.depth_residual = Some((d - p.d).abs());
                    decoded.push(JointUvd::new(u, v, d));
                }
                Err(SfrError::UnsupportedJoint { .. }) => row.status = JointStatus::Unsupported,
                Err(e) => return Err(e),
            }
            if row.status != JointStatus::Unsupported {
                row.status = if joint_near_border(p.u, p.v, n, opts.codec.kernel_k) {
                    JointStatus::Boundary
                } else if row.plane_residual.unwrap_or(f64::INFINITY) < opts.tol
                    && row.depth_residual.unwrap_or(f64::INFINITY) < opts.tol
                {
                    JointStatus::Pass
                } else {
                    JointStatus::Fail
                };
            }
            match row.status {
                JointStatus::Pass => summary.passed += 1,
                JointStatus::Boundary | JointStatus::OutOfHull => summary.excluded += 1,
                JointStatus::Fail | JointStatus::Unsupported => summary.failed += 1,
            }
            summary.rows.push(row);
        }
        if decoded.len() == joints.len() {
            // decoded joints can leave [0, 1] only through rounding at the hull
            let clamped = decoded
                .into_iter()
                .map(|q| {
                    JointUvd::new(
                        q.u.clamp(0.0, 1.0),
                        q.v.clamp(0.0, 1.0),
                        q.d.clamp(0.0, 1.0),
                    )
                })
                .collect();
            predictions.insert(rec.id, JointSetUvd::new(clamped)?);
        }
    }

    let mut w = BufWriter::new(File::create(&opts.report)?);
    writeln!(w, "frame_id,joint_id,plane_residual,depth_residual,status")?;
    for r in &summary.rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.frame_id,
            r.joint_id,
            fmt_opt(r.plane_residual),
            fmt_opt(r.depth_residual),
            r.status.as_str()
        )?;
    }
    w.flush()?;
    if let Some(path) = &opts.predictions {
        write_annotations(path, &predictions)?;
    }
    Ok(summary)
}

/// Gradient-check instance size used by the CLI.
pub const GRADCHECK_RESOLUTION: usize = 8;
pub const GRADCHECK_JOINTS: usize = 2;

pub fn cmd_gradcheck(seed: u64, instances: usize) -> Result<GradcheckReport> {
    run_gradcheck(seed, instances, GRADCHECK_RESOLUTION, GRADCHECK_JOINTS)
}

pub fn format_gradcheck(report: &GradcheckReport) -> String {
    format!(
        "gradcheck seed={} instances={} resolution={} joints={}\n\
         max_rel_plane={:e}\nmax_rel_depth={:e}\nmax_rel_stage={:e}\nstatus={}\n",
        report.seed,
        report.instances,
        report.resolution,
        report.joints,
        report.max_rel_plane,
        report.max_rel_depth,
        report.max_rel_stage,
        if report.passed() { "PASS" } else { "FAIL" }
    )
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub frames: PathBuf,
    pub annotations: PathBuf,
    pub frame_id: u64,
    pub codec: CodecOptions,
    pub config: FitConfig,
    pub weights: LossWeights,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub result: FitResult,
    pub target: JointSetUvd,
    pub max_error: f64,
}

/// Fits one frame's representations and writes `trace.csv`, `decoded.csv`
/// and the fitted SFR bundle under `sfr/`.
pub fn cmd_fit(opts: &FitOptions) -> Result<FitSummary> {
    let inputs = load_inputs(&opts.frames, &opts.annotations)?;
    let (rec, target) = inputs
        .into_iter()
        .find(|(r, _)| r.id == opts.frame_id)
        .ok_or_else(|| SfrError::InvalidInput(format!("frame {} not found", opts.frame_id)))?;
    let img = opts.codec.to_repr(&rec.frame)?;
    let kernel = opts.codec.kernel()?;
    let result = fit_representation(&target, &img, &kernel, &opts.config, &opts.weights)?;

    fs::create_dir_all(&opts.out_dir)?;
    let mut w = BufWriter::new(File::create(opts.out_dir.join("trace.csv"))?);
    write_trace(&mut w, &result.trace)?;
    w.flush()?;
    let mut decoded = Annotations::new();
    let clamped = result
        .decoded
        .iter()
        .map(|q| {
            JointUvd::new(
                q.u.clamp(0.0, 1.0),
                q.v.clamp(0.0, 1.0),
                q.d.clamp(0.0, 1.0),
            )
        })
        .collect();
    decoded.insert(rec.id, JointSetUvd::new(clamped)?);
    write_annotations(&opts.out_dir.join("decoded.csv"), &decoded)?;
    let entries = vec![(
        rec.id,
        result
            .heatmaps
            .iter()
            .cloned()
            .zip(result.depthmaps.iter().cloned())
            .collect(),
    )];
    write_bundle(&opts.out_dir.join("sfr"), &entries)?;

    Ok(FitSummary {
        max_error: result.max_coordinate_error(&target),
        result,
        target,
    })
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub predictions: PathBuf,
    pub ground_truth: PathBuf,
    pub geometry: PathBuf,
    pub out: PathBuf,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub error: MeanError,
    pub curve: Vec<f64>,
}

/// Millimeter-space joints for every frame of `ann`, using its geometry.
pub fn to_millimeters(
    ann: &Annotations,
    geometry: &BTreeMap<u64, FrameGeometry>,
) -> Result<Vec<Vec<Point3>>> {
    ann.iter()
        .map(|(id, set)| {
            let g = geometry
                .get(id)
                .ok_or_else(|| SfrError::InvalidInput(format!("no geometry for frame {id}")))?;
            uvd_to_xyz(set, &g.cube, &g.intrinsics, &g.crop)
        })
        .collect()
}

/// Mean 3D error and frames-under-threshold curve of predictions against
/// ground truth, written as a metrics CSV.
pub fn cmd_eval(opts: &EvalOptions) -> Result<EvalSummary> {
    let preds = read_annotations(&opts.predictions)?;
    let gts = read_annotations(&opts.ground_truth)?;
    let geometry = read_geometry(&opts.geometry)?;
    if preds.len() != gts.len() {
        return Err(SfrError::FrameCountMismatch {
            expected: gts.len(),
            got: preds.len(),
        });
    }
    for ((pid, p), (gid, g)) in preds.iter().zip(&gts) {
        if pid != gid {
            return Err(SfrError::InvalidInput(format!(
                "prediction frame {pid} does not match ground-truth frame {gid}"
            )));
        }
        if p.len() != g.len() {
            return Err(SfrError::JointCountMismatch {
                expected: g.len(),
                got: p.len(),
            });
        }
    }
    let pred_mm = to_millimeters(&preds, &geometry)?;
    let gt_mm = to_millimeters(&gts, &geometry)?;
    let error = mean_3d_error(&pred_mm, &gt_mm)?;
    let curve = frames_under_threshold(&pred_mm, &gt_mm, &opts.thresholds)?;
    let mut w = BufWriter::new(File::create(&opts.out)?);
    write_metrics(&mut w, &error, &opts.thresholds, &curve)?;
    w.flush()?;
    Ok(EvalSummary { error, curve })
}

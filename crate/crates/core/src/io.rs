//! File formats.
//!
//! * Frame file, text: header `SFRD1 <n> <count>`, then per frame a line
//!   `frame <id>` followed by `n` rows of `n` space-separated decimals.
//! * Frame file, binary: 16-byte header (`SFRB`, u32 n, u32 count, u32
//!   reserved = 0), then `count` grids of little-endian f32, row-major. Frame
//!   ids are the grid indices.
//! * Annotation / prediction CSV: `frame_id,joint_id,u,v,d`.
//! * Geometry CSV: per-frame cube, intrinsics and crop window.
//! * SFR bundle: one single-grid binary file per (frame, joint, kind) and a
//!   `manifest.csv` with `frame_id,joint_id,kind,file`.
//! * Metrics CSV: `[per_joint]` section with `joint_id,mean_mm` rows and an
//!   `overall` row, then a `[curve]` section with `threshold_mm,fraction`.
//! * Trace CSV: `iteration,L_uv,L_d,L_H,L_D,total`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SfrError};
use crate::fit::TraceRow;
use crate::metrics::{FrameGeometry, MeanError};
use crate::types::{
    CameraIntrinsics, CropGeometry, DepthFrame, Grid, JointSetUvd, JointUvd, NormalizationCube,
};

pub const TEXT_MAGIC: &str = "SFRD1";
pub const BINARY_MAGIC: &[u8; 4] = b"SFRB";

/// A normalized depth frame tagged with its id.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub id: u64,
    pub frame: DepthFrame,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> SfrError {
    SfrError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn check_uniform(frames: &[FrameRecord]) -> Result<usize> {
    let n = frames.first().map_or(0, |f| f.frame.resolution());
    if let Some(f) = frames.iter().find(|f| f.frame.resolution() != n) {
        return Err(SfrError::ShapeMismatch {
            expected: n,
            got: f.frame.resolution(),
        });
    }
    Ok(n)
}

pub fn write_frames_text(w: &mut impl Write, frames: &[FrameRecord]) -> Result<()> {
    let n = check_uniform(frames)?;
    writeln!(w, "{TEXT_MAGIC} {n} {}", frames.len())?;
    for rec in frames {
        writeln!(w, "frame {}", rec.id)?;
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|k| rec.frame.get(i, k).to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
    }
    Ok(())
}

pub fn write_grids_binary(w: &mut impl Write, n: usize, grids: &[&Grid]) -> Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(grids.len() as u32).to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    for g in grids {
        if g.n() != n {
            return Err(SfrError::ShapeMismatch {
                expected: n,
                got: g.n(),
            });
        }
        for &x in g.as_slice() {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_frames_binary(w: &mut impl Write, frames: &[FrameRecord]) -> Result<()> {
    let n = check_uniform(frames)?;
    let grids: Vec<&Grid> = frames.iter().map(|f| f.frame.grid()).collect();
    write_grids_binary(w, n, &grids)
}

pub fn read_grids_binary(path: &Path, bytes: &[u8]) -> Result<(usize, Vec<Grid>)> {
    if bytes.len() < 16 || &bytes[..4] != BINARY_MAGIC {
        return Err(parse_err(path, 1, "missing SFRB header"));
    }
    let word =
        |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (n, count) = (word(4), word(8));
    let expected = 16 + count * n * n * 4;
    if bytes.len() != expected {
        return Err(parse_err(
            path,
            1,
            format!(
                "expected {expected} bytes for {count} grids of {n}×{n}, found {}",
                bytes.len()
            ),
        ));
    }
    let grids = (0..count)
        .map(|g| {
            let start = 16 + g * n * n * 4;
            let values = bytes[start..start + n * n * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            Grid::from_vec(n, values)
        })
        .collect::<Result<_>>()?;
    Ok((n, grids))
}

/// Reads a text or binary frame file, detected by its magic.
pub fn read_frames(path: &Path) -> Result<Vec<FrameRecord>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.starts_with(BINARY_MAGIC) {
        let (_, grids) = read_grids_binary(path, &bytes)?;
        return grids
            .into_iter()
            .enumerate()
            .map(|(id, g)| {
                Ok(FrameRecord {
                    id: id as u64,
                    frame: DepthFrame::new(g)
                        .map_err(|e| parse_err(path, 1, format!("frame {id}: {e}")))?,
                })
            })
            .collect();
    }
    read_frames_text(path, BufReader::new(bytes.as_slice()))
}

fn read_frames_text(path: &Path, reader: impl BufRead) -> Result<Vec<FrameRecord>> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (ln, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != TEXT_MAGIC {
        return Err(parse_err(
            path,
            ln,
            format!("expected '{TEXT_MAGIC} <n> <count>' header"),
        ));
    }
    let n: usize = fields[1]
        .parse()
        .map_err(|_| parse_err(path, ln, format!("bad resolution '{}'", fields[1])))?;
    let count: usize = fields[2]
        .parse()
        .map_err(|_| parse_err(path, ln, format!("bad frame count '{}'", fields[2])))?;

    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let (ln, line) = lines.next().ok_or_else(|| {
            parse_err(
                path,
                0,
                format!("expected {count} frames, found {}", frames.len()),
            )
        })?;
        let line = line?;
        let id = line
            .strip_prefix("frame ")
            .and_then(|s| s.trim().parse::<u64>().ok())
            .ok_or_else(|| parse_err(path, ln, format!("expected 'frame <id>', found '{line}'")))?;
        let mut values = Vec::with_capacity(n * n);
        for _ in 0..n {
            let (ln, row) = lines
                .next()
                .ok_or_else(|| parse_err(path, 0, format!("frame {id}: truncated grid")))?;
            let row = row?;
            let before = values.len();
            for tok in row.split_whitespace() {
                let x: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(path, ln, format!("bad depth value '{tok}'")))?;
                values.push(x);
            }
            if values.len() - before != n {
                return Err(parse_err(
                    path,
                    ln,
                    format!("expected {n} values, found {}", values.len() - before),
                ));
            }
        }
        let frame =
            DepthFrame::from_vec(n, values).map_err(|e| parse_err(path, ln, e.to_string()))?;
        frames.push(FrameRecord { id, frame });
    }
    if let Some((ln, Ok(extra))) = lines.next() {
        if !extra.trim().is_empty() {
            return Err(parse_err(path, ln, "trailing data after last frame"));
        }
    }
    Ok(frames)
}

pub fn write_frames(path: &Path, frames: &[FrameRecord], binary: bool) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if binary {
        write_frames_binary(&mut w, frames)?;
    } else {
        write_frames_text(&mut w, frames)?;
    }
    w.flush()?;
    Ok(())
}

/// Deserialized rows of a headed CSV file with their 1-based line numbers.
fn csv_rows<T: serde::de::DeserializeOwned>(
    path: &Path,
) -> Result<Vec<(usize, std::result::Result<T, csv::Error>)>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, format!("malformed row: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        out.push((line, rec.deserialize(Some(&headers))));
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationRow {
    frame_id: u64,
    joint_id: usize,
    u: f64,
    v: f64,
    d: f64,
}

/// Joint sets keyed by frame id.
pub type Annotations = BTreeMap<u64, JointSetUvd>;

pub fn write_annotations(path: &Path, annotations: &Annotations) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (&frame_id, set) in annotations {
        for (joint_id, p) in set.iter().enumerate() {
            w.serialize(AnnotationRow {
                frame_id,
                joint_id,
                u: p.u,
                v: p.v,
                d: p.d,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads annotations; joint ids must run `0..J` in order within each frame.
pub fn read_annotations(path: &Path) -> Result<Annotations> {
    let mut rows: BTreeMap<u64, Vec<(usize, JointUvd, usize)>> = BTreeMap::new();
    for (line, rec) in csv_rows::<AnnotationRow>(path)? {
        let rec =
            rec.map_err(|e| parse_err(path, line, format!("malformed annotation row: {e}")))?;
        rows.entry(rec.frame_id).or_default().push((
            rec.joint_id,
            JointUvd::new(rec.u, rec.v, rec.d),
            line,
        ));
    }
    let mut out = Annotations::new();
    for (frame_id, joints) in rows {
        for (expected, (joint_id, _, line)) in joints.iter().enumerate() {
            if *joint_id != expected {
                return Err(parse_err(
                    path,
                    *line,
                    format!("frame {frame_id}: expected joint {expected}, found {joint_id}"),
                ));
            }
        }
        let line = joints.first().map_or(0, |j| j.2);
        let set = JointSetUvd::new(joints.into_iter().map(|j| j.1).collect())
            .map_err(|e| parse_err(path, line, format!("frame {frame_id}: {e}")))?;
        out.insert(frame_id, set);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct GeometryRow {
    frame_id: u64,
    center_x_mm: f64,
    center_y_mm: f64,
    center_z_mm: f64,
    cube_edge_mm: f64,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    crop_x0: f64,
    crop_y0: f64,
    crop_width: f64,
    crop_height: f64,
}

pub fn write_geometry(path: &Path, geometry: &BTreeMap<u64, FrameGeometry>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (&frame_id, g) in geometry {
        w.serialize(GeometryRow {
            frame_id,
            center_x_mm: g.cube.center[0],
            center_y_mm: g.cube.center[1],
            center_z_mm: g.cube.center[2],
            cube_edge_mm: g.cube.edge,
            fx: g.intrinsics.fx,
            fy: g.intrinsics.fy,
            cx: g.intrinsics.cx,
            cy: g.intrinsics.cy,
            crop_x0: g.crop.x0,
            crop_y0: g.crop.y0,
            crop_width: g.crop.width,
            crop_height: g.crop.height,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_geometry(path: &Path) -> Result<BTreeMap<u64, FrameGeometry>> {
    let mut out = BTreeMap::new();
    for (line, rec) in csv_rows::<GeometryRow>(path)? {
        let g = rec.map_err(|e| parse_err(path, line, format!("malformed geometry row: {e}")))?;
        let cube = NormalizationCube::new(
            [g.center_x_mm, g.center_y_mm, g.center_z_mm],
            g.cube_edge_mm,
        )
        .map_err(|e| parse_err(path, line, e.to_string()))?;
        let intrinsics = CameraIntrinsics::new(g.fx, g.fy, g.cx, g.cy)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        let crop = CropGeometry {
            x0: g.crop_x0,
            y0: g.crop_y0,
            width: g.crop_width,
            height: g.crop_height,
        };
        out.insert(
            g.frame_id,
            FrameGeometry {
                cube,
                intrinsics,
                crop,
            },
        );
    }
    Ok(out)
}

pub fn write_metrics(
    w: &mut impl Write,
    error: &MeanError,
    thresholds: &[f64],
    curve: &[f64],
) -> Result<()> {
    writeln!(w, "[per_joint]")?;
    writeln!(w, "joint_id,mean_mm")?;
    for (j, e) in error.per_joint.iter().enumerate() {
        writeln!(w, "{j},{e}")?;
    }
    writeln!(w, "overall,{}", error.overall)?;
    writeln!(w, "[curve]")?;
    writeln!(w, "threshold_mm,fraction")?;
    for (t, f) in thresholds.iter().zip(curve) {
        writeln!(w, "{t},{f}")?;
    }
    Ok(())
}

pub fn write_trace(w: &mut impl Write, trace: &[TraceRow]) -> Result<()> {
    writeln!(w, "iteration,L_uv,L_d,L_H,L_D,total")?;
    for r in trace {
        let p = &r.parts;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.iteration, p.uv, p.d, p.heatmap, p.depthmap, r.total
        )?;
    }
    Ok(())
}

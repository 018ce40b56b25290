//! Mean 3D error and the frames-under-threshold curve in millimeters.

use sfr_core::commands::synthetic_geometry;
use sfr_core::metrics::{default_thresholds, frames_under_threshold, mean_3d_error, uvd_to_xyz};
use sfr_core::synth::{generate_corpus, SynthSpec};
use sfr_core::{JointSetUvd, JointUvd};

fn main() -> sfr_core::Result<()> {
    let corpus = generate_corpus(&SynthSpec::default(), 50)?;
    let g = synthetic_geometry();
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for (i, scene) in corpus.scenes.iter().enumerate() {
        // predictions drift a little further off with every frame
        let shift = 0.0005 * i as f64;
        let noisy = scene
            .joints
            .iter()
            .map(|p| JointUvd::new(p.u + shift, p.v, p.d))
            .collect();
        preds.push(uvd_to_xyz(
            &JointSetUvd::new(noisy)?,
            &g.cube,
            &g.intrinsics,
            &g.crop,
        )?);
        gts.push(uvd_to_xyz(&scene.joints, &g.cube, &g.intrinsics, &g.crop)?);
    }
    let err = mean_3d_error(&preds, &gts)?;
    println!("per joint {:?}", err.per_joint);
    println!("overall {:.4} mm", err.overall);
    let thresholds = default_thresholds();
    let curve = frames_under_threshold(&preds, &gts, &thresholds)?;
    for (t, f) in thresholds.iter().zip(&curve).step_by(2).take(8) {
        println!("< {t:>2} mm: {f:.2}");
    }
    Ok(())
}

//! Raw millimeter depth to a normalized crop, a representation-scale frame
//! and a rotated training sample.

use sfr_core::preprocess::{
    augment, center_of_mass, crop_normalize, downsample_repr, remove_background, PreprocessConfig,
    RawFrame,
};
use sfr_core::{CameraIntrinsics, JointSetUvd, JointUvd};

fn main() -> sfr_core::Result<()> {
    let (w, h) = (320, 240);
    let intr = CameraIntrinsics::new(475.0, 475.0, 160.0, 120.0)?;
    // a sphere of radius 60 mm at 450 mm in front of a wall at 900 mm
    let depth = (0..w * h)
        .map(|idx| {
            let (x, y) = ((idx % w) as f64 - 160.0, (idx / w) as f64 - 120.0);
            let r2 = x * x + y * y;
            if r2 < 60.0 * 60.0 {
                450.0 - (3600.0 - r2).sqrt() * 0.5
            } else {
                900.0
            }
        })
        .collect();
    let raw = RawFrame::new(w, h, depth, intr)?;
    let cfg = PreprocessConfig::default();

    let joints_mm = [[0.0, 0.0, 430.0], [20.0, -15.0, 440.0]];
    let hand = remove_background(&raw, &joints_mm, &cfg)?;
    println!(
        "{} of {} pixels kept",
        hand.valid_count(),
        raw.valid_count()
    );
    println!("center of mass {:?}", center_of_mass(&hand)?);

    let crop = crop_normalize(&hand, &cfg)?;
    println!(
        "crop {}x{} with {} on-hand pixels, window {:?}",
        crop.frame.resolution(),
        crop.frame.resolution(),
        crop.frame.on_hand_count(),
        crop.geometry
    );
    let repr = downsample_repr(&crop.frame, cfg.repr_size)?;
    println!(
        "representation frame {}x{}",
        repr.resolution(),
        repr.resolution()
    );

    let joints = JointSetUvd::new(vec![
        JointUvd::new(0.5, 0.5, 0.4),
        JointUvd::new(0.55, 0.45, 0.45),
    ])?;
    let (_, rotated, angle) = augment(&repr, &joints, &cfg, 11)?;
    println!("rotated by {angle:.2} degrees: {:?}", rotated.joints());
    Ok(())
}

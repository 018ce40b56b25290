//! Fit representations through the decoders under each supervision mode and
//! compare the decoded coordinates with the target.

use sfr_core::fit::{fit_representation, FitConfig, FitMode};
use sfr_core::losses::LossWeights;
use sfr_core::plane::GaussKernel;
use sfr_core::synth::{generate_scene, SynthSpec};

fn main() -> sfr_core::Result<()> {
    let spec = SynthSpec {
        resolution: 16,
        n_joints: 2,
        blob_radius: 3.0,
        margin: 3.0,
        ..SynthSpec::default()
    };
    let scene = generate_scene(&spec.with_seed(3))?;
    let kernel = GaussKernel::with_default_sigma(3)?;
    let weights = LossWeights::default();

    for mode in [
        FitMode::Full,
        FitMode::RepresentationUnsupervised,
        FitMode::CoordinateUnsupervised,
    ] {
        let cfg = FitConfig {
            mode,
            max_iters: 2000,
            ..FitConfig::default()
        };
        let fit = fit_representation(&scene.joints, &scene.frame, &kernel, &cfg, &weights)?;
        let last = fit.trace.last().expect("trace has the initial row");
        println!(
            "{:<28} total={:.3e} max coordinate error={:.3e}",
            mode.as_str(),
            last.total,
            fit.max_coordinate_error(&scene.joints)
        );
    }
    Ok(())
}

//! Encode a joint depth as per-pixel offsets from the observed surface and
//! decode it with the heatmap-weighted on-hand average.

use sfr_core::depth::{build_mask, decode_depth, encode_depth_map, on_hand_mass};
use sfr_core::plane::{encode_heatmap, GaussKernel};
use sfr_core::synth::{generate_scene, SynthSpec};

fn main() -> sfr_core::Result<()> {
    let scene = generate_scene(&SynthSpec::default().with_seed(7))?;
    let kernel = GaussKernel::with_default_sigma(7)?;
    let mask = build_mask(&scene.frame);
    println!("{} on-hand pixels", mask.count());

    for (j, p) in scene.joints.iter().enumerate() {
        let h = encode_heatmap(p.u, p.v, scene.frame.resolution(), &kernel)?;
        let offsets = encode_depth_map(p.d, &h, &scene.frame, &mask)?;
        let d = decode_depth(&offsets, &h, &scene.frame, &mask)?;
        println!(
            "joint {j}: d={:.6} decoded={:.6} on-hand mass={:.3}",
            p.d,
            d,
            on_hand_mass(&h, &mask)
        );
    }
    Ok(())
}

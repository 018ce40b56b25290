//! Generate a seeded corpus on disk and run encode and roundtrip over it.

use sfr_core::commands::{
    cmd_encode, cmd_roundtrip, cmd_synth, CodecOptions, EncodeOptions, RoundtripOptions,
    SynthOptions,
};
use sfr_core::synth::SynthSpec;

fn main() -> sfr_core::Result<()> {
    let dir = std::env::temp_dir().join("sfr-synthetic-corpus");
    let files = cmd_synth(&SynthOptions {
        out_dir: dir.clone(),
        count: 10,
        spec: SynthSpec::default().with_seed(5),
        binary: true,
    })?;
    let codec = CodecOptions::default();
    let enc = cmd_encode(&EncodeOptions {
        frames: files.frames.clone(),
        annotations: files.annotations.clone(),
        out_dir: dir.join("bundle"),
        codec,
    })?;
    println!(
        "encoded {} frames into {} files",
        enc.frames_encoded, enc.files
    );
    let rt = cmd_roundtrip(&RoundtripOptions {
        frames: files.frames,
        annotations: files.annotations,
        codec,
        tol: 1e-6,
        report: dir.join("roundtrip.csv"),
        predictions: None,
    })?;
    println!(
        "roundtrip: {} passed, {} failed, {} excluded",
        rt.passed, rt.failed, rt.excluded
    );
    println!("outputs in {}", dir.display());
    Ok(())
}

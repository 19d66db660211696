//! Generate a synthetic timeline with planted scene cuts and write it as TDCF.
//!
//! ```bash
//! cargo run --release -p tdc --example generate_timeline -- /tmp/clip.tdcf
//! ```

use tdc::segmenter::frame_similarities;
use tdc::timeline::{read_tdcf, synth_generate, write_tdcf, DescriptorMode, SynthSpec};

fn main() -> tdc::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| std::env::temp_dir().join("clip.tdcf").display().to_string());
    let spec = SynthSpec {
        seed: 3,
        frames: 60,
        boundaries: vec![20, 40],
        ..SynthSpec::default()
    };
    let tl = synth_generate(&spec)?;
    write_tdcf(&tl, &path)?;
    let back = read_tdcf(&path)?;
    assert_eq!(back, tl);

    println!(
        "wrote {path}: {} frames, {}x{} visual, {}x{} audio, {}-d descriptors",
        tl.frames(),
        tl.visual_tokens(),
        tl.visual_dim(),
        tl.audio_tokens(),
        tl.audio_dim(),
        tl.descriptor_dim()
    );
    let sims = frame_similarities(&tl, DescriptorMode::Stored)?;
    for (t, s) in sims.iter().enumerate() {
        let mark = if spec.boundaries.contains(&(t + 1)) { "  <- planted cut" } else { "" };
        println!("sim({t:2},{:2}) = {s:+.4}{mark}", t + 1);
    }
    Ok(())
}

//! Segment, window and compress a timeline into a TDC stream, then write it
//! to disk and read it back.
//!
//! ```bash
//! cargo run --release -p tdc --example compress_video
//! ```

use tdc::compressor::{read_stream, write_stream, Compressor, Provenance, TdcConfig};
use tdc::timeline::{synth_generate, tokenize_text, SynthSpec};

fn main() -> tdc::Result<()> {
    let tl = synth_generate(&SynthSpec {
        seed: 1,
        frames: 60,
        boundaries: vec![20, 40],
        ..SynthSpec::default()
    })?;
    let compressor = Compressor::new(TdcConfig::default())?;
    let plan = compressor.plan(&tl)?;
    for w in &plan.windows {
        println!(
            "window {:2} scene {} static {:2} dynamic {:?}",
            w.index, w.scene, w.static_frame, w.dynamic_frames
        );
    }

    let started = std::time::Instant::now();
    let stream = compressor.encode(&tl, &tokenize_text("what is the person holding"))?;
    println!(
        "{} tokens x {} dims in {:.2?}: {} static visual, {} static audio, {} sep, {} dynamic",
        stream.len(),
        stream.dim(),
        started.elapsed(),
        stream.count(Provenance::StaticVisual),
        stream.count(Provenance::StaticAudio),
        stream.count(Provenance::Sep),
        stream.count(Provenance::Dynamic),
    );

    let path = std::env::temp_dir().join("clip.tdcs");
    write_stream(&stream, &path)?;
    let back = read_stream(&path)?;
    println!("round trip through {}: {} tokens, meta equal = {}", path.display(), back.len(), back.meta() == stream.meta());
    Ok(())
}

//! Scene segmentation under different caps and thresholds.
//!
//! ```bash
//! cargo run --release -p tdc --example segment_scenes
//! ```

use tdc::segmenter::{segment_scenes, SegmenterConfig};
use tdc::timeline::{synth_generate, SynthSpec};

fn main() -> tdc::Result<()> {
    let planted = synth_generate(&SynthSpec {
        seed: 11,
        frames: 60,
        boundaries: vec![20, 40],
        ..SynthSpec::default()
    })?;
    let p = segment_scenes(&planted, &SegmenterConfig::default())?;
    println!("planted {{20, 40}} -> scenes {:?}", p.scenes());

    // Two far-apart centers, alternating every frame: every pair is a candidate.
    let alternating = synth_generate(&SynthSpec {
        seed: 5,
        frames: 100,
        boundaries: (1..100).collect(),
        centers: Some(
            (0..100)
                .map(|i| {
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    (0..32).map(|d| sign * if d % 2 == 0 { 1.0 } else { 0.5 }).collect()
                })
                .collect(),
        ),
        ..SynthSpec::default()
    })?;
    for max_scenes in [1, 24, 48] {
        let cfg = SegmenterConfig {
            max_scenes,
            tau: 0.99,
            ..SegmenterConfig::default()
        };
        let p = segment_scenes(&alternating, &cfg)?;
        println!(
            "alternating, S_max={max_scenes:2}: {:2} scenes, first cuts {:?}",
            p.scene_count(),
            &p.boundaries()[..p.boundaries().len().min(6)]
        );
    }
    Ok(())
}

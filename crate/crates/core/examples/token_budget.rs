//! Token accounting against the dense per-frame baseline.
//!
//! ```bash
//! cargo run --release -p tdc --example token_budget
//! ```

use tdc::compressor::{make_windows, token_budget, DEFAULT_WINDOW};
use tdc::segmenter::{segment_scenes, ScenePartition, SegmenterConfig};
use tdc::timeline::{synth_generate, SynthSpec};

fn main() -> tdc::Result<()> {
    let single = synth_generate(&SynthSpec { seed: 0, frames: 60, ..SynthSpec::default() })?;
    let plan = make_windows(&ScenePartition::single(60)?, DEFAULT_WINDOW)?;
    for k in [16, 32] {
        let r = token_budget(&single, &plan, k);
        println!("single scene, K={k}: total {} naive {} ratio {:.3}", r.total, r.naive, r.ratio);
    }

    let three = synth_generate(&SynthSpec {
        seed: 0,
        frames: 60,
        boundaries: vec![20, 40],
        ..SynthSpec::default()
    })?;
    let plan = make_windows(&segment_scenes(&three, &SegmenterConfig::default())?, DEFAULT_WINDOW)?;
    let r = token_budget(&three, &plan, 16);
    println!("three scenes, K=16: total {} naive {} ratio {:.3}", r.total, r.naive, r.ratio);
    for w in &r.windows {
        println!("  window {:2} (scene {}, {} frames): {} tokens", w.window, w.scene, w.frames, w.tokens);
    }

    for window in [1, 4, 8, 16, 60] {
        let plan = make_windows(&ScenePartition::single(60)?, window)?;
        let r = token_budget(&single, &plan, 16);
        println!("N={window:2}: total {:5} ratio {:.2}", r.total, r.ratio);
    }
    Ok(())
}

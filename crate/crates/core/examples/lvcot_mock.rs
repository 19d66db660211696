//! Segment-then-integrate question answering with a scripted answerer.
//!
//! ```bash
//! cargo run --release -p tdc --example lvcot_mock
//! ```

use tdc::compressor::{Compressor, TdcConfig};
use tdc::lvcot::{mock_script, run_lvcot, LvcotConfig};
use tdc::qformer::QFormerConfig;
use tdc::timeline::{synth_generate, SynthSpec};

fn main() -> tdc::Result<()> {
    let tl = synth_generate(&SynthSpec {
        seed: 2,
        frames: 90,
        boundaries: vec![30, 60],
        visual_tokens: 24,
        audio_tokens: 8,
        ..SynthSpec::default()
    })?;
    let compressor = Compressor::new(TdcConfig {
        qformer: QFormerConfig { num_queries: 4, ..QFormerConfig::default() },
        ..TdcConfig::default()
    })?;
    let answerer = mock_script([
        "a dog runs across a lawn",
        "the dog picks up a red ball",
        "the ball is dropped into a pool",
        "red",
    ]);
    let trace = run_lvcot(&tl, "what colour is the ball?", &answerer, &LvcotConfig::default(), &compressor)?;
    for s in &trace.segments {
        println!("{} {} tokens -> {:?}", s.span.tag(), s.stream_tokens, s.answer);
    }
    println!("--- final prompt ({} tokens of video) ---", trace.final_stream_tokens);
    println!("{}", trace.final_prompt);
    println!("--- answer after {} calls: {}", trace.answerer_calls, trace.final_answer);
    Ok(())
}

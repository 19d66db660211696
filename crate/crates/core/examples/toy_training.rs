//! Plain gradient descent on the reconstruction objective, end to end
//! through the compressor.
//!
//! ```bash
//! cargo run --release -p tdc --example toy_training -- 200 0.05
//! ```

use tdc::qformer::{init_params, reconstruction_loss, train_step, QFormerConfig, TrainExample};
use tdc::timeline::{synth_generate, tokenize_text, SynthSpec};

fn main() -> tdc::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let lr: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.05);

    let cfg = QFormerConfig::small();
    let tl = synth_generate(&SynthSpec {
        seed: 7,
        frames: 16,
        boundaries: vec![8],
        visual_tokens: 12,
        audio_tokens: 6,
        visual_dim: cfg.visual_dim,
        audio_dim: cfg.audio_dim,
        descriptor_dim: 8,
        ..SynthSpec::default()
    })?;
    let text = tokenize_text("what changes in this clip");
    let batch: Vec<TrainExample> = (0..tl.frames())
        .filter(|t| t % 8 != 0)
        .map(|t| TrainExample {
            static_visual: tl.visual(t - t % 8).clone(),
            visual: tl.visual(t).clone(),
            audio: tl.audio(t).clone(),
            text: text.clone(),
        })
        .collect();

    let mut params = init_params(&cfg)?;
    let initial = reconstruction_loss(&params, &batch)?;
    println!("{} examples, {} parameters, initial loss {initial:.6}", batch.len(), params.parameter_count());
    for step in 0..steps {
        let (next, loss) = train_step(&params, &batch, lr)?;
        params = next;
        if step % 20 == 0 {
            println!("step {step:4}  loss {loss:.6}");
        }
    }
    let last = reconstruction_loss(&params, &batch)?;
    println!("final loss {last:.6} ({:.1}% of initial)", 100.0 * last / initial);
    Ok(())
}

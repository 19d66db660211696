#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdc::compressor::{Provenance, TdcStream};
use tdc::numkernel::Matrix;
use tdc::timeline::VideoTimeline;

/// Cut after `t` iff `sims[t] < tau` and fewer than `max_scenes - 1` other
/// candidates beat it (lower similarity, earlier index on ties).
pub fn segmentation_oracle(sims: &[f64], tau: f64, max_scenes: usize) -> Vec<usize> {
    let candidates: Vec<usize> = (0..sims.len()).filter(|&t| sims[t] < tau).collect();
    candidates
        .iter()
        .filter(|&&t| {
            let better = candidates
                .iter()
                .filter(|&&u| sims[u] < sims[t] || (sims[u] == sims[t] && u < t))
                .count();
            better + 1 < max_scenes
        })
        .map(|&t| t + 1)
        .collect()
}

/// Scene-by-scene tally of the stream layout: for every window a static
/// visual run, a static audio run, one separator, then dynamic tokens.
pub fn walk_stream(stream: &TdcStream) -> usize {
    let meta = stream.meta();
    let mut i = 0;
    while i < meta.len() {
        let window = meta[i].window;
        for p in [Provenance::StaticVisual, Provenance::StaticAudio] {
            while i < meta.len() && meta[i].window == window && meta[i].provenance == p {
                i += 1;
            }
        }
        assert_eq!(meta[i].provenance, Provenance::Sep, "separator expected at {i}");
        i += 1;
        while i < meta.len() && meta[i].window == window && meta[i].provenance == Provenance::Dynamic {
            i += 1;
        }
    }
    i
}

/// Entries are f32-representable so file round trips can be compared bitwise.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0f32..1.0) as f64).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// A timeline with random tokens and descriptors drawn from a handful of
/// prototype vectors, so exact ties and threshold crossings both occur.
pub fn random_timeline(seed: u64, frames: usize, vt: usize, at: usize, dim: usize) -> VideoTimeline {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let protos: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0f32..1.0) as f64).collect())
        .collect();
    let descriptors = (0..frames)
        .map(|_| {
            let p = &protos[rng.gen_range(0..protos.len())];
            if rng.gen_bool(0.5) {
                p.clone()
            } else {
                p.iter().map(|v| (v + rng.gen_range(-0.3..0.3)) as f32 as f64).collect()
            }
        })
        .collect();
    let visual = (0..frames).map(|_| random_matrix(&mut rng, vt, dim)).collect();
    let audio = (0..frames).map(|_| random_matrix(&mut rng, at, dim)).collect();
    VideoTimeline::new(visual, audio, descriptors).unwrap()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

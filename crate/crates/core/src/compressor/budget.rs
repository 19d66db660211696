use serde::{Deserialize, Serialize};

use super::WindowPlan;
use crate::timeline::VideoTimeline;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBudget {
    pub window: usize,
    pub scene: usize,
    pub static_frame: usize,
    pub frames: usize,
    pub tokens: usize,
}

/// Token counts handed to the language model, against the dense baseline of
/// every visual and audio token of every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub frames: usize,
    pub scenes: usize,
    pub visual_tokens_per_frame: usize,
    pub audio_tokens_per_frame: usize,
    pub queries_per_frame: usize,
    pub windows: Vec<WindowBudget>,
    pub total: usize,
    pub naive: usize,
    pub ratio: f64,
}

/// Per window: `M_v + M_a + 1 + (n_w - 1) * K`.
pub fn token_budget(tl: &VideoTimeline, plan: &WindowPlan, queries_per_frame: usize) -> BudgetReport {
    let mv = tl.visual_tokens();
    let ma = tl.audio_tokens();
    let windows: Vec<WindowBudget> = plan
        .windows
        .iter()
        .map(|w| WindowBudget {
            window: w.index,
            scene: w.scene,
            static_frame: w.static_frame,
            frames: w.len(),
            tokens: mv + ma + 1 + (w.len() - 1) * queries_per_frame,
        })
        .collect();
    let total = windows.iter().map(|w| w.tokens).sum();
    let naive = tl.frames() * (mv + ma);
    BudgetReport {
        frames: tl.frames(),
        scenes: plan.scene_count,
        visual_tokens_per_frame: mv,
        audio_tokens_per_frame: ma,
        queries_per_frame,
        windows,
        total,
        naive,
        ratio: naive as f64 / total as f64,
    }
}

//! Training-free long-video chain of thought.
//!
//! The timeline is split into `M` equal-length spans. Each span is encoded
//! on its own and the answerer is asked for notes relevant to the question.
//! The notes are then tagged with their time interval, concatenated, and
//! handed back together with the whole-video stream for the final answer.

use std::collections::VecDeque;
use std::ops::Range;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compressor::{Compressor, TdcStream};
use crate::error::{Result, TdcError};
use crate::timeline::{fnv1a, tokenize_text, VideoTimeline};

pub const DEFAULT_SEGMENTS: usize = 3;
pub const DEFAULT_SEGMENT_TEMPLATE: &str =
    "Summarize the information in this segment relevant to: {question}";
pub const DEFAULT_FINAL_TEMPLATE: &str =
    "{notes}\nAnswer the question using the whole video and the notes above: {question}";

/// The model being orchestrated.
pub trait Answerer: Send + Sync {
    fn answer(&self, prompt: &str, stream: &TdcStream) -> std::result::Result<String, String>;

    /// Whether segment calls may be issued concurrently.
    fn concurrent(&self) -> bool {
        false
    }
}

/// Replays a fixed list of answers in call order.
#[derive(Debug)]
pub struct MockAnswerer {
    script: Mutex<VecDeque<String>>,
    calls: Mutex<usize>,
}

impl MockAnswerer {
    pub fn remaining(&self) -> usize {
        self.script.lock().expect("mock script lock").len()
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().expect("mock call counter lock")
    }
}

impl Answerer for MockAnswerer {
    fn answer(&self, _prompt: &str, _stream: &TdcStream) -> std::result::Result<String, String> {
        let mut calls = self.calls.lock().expect("mock call counter lock");
        *calls += 1;
        self.script
            .lock()
            .expect("mock script lock")
            .pop_front()
            .ok_or_else(|| format!("mock script exhausted on call {calls}"))
    }
}

pub fn mock_script<S: Into<String>>(answers: impl IntoIterator<Item = S>) -> MockAnswerer {
    MockAnswerer {
        script: Mutex::new(answers.into_iter().map(Into::into).collect()),
        calls: Mutex::new(0),
    }
}

/// Answers with a digest of its inputs.
#[derive(Debug, Default, Clone, Copy)]
pub struct EchoAnswerer;

impl Answerer for EchoAnswerer {
    fn answer(&self, prompt: &str, stream: &TdcStream) -> std::result::Result<String, String> {
        let mut bytes = prompt.as_bytes().to_vec();
        for v in stream.embeddings().data() {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        Ok(format!("echo:{}:{:016x}", stream.len(), fnv1a(&bytes)))
    }

    fn concurrent(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LvcotConfig {
    pub segments: usize,
    pub segment_template: String,
    pub final_template: String,
}

impl Default for LvcotConfig {
    fn default() -> Self {
        Self {
            segments: DEFAULT_SEGMENTS,
            segment_template: DEFAULT_SEGMENT_TEMPLATE.into(),
            final_template: DEFAULT_FINAL_TEMPLATE.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    /// `[{start}s-{end}s]:`
    pub fn tag(&self) -> String {
        format!("[{}s-{}s]:", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub span: Span,
    pub prompt: String,
    pub answer: String,
    pub stream_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LvcotTrace {
    pub question: String,
    pub spans: Vec<Span>,
    pub segments: Vec<SegmentRecord>,
    pub final_prompt: String,
    pub final_answer: String,
    pub final_stream_tokens: usize,
    pub answerer_calls: usize,
}

/// `M` contiguous spans over `[0, T)`, sizes differing by at most one,
/// longer spans first.
pub fn split_spans(frames: usize, segments: usize) -> Result<Vec<Span>> {
    if segments == 0 || segments > frames {
        return Err(TdcError::Argument(format!(
            "cannot split {frames} seconds into {segments} segments"
        )));
    }
    let base = frames / segments;
    let extra = frames % segments;
    let mut start = 0;
    Ok((0..segments)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let span = Span { start, end: start + len };
            start += len;
            span
        })
        .collect())
}

/// Single-pass `{key}` substitution; text produced by a substitution is never
/// rescanned.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (key, value) in vars {
            let placeholder = format!("{{{key}}}");
            if tail.starts_with(&placeholder) {
                out.push_str(value);
                rest = &tail[placeholder.len()..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

/// The interval-tagged notes block, one line per segment.
pub fn reasoning_block(segments: &[SegmentRecord]) -> String {
    segments
        .iter()
        .map(|s| format!("{} {}", s.span.tag(), s.answer))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn run_lvcot(
    tl: &VideoTimeline,
    question: &str,
    answerer: &dyn Answerer,
    cfg: &LvcotConfig,
    compressor: &Compressor,
) -> Result<LvcotTrace> {
    let spans = split_spans(tl.frames(), cfg.segments)?;
    let text = tokenize_text(question);
    let segment_prompt = render_template(&cfg.segment_template, &[("question", question)]);

    let streams = spans
        .par_iter()
        .map(|s| compressor.encode_range(tl, s.range(), &text))
        .collect::<Result<Vec<_>>>()?;

    let ask = |i: usize| -> Result<SegmentRecord> {
        let span = spans[i];
        let answer = answerer.answer(&segment_prompt, &streams[i]).map_err(|e| {
            TdcError::Orchestration(format!("segment {} {}: {e}", i + 1, span.tag().trim_end_matches(':')))
        })?;
        Ok(SegmentRecord {
            span,
            prompt: segment_prompt.clone(),
            answer,
            stream_tokens: streams[i].len(),
        })
    };
    let segments = if answerer.concurrent() {
        (0..spans.len()).into_par_iter().map(ask).collect::<Result<Vec<_>>>()?
    } else {
        (0..spans.len()).map(ask).collect::<Result<Vec<_>>>()?
    };

    let notes = reasoning_block(&segments);
    let final_prompt = render_template(&cfg.final_template, &[("notes", &notes), ("question", question)]);
    let whole = compressor.encode(tl, &text)?;
    let final_answer = answerer
        .answer(&final_prompt, &whole)
        .map_err(|e| TdcError::Orchestration(format!("final call: {e}")))?;

    Ok(LvcotTrace {
        question: question.to_string(),
        answerer_calls: segments.len() + 1,
        spans,
        segments,
        final_prompt,
        final_answer,
        final_stream_tokens: whole.len(),
    })
}

//! `tdc` command line.
//!
//! Every invocation prints exactly one JSON record on stdout on success, or
//! a diagnostic on stderr on failure. Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | usage: unknown flag, bad value, invalid argument |
//! | 2 | I/O or file-format error |
//! | 3 | numeric: shape, degenerate input, non-finite values, failed gradient check |
//! | 4 | orchestration: answerer failure or exhausted script |

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::compressor::{
    assemble_tdc, count_stream_tokens, encode_stream, make_windows, token_budget, Compressor,
    Provenance, TdcConfig, DEFAULT_WINDOW,
};
use crate::error::TdcError;
use crate::lvcot::{mock_script, run_lvcot, Answerer, EchoAnswerer, LvcotConfig, DEFAULT_SEGMENTS};
use crate::qformer::{grad_check, load_checkpoint, QFormerConfig, QueryType, DEFAULT_QUERIES};
use crate::segmenter::{
    frame_similarities, segment_scenes, SegmenterConfig, DEFAULT_MAX_SCENES, DEFAULT_TAU,
};
use crate::timeline::{
    read_tdcf, synth_generate, tokenize_text, write_tdcf, DescriptorMode, SynthSpec,
    DEFAULT_AUDIO_TOKENS, DEFAULT_DIM, DEFAULT_VISUAL_TOKENS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_ORCHESTRATION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "tdc", version, about = "Temporal dynamic context compression for long videos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic timeline (TDCF file).
    Gen(GenArgs),
    /// Segment a timeline into scenes.
    Segment(SegmentArgs),
    /// Compress a timeline into a TDC stream (TDCS file).
    Compress(CompressArgs),
    /// Report the token budget of a timeline.
    Budget(BudgetArgs),
    /// Run long-video chain of thought against a scripted or echo answerer.
    Lvcot(LvcotArgs),
    /// Finite-difference check of the compressor gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 60)]
    frames: usize,
    /// Comma-separated planted cut indices.
    #[arg(long, value_delimiter = ',')]
    boundaries: Vec<usize>,
    /// Per-entry noise standard deviation (design default).
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Visual, audio and descriptor widths: one value for all, or `v,a,d`.
    #[arg(long, value_delimiter = ',', default_value = "32")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_VISUAL_TOKENS)]
    visual_tokens: usize,
    #[arg(long, default_value_t = DEFAULT_AUDIO_TOKENS)]
    audio_tokens: usize,
}

#[derive(Debug, Args)]
struct SegmentOpts {
    /// Scene cap.
    #[arg(long, default_value_t = DEFAULT_MAX_SCENES)]
    max_segments: usize,
    /// Similarity threshold below which a cut is proposed (design default).
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// Descriptor source: stored or pooled.
    #[arg(long, default_value = "stored")]
    descriptor: String,
}

impl SegmentOpts {
    fn config(&self) -> Result<SegmenterConfig, TdcError> {
        let descriptor = match self.descriptor.as_str() {
            "stored" => DescriptorMode::Stored,
            "pooled" => DescriptorMode::Pooled,
            other => {
                return Err(TdcError::Argument(format!(
                    "unknown descriptor mode {other:?} (expected stored or pooled)"
                )))
            }
        };
        let cfg = SegmenterConfig {
            max_scenes: self.max_segments,
            tau: self.tau,
            descriptor,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    seg: SegmentOpts,
}

#[derive(Debug, Args)]
struct EncoderOpts {
    #[command(flatten)]
    seg: SegmentOpts,
    /// Window length N (design default).
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    /// Query tokens per compressed frame.
    #[arg(long, default_value_t = DEFAULT_QUERIES)]
    k: usize,
    /// avgpool or learned.
    #[arg(long, default_value = "avgpool")]
    query_type: String,
    /// Parameter seed when no checkpoint is given.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable instruction-text conditioning.
    #[arg(long)]
    no_text_conditioning: bool,
    /// Load compressor parameters from a TDCP checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl EncoderOpts {
    fn compressor(&self, visual_dim: usize, audio_dim: usize) -> Result<Compressor, TdcError> {
        let segmenter = self.seg.config()?;
        if let Some(path) = &self.checkpoint {
            let params = load_checkpoint(path)?;
            return Ok(Compressor::with_params(
                TdcConfig {
                    window: self.window,
                    segmenter,
                    qformer: params.config,
                },
                params,
            ));
        }
        let qformer = QFormerConfig {
            num_queries: self.k,
            query_type: self.query_type.parse::<QueryType>()?,
            text_conditioning: !self.no_text_conditioning,
            visual_dim,
            audio_dim,
            seed: self.seed,
            ..QFormerConfig::default()
        };
        Compressor::new(TdcConfig {
            window: self.window,
            segmenter,
            qformer,
        })
    }
}

#[derive(Debug, Args)]
struct CompressArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Instruction text fed to the compressor.
    #[arg(long, default_value = "")]
    text: String,
    #[command(flatten)]
    enc: EncoderOpts,
}

#[derive(Debug, Args)]
struct BudgetArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    seg: SegmentOpts,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_QUERIES)]
    k: usize,
}

#[derive(Debug, Args)]
struct LvcotArgs {
    #[arg(long)]
    input: PathBuf,
    /// Question asked of the answerer.
    #[arg(long)]
    text: String,
    #[arg(long, default_value_t = DEFAULT_SEGMENTS)]
    segments: usize,
    /// mock or echo.
    #[arg(long, default_value = "mock")]
    answerer: String,
    /// JSON array of scripted answers (mock answerer).
    #[arg(long)]
    script: Option<PathBuf>,
    #[command(flatten)]
    enc: EncoderOpts,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// avgpool or learned.
    #[arg(long, default_value = "avgpool")]
    query_type: String,
}

/// Captured result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliOutcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn exit_code(err: &TdcError) -> i32 {
    match err {
        TdcError::Argument(_) => EXIT_USAGE,
        TdcError::Io { .. } | TdcError::Format { .. } => EXIT_IO,
        TdcError::Shape(_) | TdcError::Degenerate(_) | TdcError::Numeric(_) => EXIT_NUMERIC,
        TdcError::Orchestration(_) => EXIT_ORCHESTRATION,
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> CliOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                CliOutcome { code: EXIT_USAGE, stdout: String::new(), stderr: rendered }
            } else {
                CliOutcome { code: EXIT_OK, stdout: rendered, stderr: String::new() }
            };
        }
    };
    match dispatch(cli.command) {
        Ok((record, code)) => {
            let stderr = if code == EXIT_OK {
                String::new()
            } else {
                "tdc: check failed\n".to_string()
            };
            CliOutcome { code, stdout: format!("{record}\n"), stderr }
        }
        Err(e) => CliOutcome {
            code: exit_code(&e),
            stdout: String::new(),
            stderr: format!("tdc: {e}\n"),
        },
    }
}

type Outcome = Result<(Value, i32), TdcError>;

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Gen(a) => gen(a),
        Command::Segment(a) => segment(a),
        Command::Compress(a) => compress(a),
        Command::Budget(a) => budget(a),
        Command::Lvcot(a) => lvcot(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn gen(a: GenArgs) -> Outcome {
    let (visual_dim, audio_dim, descriptor_dim) = match a.dims.as_slice() {
        [] => (DEFAULT_DIM, DEFAULT_DIM, DEFAULT_DIM),
        [d] => (*d, *d, *d),
        [v, au, d] => (*v, *au, *d),
        other => {
            return Err(TdcError::Argument(format!(
                "--dims takes one value or three (v,a,d), got {}",
                other.len()
            )))
        }
    };
    let spec = SynthSpec {
        seed: a.seed,
        frames: a.frames,
        boundaries: a.boundaries,
        centers: None,
        noise: a.noise,
        visual_tokens: a.visual_tokens,
        audio_tokens: a.audio_tokens,
        visual_dim,
        audio_dim,
        descriptor_dim,
    };
    let tl = synth_generate(&spec)?;
    write_tdcf(&tl, &a.output)?;
    Ok((
        json!({
            "command": "gen",
            "output": a.output,
            "seed": spec.seed,
            "frames": spec.frames,
            "boundaries": spec.boundaries,
            "noise": spec.noise,
            "visual_tokens": spec.visual_tokens,
            "audio_tokens": spec.audio_tokens,
            "dims": [visual_dim, audio_dim, descriptor_dim],
        }),
        EXIT_OK,
    ))
}

fn segment(a: SegmentArgs) -> Outcome {
    let cfg = a.seg.config()?;
    let tl = read_tdcf(&a.input)?;
    let sims = frame_similarities(&tl, cfg.descriptor)?;
    let partition = segment_scenes(&tl, &cfg)?;
    let cuts: Vec<Value> = partition
        .boundaries()
        .iter()
        .map(|&c| json!({ "frame": c, "similarity": sims[c - 1] }))
        .collect();
    Ok((
        json!({
            "command": "segment",
            "frames": tl.frames(),
            "max_segments": cfg.max_scenes,
            "tau": cfg.tau,
            "scenes": partition.scene_count(),
            "boundaries": partition.boundaries(),
            "cuts": cuts,
        }),
        EXIT_OK,
    ))
}

fn compress(a: CompressArgs) -> Outcome {
    let tl = read_tdcf(&a.input)?;
    let compressor = a.enc.compressor(tl.visual_dim(), tl.audio_dim())?;
    let plan = compressor.plan(&tl)?;
    let stream = assemble_tdc(&tl, &plan, &compressor.params, &tokenize_text(&a.text))?;
    let bytes = encode_stream(&stream)?;
    std::fs::write(&a.output, &bytes).map_err(|e| TdcError::io(&a.output, e))?;
    let counted = count_stream_tokens(&bytes).map_err(|e| TdcError::format(&a.output, e))?;
    Ok((
        json!({
            "command": "compress",
            "output": a.output,
            "tokens": counted,
            "dim": stream.dim(),
            "windows": plan.windows.len(),
            "scenes": plan.scene_count,
            "static_visual": stream.count(Provenance::StaticVisual),
            "static_audio": stream.count(Provenance::StaticAudio),
            "sep": stream.count(Provenance::Sep),
            "dynamic": stream.count(Provenance::Dynamic),
        }),
        EXIT_OK,
    ))
}

fn budget(a: BudgetArgs) -> Outcome {
    let cfg = a.seg.config()?;
    if a.k == 0 {
        return Err(TdcError::Argument("--k must be at least 1".into()));
    }
    let tl = read_tdcf(&a.input)?;
    let plan = make_windows(&segment_scenes(&tl, &cfg)?, a.window)?;
    let report = token_budget(&tl, &plan, a.k);
    let mut record = serde_json::to_value(&report).expect("report serializes");
    record["command"] = json!("budget");
    Ok((record, EXIT_OK))
}

fn lvcot(a: LvcotArgs) -> Outcome {
    let tl = read_tdcf(&a.input)?;
    let compressor = a.enc.compressor(tl.visual_dim(), tl.audio_dim())?;
    let answerer: Box<dyn Answerer> = match a.answerer.as_str() {
        "echo" => Box::new(EchoAnswerer),
        "mock" => {
            let path = a
                .script
                .as_ref()
                .ok_or_else(|| TdcError::Argument("--answerer mock requires --script".into()))?;
            let raw = std::fs::read(path).map_err(|e| TdcError::io(path, e))?;
            let answers: Vec<String> = serde_json::from_slice(&raw).map_err(|e| {
                TdcError::format(
                    path,
                    crate::error::FormatError::Invalid {
                        offset: e.column(),
                        reason: format!("script must be a JSON array of strings: {e}"),
                    },
                )
            })?;
            Box::new(mock_script(answers))
        }
        other => {
            return Err(TdcError::Argument(format!(
                "unknown answerer {other:?} (expected mock or echo)"
            )))
        }
    };
    let cfg = LvcotConfig {
        segments: a.segments,
        ..LvcotConfig::default()
    };
    let trace = run_lvcot(&tl, &a.text, answerer.as_ref(), &cfg, &compressor)?;
    let mut record = serde_json::to_value(&trace).expect("trace serializes");
    record["command"] = json!("lvcot");
    Ok((record, EXIT_OK))
}

fn gradcheck(a: GradcheckArgs) -> Outcome {
    let cfg = QFormerConfig {
        query_type: a.query_type.parse()?,
        ..QFormerConfig::small()
    };
    let report = grad_check(&cfg, a.seed)?;
    let code = if report.passed { EXIT_OK } else { EXIT_NUMERIC };
    let mut record = serde_json::to_value(&report).expect("report serializes");
    record["command"] = json!("gradcheck");
    Ok((record, code))
}

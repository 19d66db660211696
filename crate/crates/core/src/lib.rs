//! Temporal dynamic context (TDC) compression of long-video token streams.
//!
//! The pipeline takes a per-second timeline of visual and audio tokens,
//! splits it into scenes by descriptor similarity, cuts each scene into
//! fixed-length windows, keeps the first frame of every window verbatim and
//! squeezes each remaining frame into `K` query-transformer tokens. A
//! training-free segment-then-integrate orchestrator ([`lvcot`]) runs the
//! compressed streams past a pluggable answerer.
//!
//! ```
//! use tdc::compressor::{Compressor, TdcConfig};
//! use tdc::timeline::{synth_generate, tokenize_text, SynthSpec};
//!
//! # fn main() -> tdc::Result<()> {
//! let tl = synth_generate(&SynthSpec { frames: 60, boundaries: vec![20, 40], ..SynthSpec::default() })?;
//! let compressor = Compressor::new(TdcConfig::default())?;
//! let stream = compressor.encode(&tl, &tokenize_text("what is the person holding"))?;
//! assert_eq!(stream.len(), 2571); // three scenes, nine windows
//! # Ok(())
//! # }
//! ```

mod binio;
pub mod cli;
pub mod compressor;
pub mod error;
pub mod numkernel;
pub mod lvcot;
pub mod qformer;
pub mod segmenter;
pub mod timeline;

pub use error::{FormatError, Result, TdcError};
pub use numkernel::Matrix;

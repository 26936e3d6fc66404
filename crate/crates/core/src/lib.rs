//! Recall distributions for base-NP chunkers.
//!
//! The crate trains two chunkers, a memory-based tiler ([`mbsl`]) and a
//! begin/end Winnow network ([`winnow`]), on bootstrap and cross-validation
//! resamples of a training corpus ([`resample`]). Recall on each test corpus is
//! collected per resample and summarised with the paired statistics in
//! [`evalstats`]. The [`harness`] module ties everything together and writes
//! the TSV reports consumed by the `np-resample` binary.

pub mod corpus;
pub mod error;
pub mod evalstats;
pub mod harness;
pub mod mbsl;
pub mod resample;
mod symbols;
pub mod winnow;

pub use corpus::{ChunkSpan, Corpus, GenreGrammar, Sentence, Token};
pub use error::{Error, Result};
pub use evalstats::{DistributionSummary, PairedComparison, RecallSamples, RunMetrics};
pub use mbsl::{MbslConfig, MbslModel};
pub use resample::{BootstrapPlan, CvPlan, PrngStream};
pub use winnow::{WinnowConfig, WinnowNetwork};

/// A trained chunker that proposes base-NP spans for a sentence.
pub trait Chunker {
    fn predict(&self, sentence: &Sentence) -> Vec<ChunkSpan>;
}

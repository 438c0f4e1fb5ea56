//! Measurement toolkit for Arabic page-to-Markdown OCR.
//!
//! The crate is split along the lines of the workflow it supports:
//!
//! - [`md_struct`]: a small Markdown block grammar, its canonical serializer,
//!   and the block-level Structure Accuracy metric.
//! - [`metrics`]: Arabic-aware normalization, edit distance, CER, WER, BLEU and
//!   corpus aggregation.
//! - [`tokenizer`]: byte-fallback BPE training, loading and saving, token
//!   efficiency and compression ratios, effective context arithmetic.
//! - [`synth`]: HTML to Markdown conversion, pagination, paired manifests and
//!   the external rasterizer hook.
//! - [`analysis`]: encoder token-grid geometry, context tables, repetition
//!   penalty and repetition-loop detection.
//! - [`harness`]: the operations behind the `mdocr` command line.

pub mod analysis;
pub mod harness;
pub mod md_struct;
pub mod metrics;
pub mod synth;
pub mod tokenizer;

pub use md_struct::{Block, Inline, ListKind, MarkdownDoc, Span, SpanStyle, StructSeq, StructTag};
pub use metrics::{NormalizationOptions, SampleResult};
pub use tokenizer::{ContextSpec, TokenizerModel};

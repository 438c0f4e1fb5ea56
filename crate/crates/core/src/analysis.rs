//! Architecture arithmetic and decoder-output post-processing.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::tokenizer::{effective_context, ContextSpec};

pub const DEFAULT_REPETITION_PENALTY: f64 = 1.2;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("{dimension} {value} is not divisible by the total reduction factor {factor}")]
    NotDivisible { dimension: &'static str, value: usize, factor: usize },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("repetition penalty must be a positive finite number, got {0}")]
    Penalty(f64),
    #[error("history token {id} is outside the score vector of length {len}")]
    HistoryOutOfRange { id: usize, len: usize },
    #[error("invalid repetition parameters: {0}")]
    Repetition(String),
}

/// Swin-style encoder input: a patch embedding followed by `merge_stages`
/// 2x2 patch merges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderGeometry {
    pub input_height: usize,
    pub input_width: usize,
    pub patch_size: usize,
    pub merge_stages: u32,
    pub hidden_dim: usize,
}

impl EncoderGeometry {
    pub fn new(input_height: usize, input_width: usize) -> Self {
        EncoderGeometry { input_height, input_width, patch_size: 4, merge_stages: 3, hidden_dim: 1024 }
    }

    pub fn reduction_factor(&self) -> Option<usize> {
        2usize.checked_pow(self.merge_stages)?.checked_mul(self.patch_size)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenGrid {
    pub rows: usize,
    pub cols: usize,
    pub token_count: usize,
    pub hidden_dim: usize,
    /// (rows, cols) after the patch embedding and after each merge.
    pub stages: Vec<(usize, usize)>,
}

impl fmt::Display for TokenGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let chain: Vec<String> = self.stages.iter().map(|(h, w)| format!("{h}×{w}")).collect();
        write!(f, "{}", chain.join(" → "))
    }
}

pub fn token_grid(geom: &EncoderGeometry) -> Result<TokenGrid, AnalysisError> {
    if geom.patch_size == 0 {
        return Err(AnalysisError::Geometry("patch size must be positive".into()));
    }
    let factor = geom
        .reduction_factor()
        .ok_or_else(|| AnalysisError::Geometry("reduction factor overflows".into()))?;
    for (dimension, value) in [("height", geom.input_height), ("width", geom.input_width)] {
        if value == 0 || value % factor != 0 {
            return Err(AnalysisError::NotDivisible { dimension, value, factor });
        }
    }
    let mut stages = vec![(geom.input_height / geom.patch_size, geom.input_width / geom.patch_size)];
    for _ in 0..geom.merge_stages {
        let (h, w) = *stages.last().expect("non-empty");
        stages.push((h / 2, w / 2));
    }
    let (rows, cols) = *stages.last().expect("non-empty");
    Ok(TokenGrid { rows, cols, token_count: rows * cols, hidden_dim: geom.hidden_dim, stages })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextRow {
    pub model_name: String,
    pub max_decoder_tokens: u64,
    pub ratio: f64,
    pub effective_tokens: u64,
}

/// One row per spec, largest effective context first, ties by name.
pub fn context_table(specs: &[ContextSpec]) -> Vec<ContextRow> {
    let mut rows: Vec<ContextRow> = specs
        .iter()
        .map(|s| ContextRow {
            model_name: s.model_name.clone(),
            max_decoder_tokens: s.max_decoder_tokens,
            ratio: s.compression_ratio_vs_base,
            effective_tokens: effective_context(s),
        })
        .collect();
    rows.sort_by(|a, b| b.effective_tokens.cmp(&a.effective_tokens).then_with(|| a.model_name.cmp(&b.model_name)));
    rows
}

/// CTRL-style multiplicative penalty: scores of previously generated tokens
/// are divided by `penalty` when positive and multiplied by it when negative.
/// Each distinct history token is penalized once.
pub fn apply_repetition_penalty(
    scores: &[f64],
    history: &BTreeSet<usize>,
    penalty: f64,
) -> Result<Vec<f64>, AnalysisError> {
    if !(penalty.is_finite() && penalty > 0.0) {
        return Err(AnalysisError::Penalty(penalty));
    }
    let mut out = scores.to_vec();
    for &id in history {
        let score = out
            .get_mut(id)
            .ok_or(AnalysisError::HistoryOutOfRange { id, len: scores.len() })?;
        if *score > 0.0 {
            *score /= penalty;
        } else if *score < 0.0 {
            *score *= penalty;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepetitionParams {
    pub min_ngram: usize,
    pub max_ngram: usize,
    pub min_repeats: usize,
}

impl Default for RepetitionParams {
    fn default() -> Self {
        RepetitionParams { min_ngram: 3, max_ngram: 20, min_repeats: 3 }
    }
}

impl RepetitionParams {
    pub fn new(min_ngram: usize, max_ngram: usize, min_repeats: usize) -> Result<Self, AnalysisError> {
        if min_ngram < 1 {
            return Err(AnalysisError::Repetition("min_ngram must be at least 1".into()));
        }
        if min_ngram > max_ngram {
            return Err(AnalysisError::Repetition(format!("min_ngram {min_ngram} exceeds max_ngram {max_ngram}")));
        }
        if min_repeats < 2 {
            return Err(AnalysisError::Repetition("min_repeats must be at least 2".into()));
        }
        Ok(RepetitionParams { min_ngram, max_ngram, min_repeats })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Repetition {
    pub period: usize,
    pub start: usize,
    pub repeats: usize,
}

/// Looks for a loop at the tail: the smallest period in
/// `min_ngram..=max_ngram` whose unit repeats at least `min_repeats` times
/// back to back at the end of `tokens`, with the longest such run reported.
pub fn detect_repetition<T: PartialEq>(tokens: &[T], params: &RepetitionParams) -> Option<Repetition> {
    let n = tokens.len();
    for period in params.min_ngram.max(1)..=params.max_ngram {
        if period.saturating_mul(params.min_repeats.max(1)) > n {
            break;
        }
        // Length of the run of positions i (counting back from n - period - 1)
        // with tokens[i] == tokens[i + period].
        let matched = (0..n - period).rev().take_while(|&i| tokens[i] == tokens[i + period]).count();
        let repeats = (matched + period) / period;
        if repeats >= params.min_repeats {
            return Some(Repetition { period, start: n - repeats * period, repeats });
        }
    }
    None
}

/// Cuts a repetition loop in whitespace-delimited text down to one copy of
/// the repeating unit. Text before the loop keeps its original spacing.
/// Applied until no loop remains, so the result is a fixed point.
pub fn truncate_repetition(text: &str, params: &RepetitionParams) -> String {
    let mut current = text;
    loop {
        let spans = word_spans(current);
        let words: Vec<&str> = spans.iter().map(|&(s, e)| &current[s..e]).collect();
        match detect_repetition(&words, params) {
            Some(rep) => {
                let keep_end = spans[rep.start + rep.period - 1].1;
                current = &current[..keep_end];
            }
            None => return current.to_string(),
        }
    }
}

fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

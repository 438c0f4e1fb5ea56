//! Text-level OCR metrics: CER, WER, BLEU, plus the normalization applied
//! before any of them and the corpus-level aggregation.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Additive smoothing applied to zero n-gram precisions.
pub const BLEU_EPSILON: f64 = 1e-9;
pub const BLEU_MAX_N: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{metric} is undefined for an empty reference")]
    EmptyReference { metric: &'static str },
    #[error("cannot aggregate an empty result list")]
    NoResults,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NormalizationOptions {
    pub unicode_nfc: bool,
    /// Remove Arabic harakat, U+064B..=U+0652.
    pub strip_tashkeel: bool,
    /// Map hamza/madda alef forms (أ إ آ) to bare alef.
    pub normalize_alef: bool,
    pub collapse_whitespace: bool,
}

impl Default for NormalizationOptions {
    fn default() -> Self {
        NormalizationOptions {
            unicode_nfc: true,
            strip_tashkeel: false,
            normalize_alef: false,
            collapse_whitespace: true,
        }
    }
}

const ALEF: char = '\u{0627}';

fn is_tashkeel(c: char) -> bool {
    ('\u{064B}'..='\u{0652}').contains(&c)
}

/// Madda above, hamza above, hamza below: the marks that turn a bare alef
/// into آ, أ and إ once composed.
fn is_alef_modifier(c: char) -> bool {
    ('\u{0653}'..='\u{0655}').contains(&c)
}

fn is_combining(c: char) -> bool {
    unicode_normalization::char::canonical_combining_class(c) != 0
        || is_tashkeel(c)
        || is_alef_modifier(c)
}

pub fn normalize_text(text: &str, opts: &NormalizationOptions) -> String {
    let chars: Box<dyn Iterator<Item = char>> = if opts.unicode_nfc {
        // Work on the decomposed form so precomposed alef variants and any
        // marks they carry are visible to the filters below.
        Box::new(text.nfd())
    } else {
        Box::new(text.chars())
    };

    let mut filtered = String::with_capacity(text.len());
    let mut base: Option<char> = None;
    for c in chars {
        if opts.strip_tashkeel && is_tashkeel(c) {
            continue;
        }
        if opts.normalize_alef {
            if is_alef_modifier(c) && base == Some(ALEF) {
                continue;
            }
            let mapped = match c {
                '\u{0622}' | '\u{0623}' | '\u{0625}' => ALEF,
                other => other,
            };
            if !is_combining(mapped) {
                base = Some(mapped);
            }
            filtered.push(mapped);
        } else {
            filtered.push(c);
        }
    }

    let composed = if opts.unicode_nfc { filtered.nfc().collect() } else { filtered };

    if opts.collapse_whitespace {
        composed.split_whitespace().collect::<Vec<_>>().join(" ")
    } else {
        composed
    }
}

/// Levenshtein distance with unit costs, single-row dynamic programme.
/// Short inputs use a stack buffer, so block-tag comparisons do not allocate.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut stack = [0usize; 64];
    let mut heap = Vec::new();
    let row: &mut [usize] = if short.len() < stack.len() {
        &mut stack[..=short.len()]
    } else {
        heap.resize(short.len() + 1, 0);
        &mut heap
    };
    for (j, cell) in row.iter_mut().enumerate() {
        *cell = j;
    }
    for (i, x) in long.iter().enumerate() {
        let mut diagonal = row[0];
        row[0] = i + 1;
        for (j, y) in short.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = (diagonal + usize::from(x != y)).min(above + 1).min(row[j] + 1);
            diagonal = above;
        }
    }
    row[short.len()]
}

/// Character error rate over Unicode scalar values of the normalized texts.
/// Not capped at 1: long hallucinated hypotheses push it well above.
pub fn cer(reference: &str, hypothesis: &str, opts: &NormalizationOptions) -> Result<f64, MetricError> {
    let r: Vec<char> = normalize_text(reference, opts).chars().collect();
    if r.is_empty() {
        return Err(MetricError::EmptyReference { metric: "CER" });
    }
    let h: Vec<char> = normalize_text(hypothesis, opts).chars().collect();
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

pub fn wer(reference: &str, hypothesis: &str, opts: &NormalizationOptions) -> Result<f64, MetricError> {
    let reference = normalize_text(reference, opts);
    let hypothesis = normalize_text(hypothesis, opts);
    let r: Vec<&str> = reference.split_whitespace().collect();
    if r.is_empty() {
        return Err(MetricError::EmptyReference { metric: "WER" });
    }
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Sentence-level BLEU over whitespace tokens.
///
/// Orders run from 1 to `min(max_n, |hyp|)`, so a short hypothesis is not
/// scored on n-grams it cannot contain. Zero precisions are replaced by
/// [`BLEU_EPSILON`]. Empty hypothesis or reference scores 0.
pub fn bleu(reference: &str, hypothesis: &str, opts: &NormalizationOptions, max_n: usize) -> f64 {
    let reference = normalize_text(reference, opts);
    let hypothesis = normalize_text(hypothesis, opts);
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    if r.is_empty() || h.is_empty() || max_n == 0 {
        return 0.0;
    }

    let orders = max_n.min(h.len());
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let hyp_counts = ngram_counts(&h, n);
        let ref_counts = ngram_counts(&r, n);
        let clipped: usize = hyp_counts
            .iter()
            .map(|(gram, &count)| count.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = h.len() + 1 - n;
        let precision = if clipped == 0 { BLEU_EPSILON } else { clipped as f64 / total as f64 };
        log_sum += precision.ln();
    }
    let brevity = if h.len() < r.len() { (1.0 - r.len() as f64 / h.len() as f64).exp() } else { 1.0 };
    (brevity * (log_sum / orders as f64).exp()).clamp(0.0, 1.0)
}

/// Per-sample metric values. `None` marks a metric skipped for that sample
/// (empty reference for CER/WER, no tokenizer for TER).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub sample_id: String,
    pub bleu: f64,
    pub cer: Option<f64>,
    pub wer: Option<f64>,
    pub structure_accuracy: f64,
    pub ter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub bleu: f64,
    pub cer: Option<f64>,
    pub wer: Option<f64>,
    pub structure_accuracy: f64,
    pub ter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub per_sample: Vec<SampleResult>,
    pub means: MetricMeans,
    pub sample_count: usize,
}

/// Order-independent mean: values are sorted before summation so the result
/// does not depend on input order or on how the work was scheduled.
fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut values: Vec<f64> = values.collect();
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn mean_of(results: &[SampleResult]) -> Result<MetricMeans, MetricError> {
    if results.is_empty() {
        return Err(MetricError::NoResults);
    }
    Ok(MetricMeans {
        bleu: mean(results.iter().map(|r| r.bleu)).unwrap_or(0.0),
        cer: mean(results.iter().filter_map(|r| r.cer)),
        wer: mean(results.iter().filter_map(|r| r.wer)),
        structure_accuracy: mean(results.iter().map(|r| r.structure_accuracy)).unwrap_or(0.0),
        ter: mean(results.iter().filter_map(|r| r.ter)),
    })
}

/// Unweighted per-metric means. Samples are kept sorted by id.
pub fn aggregate(results: &[SampleResult]) -> Result<Aggregate, MetricError> {
    let means = mean_of(results)?;
    let mut per_sample = results.to_vec();
    per_sample.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    Ok(Aggregate { sample_count: per_sample.len(), per_sample, means })
}

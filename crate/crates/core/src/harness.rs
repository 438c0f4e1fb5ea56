//! Operations behind the `mdocr` command line: corpus evaluation, report
//! files and tables, tokenizer statistics, geometry printout and dataset
//! synthesis from a directory of HTML files.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{context_table, TokenGrid};
use crate::md_struct::{extract_structure, parse_markdown, structure_accuracy};
use crate::metrics::{self, MetricMeans, NormalizationOptions, SampleResult, BLEU_EPSILON, BLEU_MAX_N};
use crate::synth::{self, ManifestEntry, PageBudget, Source, SynthConfig, SynthError, SynthOutput};
use crate::tokenizer::{self, ContextSpec, TokenizerModel};

pub const WORKERS_ENV: &str = "MDOCR_WORKERS";
pub const SA_DEFINITION: &str = "levenshtein-similarity/block-tags/v1";
pub const BLEU_MODE: &str = "sentence-level, macro-averaged";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Render(String),
}

impl HarnessError {
    /// 1 usage/config, 2 data, 3 external renderer.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 1,
            HarnessError::Data(_) => 2,
            HarnessError::Render(_) => 3,
        }
    }
}

impl From<SynthError> for HarnessError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(_) => HarnessError::Usage(e.to_string()),
            _ => HarnessError::Data(e.to_string()),
        }
    }
}

/// Worker count from `MDOCR_WORKERS`, defaulting to the logical CPU count.
pub fn workers_from_env() -> Result<usize, HarnessError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(HarnessError::Usage(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Usage(format!("cannot start worker pool: {e}")))
}

fn read_file(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Reports

/// Everything that decides what the numbers in a report mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub normalization: NormalizationOptions,
    pub character_unit: String,
    pub word_split: String,
    pub bleu_max_n: usize,
    pub bleu_smoothing_epsilon: f64,
    pub bleu_mode: String,
    pub structure_accuracy: String,
    pub ter_tokenizer: Option<String>,
}

impl ConfigEcho {
    pub fn new(normalization: NormalizationOptions, ter_tokenizer: Option<String>) -> Self {
        ConfigEcho {
            normalization,
            character_unit: "unicode-scalar".into(),
            word_split: "unicode-whitespace".into(),
            bleu_max_n: BLEU_MAX_N,
            bleu_smoothing_epsilon: BLEU_EPSILON,
            bleu_mode: BLEU_MODE.into(),
            structure_accuracy: SA_DEFINITION.into(),
            ter_tokenizer,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportWarnings {
    /// Reference ids with no prediction.
    pub missing_predictions: Vec<String>,
    /// Prediction ids with no reference.
    pub unmatched_predictions: Vec<String>,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(default)]
    pub model: Option<String>,
    pub sample_count: usize,
    pub means: MetricMeans,
    pub config_echo: ConfigEcho,
    #[serde(default)]
    pub warnings: ReportWarnings,
    pub per_sample: Vec<SampleResult>,
}

const MEAN_TOLERANCE: f64 = 1e-9;

impl MetricReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("reports always serialize");
        text.push('\n');
        text
    }

    /// Parses a report and checks that its means and count agree with its
    /// per-sample values.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let report: MetricReport =
            serde_json::from_str(text).map_err(|e| HarnessError::Data(format!("malformed report: {e}")))?;
        if report.sample_count != report.per_sample.len() {
            return Err(HarnessError::Data(format!(
                "report sample_count {} does not match {} per-sample entries",
                report.sample_count,
                report.per_sample.len()
            )));
        }
        let recomputed = metrics::mean_of(&report.per_sample).map_err(|e| HarnessError::Data(e.to_string()))?;
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => (x - y).abs() <= MEAN_TOLERANCE,
            (None, None) => true,
            _ => false,
        };
        let m = &report.means;
        let consistent = close(Some(m.bleu), Some(recomputed.bleu))
            && close(m.cer, recomputed.cer)
            && close(m.wer, recomputed.wer)
            && close(Some(m.structure_accuracy), Some(recomputed.structure_accuracy))
            && close(m.ter, recomputed.ter);
        if !consistent {
            return Err(HarnessError::Data("report means do not match its per-sample values".into()));
        }
        Ok(report)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&read_file(path)?).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
    }
}

// ---------------------------------------------------------------------------
// Evaluation

pub struct EvalOptions<'a> {
    pub normalization: NormalizationOptions,
    /// Model used for TER and an identifier recorded in the report.
    pub tokenizer: Option<(&'a TokenizerModel, String)>,
    pub workers: usize,
    pub model: Option<String>,
}

pub fn score_sample(
    sample_id: &str,
    reference: &str,
    prediction: &str,
    normalization: &NormalizationOptions,
    tokenizer: Option<&TokenizerModel>,
) -> SampleResult {
    let structure = structure_accuracy(
        &extract_structure(&parse_markdown(prediction)),
        &extract_structure(&parse_markdown(reference)),
    );
    SampleResult {
        sample_id: sample_id.to_string(),
        bleu: metrics::bleu(reference, prediction, normalization, BLEU_MAX_N),
        cer: metrics::cer(reference, prediction, normalization).ok(),
        wer: metrics::wer(reference, prediction, normalization).ok(),
        structure_accuracy: structure,
        ter: tokenizer.and_then(|m| tokenizer::token_efficiency_ratio(m, prediction, reference).ok()),
    }
}

fn index_by_id<'a>(entries: &'a [ManifestEntry], which: &str) -> Result<HashMap<&'a str, &'a ManifestEntry>, HarnessError> {
    let mut map = HashMap::with_capacity(entries.len());
    for entry in entries {
        if map.insert(entry.id.as_str(), entry).is_some() {
            return Err(HarnessError::Data(format!("duplicate id {} in {which} manifest", entry.id)));
        }
    }
    Ok(map)
}

/// Scores predictions against references, pairing them by manifest id.
pub fn evaluate(
    predictions: &[ManifestEntry],
    references: &[ManifestEntry],
    options: &EvalOptions<'_>,
) -> Result<MetricReport, HarnessError> {
    let preds = index_by_id(predictions, "prediction")?;
    let refs = index_by_id(references, "reference")?;

    let mut ref_ids: Vec<&str> = refs.keys().copied().collect();
    ref_ids.sort_unstable();
    let mut warnings = ReportWarnings::default();
    let mut pairs: Vec<(&str, &str, &str)> = Vec::new();
    for id in ref_ids {
        match preds.get(id) {
            Some(pred) => pairs.push((id, refs[id].markdown.as_str(), pred.markdown.as_str())),
            None => warnings.missing_predictions.push(id.to_string()),
        }
    }
    let mut extra: Vec<String> = preds.keys().filter(|id| !refs.contains_key(*id)).map(|s| s.to_string()).collect();
    extra.sort_unstable();
    warnings.unmatched_predictions = extra;
    if pairs.is_empty() {
        return Err(HarnessError::Data("no prediction ids match the reference manifest".into()));
    }

    let model = options.tokenizer.as_ref().map(|(m, _)| *m);
    let norm = options.normalization;
    let results: Vec<SampleResult> = pool(options.workers)?.install(|| {
        pairs
            .par_iter()
            .map(|(id, reference, prediction)| score_sample(id, reference, prediction, &norm, model))
            .collect()
    });

    for r in &results {
        if r.cer.is_none() {
            warnings.messages.push(format!("{}: CER and WER skipped, reference is empty after normalization", r.sample_id));
        }
        if model.is_some() && r.ter.is_none() {
            warnings.messages.push(format!("{}: TER skipped, reference tokenizes to nothing", r.sample_id));
        }
    }

    let agg = metrics::aggregate(&results).map_err(|e| HarnessError::Data(e.to_string()))?;
    Ok(MetricReport {
        model: options.model.clone(),
        sample_count: agg.sample_count,
        means: agg.means,
        config_echo: ConfigEcho::new(norm, options.tokenizer.as_ref().map(|(_, id)| id.clone())),
        warnings,
        per_sample: agg.per_sample,
    })
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, HarnessError> {
    synth::parse_manifest(&read_file(path)?).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

/// Identifier recorded for a tokenizer directory in report metadata.
pub fn tokenizer_id(dir: &Path, model: &TokenizerModel) -> String {
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string());
    format!("bpe:{name} (vocab {}, merges {})", model.vocab_size(), model.num_merges())
}

pub fn load_tokenizer(dir: &Path) -> Result<TokenizerModel, HarnessError> {
    TokenizerModel::load(dir).map_err(|e| match e {
        tokenizer::TokenizerError::Io { .. } => HarnessError::Usage(format!("{}: {e}", dir.display())),
        other => HarnessError::Data(format!("{}: {other}", dir.display())),
    })
}

// ---------------------------------------------------------------------------
// Comparison table

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Better {
    Higher,
    Lower,
}

fn display_value(v: Option<f64>) -> Option<String> {
    v.map(|x| format!("{x:.4}"))
}

type Column = (&'static str, Better, fn(&MetricMeans) -> Option<f64>);

/// Markdown table with one row per report. Values are shown with four
/// decimals; the best displayed value in each column is bolded, ties
/// included.
pub fn render_table(rows: &[(String, MetricReport)]) -> String {
    let columns: [Column; 4] = [
        ("BLEU (↑)", Better::Higher, |m| Some(m.bleu)),
        ("CER (↓)", Better::Lower, |m| m.cer),
        ("WER (↓)", Better::Lower, |m| m.wer),
        ("Structure Acc (↑)", Better::Higher, |m| Some(m.structure_accuracy)),
    ];

    let cells: Vec<Vec<Option<String>>> = rows
        .iter()
        .map(|(_, r)| columns.iter().map(|(_, _, get)| display_value(get(&r.means))).collect())
        .collect();
    let best: Vec<Option<f64>> = columns
        .iter()
        .enumerate()
        .map(|(c, (_, better, _))| {
            let shown = cells.iter().filter_map(|row| row[c].as_deref()?.parse::<f64>().ok());
            match better {
                Better::Higher => shown.reduce(f64::max),
                Better::Lower => shown.reduce(f64::min),
            }
        })
        .collect();

    let mut out = String::from("| Model |");
    for (name, _, _) in &columns {
        let _ = write!(out, " {name} |");
    }
    out.push_str("\n|:------|");
    out.push_str(&"------:|".repeat(columns.len()));
    out.push('\n');
    for ((name, _), row) in rows.iter().zip(&cells) {
        let _ = write!(out, "| {name} |");
        for (c, cell) in row.iter().enumerate() {
            match cell {
                Some(text) if text.parse::<f64>().ok() == best[c] => {
                    let _ = write!(out, " **{text}** |");
                }
                Some(text) => {
                    let _ = write!(out, " {text} |");
                }
                None => out.push_str(" – |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Loads each report and labels it with its `model` field or file stem.
pub fn report_table(paths: &[PathBuf]) -> Result<String, HarnessError> {
    if paths.is_empty() {
        return Err(HarnessError::Usage("no report files given".into()));
    }
    let rows = paths
        .iter()
        .map(|p| {
            let report = MetricReport::load(p)?;
            let name = report
                .model
                .clone()
                .unwrap_or_else(|| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
            Ok((name, report))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(render_table(&rows))
}

// ---------------------------------------------------------------------------
// Tokenizer statistics

/// A context spec from the command line; `ratio: None` means "use the
/// measured compression ratio".
#[derive(Debug, Clone, PartialEq)]
pub struct ContextArg {
    pub name: String,
    pub max_tokens: u64,
    pub ratio: Option<f64>,
}

impl std::str::FromStr for ContextArg {
    type Err = String;

    /// `NAME:MAX_TOKENS[:RATIO]`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let (name, max, ratio) = match parts.as_slice() {
            [name, max] => (*name, *max, None),
            [name, max, ratio] => (*name, *max, Some(*ratio)),
            _ => return Err(format!("expected NAME:MAX_TOKENS[:RATIO], got {s:?}")),
        };
        let max_tokens = max.parse().map_err(|_| format!("bad token count {max:?}"))?;
        let ratio = ratio
            .map(|r| r.parse::<f64>().map_err(|_| format!("bad ratio {r:?}")))
            .transpose()?;
        Ok(ContextArg { name: name.to_string(), max_tokens, ratio })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerCounts {
    pub label: String,
    pub vocab_size: usize,
    pub tokens: usize,
    pub chars: usize,
}

impl TokenizerCounts {
    pub fn tokens_per_char(&self) -> f64 {
        if self.chars == 0 {
            0.0
        } else {
            self.tokens as f64 / self.chars as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokStats {
    pub tokenizer: TokenizerCounts,
    pub baseline: TokenizerCounts,
    /// Baseline tokens per tokenizer token.
    pub compression_ratio: f64,
    pub contexts: Vec<crate::analysis::ContextRow>,
}

pub fn tok_stats(
    tokenizer: (&TokenizerModel, &str),
    baseline: (&TokenizerModel, &str),
    corpus: &[String],
    contexts: &[ContextArg],
) -> Result<TokStats, HarnessError> {
    let ratio = tokenizer::compression_ratio(tokenizer.0, baseline.0, corpus)
        .map_err(|e| HarnessError::Data(e.to_string()))?;
    let chars: usize = corpus.iter().map(|s| s.chars().count()).sum();
    let counts = |(m, label): (&TokenizerModel, &str)| TokenizerCounts {
        label: label.to_string(),
        vocab_size: m.vocab_size(),
        tokens: corpus.iter().map(|s| m.tokenize(s).len()).sum(),
        chars,
    };
    let specs = contexts
        .iter()
        .map(|c| ContextSpec::new(c.name.clone(), c.max_tokens, c.ratio.unwrap_or(ratio)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| HarnessError::Usage(e.to_string()))?;
    Ok(TokStats {
        tokenizer: counts(tokenizer),
        baseline: counts(baseline),
        compression_ratio: ratio,
        contexts: context_table(&specs),
    })
}

impl std::fmt::Display for TokStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (role, c) in [("tokenizer", &self.tokenizer), ("baseline", &self.baseline)] {
            writeln!(
                f,
                "{role}: {} vocab={} tokens={} chars={} tokens/char={:.4}",
                c.label,
                c.vocab_size,
                c.tokens,
                c.chars,
                c.tokens_per_char()
            )?;
        }
        writeln!(f, "compression ratio (baseline tokens per tokenizer token): {:.4}", self.compression_ratio)?;
        for row in &self.contexts {
            writeln!(
                f,
                "context {}: max {} × ratio {:.4} = effective {} baseline tokens",
                row.model_name, row.max_decoder_tokens, row.ratio, row.effective_tokens
            )?;
        }
        Ok(())
    }
}

/// Corpus file: one sample per non-empty line.
pub fn read_corpus(path: &Path) -> Result<Vec<String>, HarnessError> {
    let text = read_file(path)?;
    let lines: Vec<String> = text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect();
    if lines.is_empty() {
        return Err(HarnessError::Data(format!("{}: corpus is empty", path.display())));
    }
    Ok(lines)
}

// ---------------------------------------------------------------------------
// Geometry

pub fn geometry_text(height: usize, width: usize, grid: &TokenGrid) -> String {
    format!(
        "input: {height}×{width}\nstages: {grid}\ngrid: {}×{}\ntokens: {}\nhidden: {}\n",
        grid.rows, grid.cols, grid.token_count, grid.hidden_dim
    )
}

// ---------------------------------------------------------------------------
// Synthesis

/// Every `*.html` file directly under `dir`, sorted by name; the file stem
/// becomes the document id.
pub fn html_sources(dir: &Path) -> Result<Vec<Source>, HarnessError> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::Usage(format!("{}: {e}", dir.display())))?;
    let mut files: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| HarnessError::Data(e.to_string()))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("html") || e.eq_ignore_ascii_case("htm")) {
            let name = path.file_name().expect("files have names").to_string_lossy().into_owned();
            files.insert(name, path);
        }
    }
    let mut seen = HashSet::new();
    files
        .into_iter()
        .map(|(name, path)| {
            let doc_id = path.file_stem().expect("files have stems").to_string_lossy().into_owned();
            if !seen.insert(doc_id.clone()) {
                return Err(HarnessError::Usage(format!("two HTML files share the document id {doc_id}")));
            }
            Ok(Source { doc_id, html: read_file(&path)?, origin: Some(name) })
        })
        .collect()
}

pub fn synth_dir(
    html_dir: &Path,
    out_dir: &Path,
    max_chars: usize,
    render_cmd: Option<String>,
    workers: usize,
) -> Result<SynthOutput, HarnessError> {
    let budget = PageBudget::new(max_chars)?;
    let sources = html_sources(html_dir)?;
    if sources.is_empty() {
        return Err(HarnessError::Usage(format!("no .html files in {}", html_dir.display())));
    }
    Ok(synth::build_manifest(&sources, out_dir, &SynthConfig { budget, render_cmd, workers })?)
}

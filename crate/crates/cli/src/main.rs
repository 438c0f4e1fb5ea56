use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mdocr_core::analysis::{token_grid, truncate_repetition, EncoderGeometry, RepetitionParams};
use mdocr_core::harness::{self, ContextArg, EvalOptions, HarnessError};
use mdocr_core::synth::{manifest_to_jsonl, DEFAULT_MAX_CHARS, MANIFEST_FILE};
use mdocr_core::tokenizer::{train_bpe, TokenizerModel};
use mdocr_core::NormalizationOptions;

#[derive(Parser)]
#[command(name = "mdocr", version, about = "Arabic page-to-Markdown OCR evaluation and dataset tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a directory of HTML books into paginated Markdown pages and a manifest.
    Synth {
        #[arg(long)]
        html_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_CHARS)]
        max_chars: usize,
        /// Renderer command, e.g. "wkhtmltoimage {html} {png}".
        #[arg(long)]
        render_cmd: Option<String>,
    },
    /// Score a prediction manifest against a reference manifest.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Report file to write.
        #[arg(long)]
        out: PathBuf,
        /// Tokenizer directory used for the token efficiency ratio.
        #[arg(long)]
        tokenizer: Option<PathBuf>,
        /// Row label used by `report`.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        strip_tashkeel: bool,
        #[arg(long)]
        normalize_alef: bool,
        #[arg(long)]
        no_nfc: bool,
        #[arg(long)]
        keep_whitespace: bool,
    },
    /// Train a byte-fallback BPE tokenizer on a corpus file (one sample per line).
    TokTrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Token counts, compression ratio and effective context lengths.
    TokStats {
        #[arg(long)]
        tokenizer: PathBuf,
        /// Baseline tokenizer directory; byte-level when omitted.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        /// NAME:MAX_TOKENS[:RATIO]; the measured ratio is used when RATIO is omitted.
        #[arg(long = "context")]
        contexts: Vec<ContextArg>,
    },
    /// Encoder token grid for an input size.
    Geom {
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long, default_value_t = 4)]
        patch: usize,
        #[arg(long, default_value_t = 3)]
        merges: u32,
        #[arg(long, default_value_t = 1024)]
        hidden: usize,
    },
    /// Comparison table over one or more report files.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cut trailing repetition loops out of every page of a manifest.
    Truncate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        min_ngram: usize,
        #[arg(long, default_value_t = 20)]
        max_ngram: usize,
        #[arg(long, default_value_t = 3)]
        min_repeats: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| HarnessError::Data(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Synth { html_dir, out, max_chars, render_cmd } => {
            let workers = harness::workers_from_env()?;
            let output = harness::synth_dir(&html_dir, &out, max_chars, render_cmd, workers)?;
            for warning in &output.warnings {
                eprintln!("warning: {warning}");
            }
            println!("wrote {} pages to {}", output.entries.len(), out.join(MANIFEST_FILE).display());
            if output.render_failures > 0 {
                return Err(HarnessError::Render(format!(
                    "renderer failed on {} of {} pages",
                    output.render_failures,
                    output.entries.len()
                )));
            }
        }
        Command::Eval {
            pred,
            reference,
            out,
            tokenizer,
            model,
            strip_tashkeel,
            normalize_alef,
            no_nfc,
            keep_whitespace,
        } => {
            let normalization = NormalizationOptions {
                unicode_nfc: !no_nfc,
                strip_tashkeel,
                normalize_alef,
                collapse_whitespace: !keep_whitespace,
            };
            let workers = harness::workers_from_env()?;
            let model_tok = tokenizer.as_deref().map(harness::load_tokenizer).transpose()?;
            let tok = match (&model_tok, &tokenizer) {
                (Some(m), Some(dir)) => Some((m, harness::tokenizer_id(dir, m))),
                _ => None,
            };
            let preds = harness::load_manifest(&pred)?;
            let refs = harness::load_manifest(&reference)?;
            let report = harness::evaluate(&preds, &refs, &EvalOptions { normalization, tokenizer: tok, workers, model })?;
            write(&out, &report.to_json())?;
            for id in &report.warnings.missing_predictions {
                eprintln!("warning: no prediction for {id}");
            }
            for id in &report.warnings.unmatched_predictions {
                eprintln!("warning: prediction {id} has no reference");
            }
            let m = &report.means;
            let show = |v: Option<f64>| v.map_or("–".to_string(), |x| format!("{x:.4}"));
            println!(
                "samples={} BLEU={:.4} CER={} WER={} SA={:.4} TER={}",
                report.sample_count,
                m.bleu,
                show(m.cer),
                show(m.wer),
                m.structure_accuracy,
                show(m.ter)
            );
        }
        Command::TokTrain { corpus, vocab_size, out } => {
            let lines = harness::read_corpus(&corpus)?;
            let model = train_bpe(&lines, vocab_size).map_err(|e| HarnessError::Usage(e.to_string()))?;
            model.save(&out).map_err(|e| HarnessError::Data(e.to_string()))?;
            println!("trained {} merges, vocab {} -> {}", model.num_merges(), model.vocab_size(), out.display());
        }
        Command::TokStats { tokenizer, baseline, corpus, contexts } => {
            let model = harness::load_tokenizer(&tokenizer)?;
            let (base, base_label) = match &baseline {
                Some(dir) => (harness::load_tokenizer(dir)?, dir.display().to_string()),
                None => (TokenizerModel::byte_level(), "byte-level".to_string()),
            };
            let lines = harness::read_corpus(&corpus)?;
            let label = tokenizer.display().to_string();
            let stats = harness::tok_stats((&model, &label), (&base, &base_label), &lines, &contexts)?;
            print!("{stats}");
        }
        Command::Geom { height, width, patch, merges, hidden } => {
            let geom = EncoderGeometry {
                input_height: height,
                input_width: width,
                patch_size: patch,
                merge_stages: merges,
                hidden_dim: hidden,
            };
            let grid = token_grid(&geom).map_err(|e| HarnessError::Usage(e.to_string()))?;
            print!("{}", harness::geometry_text(height, width, &grid));
        }
        Command::Report { reports, format: Format::Md, out } => {
            let table = harness::report_table(&reports)?;
            match out {
                Some(path) => write(&path, &table)?,
                None => print!("{table}"),
            }
        }
        Command::Truncate { manifest, out, min_ngram, max_ngram, min_repeats } => {
            let params = RepetitionParams::new(min_ngram, max_ngram, min_repeats)
                .map_err(|e| HarnessError::Usage(e.to_string()))?;
            let mut entries = harness::load_manifest(&manifest)?;
            let mut changed = 0;
            for entry in &mut entries {
                let cut = truncate_repetition(&entry.markdown, &params);
                if cut != entry.markdown {
                    changed += 1;
                    entry.markdown = cut;
                }
            }
            write(&out, &manifest_to_jsonl(&entries))?;
            println!("truncated {changed} of {} pages", entries.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

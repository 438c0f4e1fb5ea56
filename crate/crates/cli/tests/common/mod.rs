#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::IndexedRandom;
use rand::Rng;

pub const WORDS: &[&str] = &[
    "العلم", "نور", "والجهل", "ظلام", "كتاب", "الكتب", "المدينة", "القديمة", "الشيخ", "قال", "في", "من", "إلى",
    "على", "أن", "إنّ", "كَتَبَ", "دَرَسَ", "التاريخ", "والجغرافيا", "البحر", "الشمال", "رحلة", "المسافر",
    "«الحكمة»", "ضالة", "المؤمن،", "آخر", "أول", "مكتبة", "١٩٢٤", "2024", "؟", "!", "الطويل.", "وَالقَمَر",
];

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mdocr")
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn mdocr(args: &[&str], workers: Option<usize>) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args);
    match workers {
        Some(n) => cmd.env("MDOCR_WORKERS", n.to_string()),
        None => cmd.env_remove("MDOCR_WORKERS"),
    };
    cmd.output().expect("binary runs")
}

fn sentence<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> String {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn inline<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> String {
    let mut text = sentence(rng, lo, hi);
    if rng.random_bool(0.3) {
        text = format!("**{}** {text}", sentence(rng, 1, 3));
    }
    if rng.random_bool(0.3) {
        text.push_str(&format!(" *{}*", sentence(rng, 1, 3)));
    }
    text
}

/// A random Markdown page in the supported subset.
pub fn arabic_page<R: Rng>(rng: &mut R) -> String {
    let mut blocks = vec![format!("# {}", sentence(rng, 2, 5))];
    for _ in 0..rng.random_range(2..8) {
        let block = match rng.random_range(0..5) {
            0 => format!("{} {}", "#".repeat(rng.random_range(2..4)), sentence(rng, 2, 6)),
            1 => inline(rng, 8, 30),
            2 => {
                let mut lines = Vec::new();
                let mut depth = 0;
                for _ in 0..rng.random_range(2..5) {
                    lines.push(format!("{}- {}", "  ".repeat(depth), inline(rng, 2, 8)));
                    depth = if depth == 0 && rng.random_bool(0.4) { 1 } else { 0 };
                }
                lines.join("\n")
            }
            3 => (0..rng.random_range(2..5)).map(|_| format!("1. {}", sentence(rng, 2, 8))).collect::<Vec<_>>().join("\n"),
            _ => format!("> {}", inline(rng, 4, 12)),
        };
        blocks.push(block);
    }
    blocks.join("\n\n")
}

/// A plausible OCR-style corruption of `page`: dropped, doubled and
/// substituted words, lost markup, and occasionally a repetition loop.
pub fn corrupt<R: Rng>(rng: &mut R, page: &str) -> String {
    let mut lines: Vec<String> = Vec::new();
    for line in page.lines() {
        let mut words: Vec<String> = Vec::new();
        for w in line.split(' ') {
            match rng.random_range(0..20) {
                0 => {}
                1 => {
                    words.push(w.to_string());
                    words.push(w.to_string());
                }
                2 => words.push(WORDS.choose(rng).unwrap().to_string()),
                3 => words.push(w.trim_start_matches(['#', '-', '>']).to_string()),
                _ => words.push(w.to_string()),
            }
        }
        lines.push(words.join(" "));
    }
    let mut out = lines.join("\n");
    if rng.random_bool(0.1) {
        let unit = sentence(rng, 3, 4);
        for _ in 0..rng.random_range(3..6) {
            out.push(' ');
            out.push_str(&unit);
        }
    }
    out
}

pub fn manifest_line(id: &str, markdown: &str) -> String {
    let value = serde_json::json!({ "id": id, "page_index": 0, "markdown": markdown, "image": null, "source": "synthetic" });
    format!("{value}\n")
}

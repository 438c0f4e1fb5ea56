//! Byte-fallback BPE tokenizers and the efficiency arithmetic built on them.
//!
//! Models are stored as a directory holding `vocab.json` and `merges.txt`.
//! Token strings in both files use the escape convention implemented by
//! [`escape_token`]: printable UTF-8 is written as-is, `\` becomes `\\`, and
//! whitespace, control characters, invisible formatting characters and bytes
//! that are not valid UTF-8 become `\xHH`. Special tokens are written as
//! `\<name>`, which no byte token can produce.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::Deserialize;
use thiserror::Error;

pub const MERGES_HEADER: &str = "#bpe-v1";
pub const VOCAB_FILE: &str = "vocab.json";
pub const MERGES_FILE: &str = "merges.txt";

const SPECIAL_NAMES: [&str; 3] = ["pad", "bos", "eos"];

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{file}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Format { file: &'static str, line: Option<usize>, message: String },
    #[error("token id {id} is out of range for a vocabulary of {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("decoded bytes are not valid UTF-8")]
    InvalidUtf8,
    #[error("{metric} is undefined: the reference tokenizes to zero tokens")]
    EmptyReference { metric: &'static str },
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn format_err(file: &'static str, line: Option<usize>, message: impl Into<String>) -> TokenizerError {
    TokenizerError::Format { file, line, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Token {
    Special(String),
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Specials {
    pub pad: u32,
    pub bos: u32,
    pub eos: u32,
}

/// An immutable BPE model. Ids are dense in `0..vocab_size()`, every single
/// byte has its own token, and every merge output is in the vocabulary.
#[derive(Debug, Clone)]
pub struct TokenizerModel {
    tokens: Vec<Token>,
    byte_ids: [u32; 256],
    merges: Vec<(u32, u32)>,
    /// pair -> (rank, output id)
    ranks: HashMap<(u32, u32), (usize, u32)>,
    specials: Specials,
}

impl TokenizerModel {
    /// The plain byte-level tokenizer: three specials then the 256 bytes.
    pub fn byte_level() -> Self {
        let mut tokens: Vec<Token> =
            SPECIAL_NAMES.iter().map(|n| Token::Special((*n).to_string())).collect();
        tokens.extend((0..=255u8).map(|b| Token::Bytes(vec![b])));
        Self::assemble(tokens, Vec::new()).expect("byte-level vocabulary is valid")
    }

    fn assemble(tokens: Vec<Token>, merges: Vec<(u32, u32)>) -> Result<Self, String> {
        let mut byte_ids = [u32::MAX; 256];
        let mut specials = HashMap::new();
        let mut by_bytes: HashMap<&[u8], u32> = HashMap::new();
        for (id, token) in tokens.iter().enumerate() {
            let id = id as u32;
            match token {
                Token::Special(name) => {
                    specials.insert(name.as_str(), id);
                }
                Token::Bytes(bytes) => {
                    if bytes.len() == 1 {
                        byte_ids[bytes[0] as usize] = id;
                    }
                    by_bytes.insert(bytes, id);
                }
            }
        }
        if let Some(b) = byte_ids.iter().position(|&id| id == u32::MAX) {
            return Err(format!("vocabulary has no token for byte 0x{b:02X}"));
        }
        let special = |name: &str| {
            specials.get(name).copied().ok_or_else(|| format!("missing special token \\<{name}>"))
        };
        let specials = Specials { pad: special("pad")?, bos: special("bos")?, eos: special("eos")? };

        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, &(a, b)) in merges.iter().enumerate() {
            let (Token::Bytes(x), Token::Bytes(y)) = (&tokens[a as usize], &tokens[b as usize]) else {
                return Err("merges may not involve special tokens".into());
            };
            let joined = [x.as_slice(), y.as_slice()].concat();
            let out = *by_bytes
                .get(joined.as_slice())
                .ok_or_else(|| format!("merge output {} is not in the vocabulary", escape_token(&joined)))?;
            ranks.entry((a, b)).or_insert((rank, out));
        }
        Ok(TokenizerModel { tokens, byte_ids, merges, ranks, specials })
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn num_merges(&self) -> usize {
        self.merges.len()
    }

    pub fn specials(&self) -> Specials {
        self.specials
    }

    /// Bytes of a token; specials decode to nothing.
    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        match self.tokens.get(id as usize)? {
            Token::Bytes(b) => Some(b),
            Token::Special(_) => Some(&[]),
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::with_capacity(text.len() / 2);
        for chunk in pretokenize(text) {
            let mut symbols: Vec<u32> = chunk.bytes().map(|b| self.byte_ids[b as usize]).collect();
            self.apply_merges(&mut symbols);
            out.extend_from_slice(&symbols);
        }
        out
    }

    fn apply_merges(&self, symbols: &mut Vec<u32>) {
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&(rank, out)| (rank, w[0], w[1], out)))
                .min();
            let Some((_, a, b, out)) = best else { return };
            merge_pair(symbols, (a, b), out);
        }
    }

    pub fn detokenize(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut bytes = Vec::new();
        for &id in ids {
            let token = self
                .token_bytes(id)
                .ok_or(TokenizerError::IdOutOfRange { id, vocab_size: self.vocab_size() })?;
            bytes.extend_from_slice(token);
        }
        String::from_utf8(bytes).map_err(|_| TokenizerError::InvalidUtf8)
    }

    pub fn save(&self, dir: &Path) -> Result<(), TokenizerError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let vocab_path = dir.join(VOCAB_FILE);
        fs::write(&vocab_path, self.vocab_json()).map_err(|e| io_err(&vocab_path, e))?;
        let merges_path = dir.join(MERGES_FILE);
        fs::write(&merges_path, self.merges_txt()).map_err(|e| io_err(&merges_path, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, TokenizerError> {
        let vocab_path = dir.join(VOCAB_FILE);
        let vocab = fs::read_to_string(&vocab_path).map_err(|e| io_err(&vocab_path, e))?;
        let merges_path = dir.join(MERGES_FILE);
        let merges = fs::read_to_string(&merges_path).map_err(|e| io_err(&merges_path, e))?;
        Self::from_files(&vocab, &merges)
    }

    pub fn vocab_json(&self) -> String {
        let mut out = String::from("{\n");
        for (id, token) in self.tokens.iter().enumerate() {
            let key = match token {
                Token::Special(name) => format!("\\<{name}>"),
                Token::Bytes(bytes) => escape_token(bytes),
            };
            let key = serde_json::to_string(&key).expect("strings always serialize");
            let sep = if id + 1 < self.tokens.len() { "," } else { "" };
            out.push_str(&format!("  {key}: {id}{sep}\n"));
        }
        out.push_str("}\n");
        out
    }

    pub fn merges_txt(&self) -> String {
        let mut out = format!("{MERGES_HEADER}\n");
        for &(a, b) in &self.merges {
            let name = |id: u32| match &self.tokens[id as usize] {
                Token::Bytes(bytes) => escape_token(bytes),
                Token::Special(name) => format!("\\<{name}>"),
            };
            out.push_str(&format!("{} {}\n", name(a), name(b)));
        }
        out
    }

    /// Builds a model from the text of `vocab.json` and `merges.txt`.
    pub fn from_files(vocab_json: &str, merges_txt: &str) -> Result<Self, TokenizerError> {
        let entries = parse_vocab_entries(vocab_json)?;
        let mut locator = LineLocator::new(vocab_json);

        let mut slots: Vec<Option<Token>> = vec![None; entries.len()];
        let mut seen_keys: HashSet<&str> = HashSet::new();
        let mut seen_tokens: HashMap<Token, u64> = HashMap::new();
        for (key, id) in &entries {
            let line = locator.find(key);
            if !seen_keys.insert(key.as_str()) {
                return Err(format_err(VOCAB_FILE, line, format!("duplicate token string {key:?}")));
            }
            let token = unescape_token(key).map_err(|m| format_err(VOCAB_FILE, line, m))?;
            if let Some(prev) = seen_tokens.insert(token.clone(), *id) {
                return Err(format_err(
                    VOCAB_FILE,
                    line,
                    format!("token {key:?} decodes to the same bytes as id {prev}"),
                ));
            }
            let slot = usize::try_from(*id)
                .ok()
                .and_then(|i| slots.get_mut(i))
                .ok_or_else(|| {
                    format_err(VOCAB_FILE, line, format!("id {id} is outside the dense range 0..{}", entries.len()))
                })?;
            if slot.is_some() {
                return Err(format_err(VOCAB_FILE, line, format!("duplicate id {id}")));
            }
            *slot = Some(token);
        }
        let tokens: Vec<Token> = slots.into_iter().map(|t| t.expect("ids are dense")).collect();

        let by_bytes: HashMap<&[u8], u32> = tokens
            .iter()
            .enumerate()
            .filter_map(|(id, t)| match t {
                Token::Bytes(b) => Some((b.as_slice(), id as u32)),
                Token::Special(_) => None,
            })
            .collect();

        let mut merges = Vec::new();
        for (idx, line) in merges_txt.lines().enumerate() {
            let lineno = Some(idx + 1);
            if idx == 0 {
                if line.trim_end() != MERGES_HEADER {
                    return Err(format_err(MERGES_FILE, lineno, format!("expected header {MERGES_HEADER}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(' ').collect();
            let [left, right] = parts.as_slice() else {
                return Err(format_err(MERGES_FILE, lineno, "expected two space-separated tokens"));
            };
            let resolve = |s: &str| -> Result<(u32, Vec<u8>), TokenizerError> {
                match unescape_token(s).map_err(|m| format_err(MERGES_FILE, lineno, m))? {
                    Token::Bytes(b) => by_bytes
                        .get(b.as_slice())
                        .map(|&id| (id, b.clone()))
                        .ok_or_else(|| format_err(MERGES_FILE, lineno, format!("token {s:?} is not in the vocabulary"))),
                    Token::Special(_) => Err(format_err(MERGES_FILE, lineno, "special tokens cannot be merged")),
                }
            };
            let (a, x) = resolve(left)?;
            let (b, y) = resolve(right)?;
            let joined = [x, y].concat();
            if !by_bytes.contains_key(joined.as_slice()) {
                return Err(format_err(
                    MERGES_FILE,
                    lineno,
                    format!("merge output {} is not in the vocabulary", escape_token(&joined)),
                ));
            }
            merges.push((a, b));
        }

        Self::assemble(tokens, merges).map_err(|m| format_err(VOCAB_FILE, None, m))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> TokenizerError {
    TokenizerError::Io { path: path.display().to_string(), source }
}

/// Replaces every left-to-right, non-overlapping occurrence of `pair`.
fn merge_pair(symbols: &mut Vec<u32>, pair: (u32, u32), out: u32) {
    let mut write = 0;
    let mut read = 0;
    while read < symbols.len() {
        if read + 1 < symbols.len() && (symbols[read], symbols[read + 1]) == pair {
            symbols[write] = out;
            read += 2;
        } else {
            symbols[write] = symbols[read];
            read += 1;
        }
        write += 1;
    }
    symbols.truncate(write);
}

/// Splits text into chunks of leading whitespace followed by non-whitespace.
/// Merges never cross chunk boundaries.
pub fn pretokenize(text: &str) -> impl Iterator<Item = &str> {
    let mut starts = Vec::new();
    let mut prev_ws = true;
    for (i, c) in text.char_indices() {
        let ws = c.is_whitespace();
        if i > 0 && ws && !prev_ws {
            starts.push(i);
        }
        prev_ws = ws;
    }
    let mut bounds = vec![0];
    bounds.extend(starts);
    bounds.push(text.len());
    let pieces: Vec<&str> =
        bounds.windows(2).map(|w| &text[w[0]..w[1]]).filter(|s| !s.is_empty()).collect();
    pieces.into_iter()
}

fn is_invisible(c: char) -> bool {
    matches!(c,
        '\u{00AD}' | '\u{061C}' | '\u{200B}'..='\u{200F}' | '\u{202A}'..='\u{202E}'
        | '\u{2060}'..='\u{2069}' | '\u{FEFF}')
}

pub fn escape_token(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len());
    let hex = |out: &mut String, b: u8| out.push_str(&format!("\\x{b:02X}"));
    for chunk in bytes.utf8_chunks() {
        for c in chunk.valid().chars() {
            if c == '\\' {
                out.push_str("\\\\");
            } else if c.is_whitespace() || c.is_control() || is_invisible(c) {
                let mut buf = [0u8; 4];
                for &b in c.encode_utf8(&mut buf).as_bytes() {
                    hex(&mut out, b);
                }
            } else {
                out.push(c);
            }
        }
        for &b in chunk.invalid() {
            hex(&mut out, b);
        }
    }
    out
}

fn unescape_token(s: &str) -> Result<Token, String> {
    if let Some(name) = s.strip_prefix("\\<").and_then(|r| r.strip_suffix('>')) {
        if name.is_empty() || name.contains(['<', '>', '\\']) {
            return Err(format!("malformed special token {s:?}"));
        }
        return Ok(Token::Special(name.to_string()));
    }
    if s.is_empty() {
        return Err("empty token string".into());
    }
    let mut bytes = Vec::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            let mut buf = [0u8; 4];
            bytes.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            continue;
        }
        match chars.next() {
            Some('\\') => bytes.push(b'\\'),
            Some('x') => {
                let hex: String = chars.by_ref().take(2).collect();
                let b = (hex.len() == 2)
                    .then(|| u8::from_str_radix(&hex, 16).ok())
                    .flatten()
                    .ok_or_else(|| format!("bad byte escape in {s:?}"))?;
                bytes.push(b);
            }
            _ => return Err(format!("bad escape sequence in {s:?}")),
        }
    }
    Ok(Token::Bytes(bytes))
}

/// JSON object entries in file order, duplicates kept.
struct VocabEntries(Vec<(String, u64)>);

impl<'de> Deserialize<'de> for VocabEntries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;
        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = VocabEntries;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object mapping token strings to integer ids")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<VocabEntries, A::Error> {
                let mut entries = Vec::new();
                while let Some(entry) = map.next_entry::<String, u64>()? {
                    entries.push(entry);
                }
                Ok(VocabEntries(entries))
            }
        }
        deserializer.deserialize_map(EntriesVisitor)
    }
}

fn parse_vocab_entries(text: &str) -> Result<Vec<(String, u64)>, TokenizerError> {
    serde_json::from_str::<VocabEntries>(text)
        .map(|v| v.0)
        .map_err(|e| format_err(VOCAB_FILE, Some(e.line()), e.to_string()))
}

/// Finds the line of successive keys in a JSON text, assuming they appear in
/// order and are written in serde_json's canonical escaping.
struct LineLocator<'a> {
    text: &'a str,
    cursor: usize,
}

impl<'a> LineLocator<'a> {
    fn new(text: &'a str) -> Self {
        LineLocator { text, cursor: 0 }
    }

    fn find(&mut self, key: &str) -> Option<usize> {
        let needle = serde_json::to_string(key).ok()?;
        let at = self.cursor + self.text[self.cursor..].find(&needle)?;
        self.cursor = at + needle.len();
        Some(self.text[..at].matches('\n').count() + 1)
    }
}

/// Greedy byte-level BPE.
///
/// Starts from the three specials and 256 byte tokens, then repeatedly merges
/// the most frequent adjacent pair inside pretokenized chunks. Ties go to
/// the pair whose (left bytes, right bytes) is lexicographically smallest.
/// Stops at `vocab_size` or when no pair occurs at least twice.
pub fn train_bpe<S: AsRef<str>>(corpus: &[S], vocab_size: usize) -> Result<TokenizerModel, TokenizerError> {
    let base = SPECIAL_NAMES.len() + 256;
    if vocab_size < base {
        return Err(TokenizerError::Config(format!(
            "vocab_size must be at least {base} (256 bytes plus {} specials), got {vocab_size}",
            SPECIAL_NAMES.len()
        )));
    }
    if corpus.is_empty() {
        return Err(TokenizerError::Config("training corpus is empty".into()));
    }

    let byte_level = TokenizerModel::byte_level();
    let mut tokens = byte_level.tokens.clone();
    let mut by_bytes: HashMap<Vec<u8>, u32> = tokens
        .iter()
        .enumerate()
        .filter_map(|(i, t)| match t {
            Token::Bytes(b) => Some((b.clone(), i as u32)),
            Token::Special(_) => None,
        })
        .collect();

    let mut chunk_counts: HashMap<&str, u64> = HashMap::new();
    for text in corpus {
        for chunk in pretokenize(text.as_ref()) {
            *chunk_counts.entry(chunk).or_insert(0) += 1;
        }
    }
    let mut chunks: Vec<(&str, u64)> = chunk_counts.into_iter().collect();
    chunks.sort_unstable();
    let counts: Vec<u64> = chunks.iter().map(|&(_, c)| c).collect();
    let mut words: Vec<Vec<u32>> = chunks
        .iter()
        .map(|(s, _)| s.bytes().map(|b| byte_level.byte_ids[b as usize]).collect())
        .collect();

    let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut pair_words: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (wi, word) in words.iter().enumerate() {
        for w in word.windows(2) {
            *pair_counts.entry((w[0], w[1])).or_insert(0) += counts[wi];
            pair_words.entry((w[0], w[1])).or_default().insert(wi);
        }
    }

    let bytes_of = |tokens: &[Token], id: u32| -> Vec<u8> {
        match &tokens[id as usize] {
            Token::Bytes(b) => b.clone(),
            Token::Special(_) => unreachable!("specials never appear in training words"),
        }
    };

    let mut merges = Vec::new();
    while tokens.len() < vocab_size {
        let mut best: Option<((u32, u32), u64)> = None;
        for (&pair, &count) in &pair_counts {
            let better = match best {
                None => true,
                Some((bp, bc)) => {
                    count > bc
                        || (count == bc
                            && (bytes_of(&tokens, pair.0), bytes_of(&tokens, pair.1))
                                < (bytes_of(&tokens, bp.0), bytes_of(&tokens, bp.1)))
                }
            };
            if better {
                best = Some((pair, count));
            }
        }
        let Some((pair, count)) = best else { break };
        if count < 2 {
            break;
        }

        let joined = [bytes_of(&tokens, pair.0), bytes_of(&tokens, pair.1)].concat();
        let out = match by_bytes.get(&joined) {
            Some(&id) => id,
            None => {
                let id = tokens.len() as u32;
                tokens.push(Token::Bytes(joined.clone()));
                by_bytes.insert(joined, id);
                id
            }
        };
        merges.push(pair);

        let mut affected: Vec<usize> = pair_words.remove(&pair).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        for wi in affected {
            let word = &mut words[wi];
            for w in word.windows(2) {
                let key = (w[0], w[1]);
                if let Some(c) = pair_counts.get_mut(&key) {
                    *c -= counts[wi];
                    if *c == 0 {
                        pair_counts.remove(&key);
                    }
                }
            }
            merge_pair(word, pair, out);
            for w in word.windows(2) {
                *pair_counts.entry((w[0], w[1])).or_insert(0) += counts[wi];
                pair_words.entry((w[0], w[1])).or_default().insert(wi);
            }
        }
    }

    TokenizerModel::assemble(tokens, merges).map_err(TokenizerError::Config)
}

/// Tokens produced for the hypothesis over tokens for the reference, both
/// under the same model.
pub fn token_efficiency_ratio(model: &TokenizerModel, hypothesis: &str, reference: &str) -> Result<f64, TokenizerError> {
    let reference_tokens = model.tokenize(reference).len();
    if reference_tokens == 0 {
        return Err(TokenizerError::EmptyReference { metric: "TER" });
    }
    Ok(model.tokenize(hypothesis).len() as f64 / reference_tokens as f64)
}

/// How many `model_b` tokens one `model_a` token is worth on this corpus,
/// summed over the whole corpus before dividing.
pub fn compression_ratio<S: AsRef<str>>(
    model_a: &TokenizerModel,
    model_b: &TokenizerModel,
    corpus: &[S],
) -> Result<f64, TokenizerError> {
    if corpus.is_empty() {
        return Err(TokenizerError::Config("compression ratio needs a non-empty corpus".into()));
    }
    let count = |m: &TokenizerModel| -> usize { corpus.iter().map(|s| m.tokenize(s.as_ref()).len()).sum() };
    let (a, b) = (count(model_a), count(model_b));
    if a == 0 || b == 0 {
        return Err(TokenizerError::Config("corpus tokenizes to zero tokens".into()));
    }
    Ok(b as f64 / a as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextSpec {
    pub model_name: String,
    pub max_decoder_tokens: u64,
    pub compression_ratio_vs_base: f64,
}

impl ContextSpec {
    pub fn new(model_name: impl Into<String>, max_decoder_tokens: u64, ratio: f64) -> Result<Self, TokenizerError> {
        if max_decoder_tokens == 0 {
            return Err(TokenizerError::Config("max_decoder_tokens must be positive".into()));
        }
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(TokenizerError::Config(format!("compression ratio must be positive, got {ratio}")));
        }
        Ok(ContextSpec { model_name: model_name.into(), max_decoder_tokens, compression_ratio_vs_base: ratio })
    }
}

/// Decoder capacity expressed in baseline-tokenizer tokens.
pub fn effective_context(spec: &ContextSpec) -> u64 {
    (spec.max_decoder_tokens as f64 * spec.compression_ratio_vs_base).floor() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_level_layout() {
        let m = TokenizerModel::byte_level();
        assert_eq!(m.vocab_size(), 259);
        assert_eq!(m.specials(), Specials { pad: 0, bos: 1, eos: 2 });
        assert_eq!(m.tokenize("ab"), vec![3 + b'a' as u32, 3 + b'b' as u32]);
        assert!(m.tokenize("").is_empty());
    }

    #[test]
    fn first_merge_is_most_frequent_pair() {
        let m = train_bpe(&["aaab", "aaab"], 260).unwrap();
        assert_eq!(m.num_merges(), 1);
        assert_eq!(m.merges_txt(), "#bpe-v1\na a\n");
        let ids = m.tokenize("aaab");
        assert!(ids.len() < 4);
        assert_eq!(ids.len(), 3);
        assert_eq!(m.detokenize(&ids).unwrap(), "aaab");
    }

    #[test]
    fn ties_break_on_smallest_bytes() {
        // "cd" and "ab" both occur twice; ("a","b") sorts first.
        let m = train_bpe(&["cd", "ab", "cd", "ab"], 260).unwrap();
        assert_eq!(m.merges_txt(), "#bpe-v1\na b\n");
    }

    #[test]
    fn single_byte_corpus_learns_nothing() {
        let m = train_bpe(&["a"], 300).unwrap();
        assert_eq!(m.num_merges(), 0);
        assert_eq!(m.vocab_size(), 259);
    }

    #[test]
    fn training_config_errors() {
        assert!(matches!(train_bpe(&["abc"], 258), Err(TokenizerError::Config(_))));
        assert_eq!(train_bpe(&["abc"], 259).unwrap().num_merges(), 0);
        assert!(matches!(train_bpe::<&str>(&[], 400), Err(TokenizerError::Config(_))));
    }

    #[test]
    fn detokenize_rejects_bad_ids() {
        let m = TokenizerModel::byte_level();
        assert!(matches!(m.detokenize(&[259]), Err(TokenizerError::IdOutOfRange { id: 259, .. })));
        // Lone continuation byte.
        assert!(matches!(m.detokenize(&[3 + 0x80]), Err(TokenizerError::InvalidUtf8)));
        assert_eq!(m.detokenize(&[1, 3 + b'x' as u32, 2]).unwrap(), "x");
    }

    #[test]
    fn escape_convention() {
        assert_eq!(escape_token(b"ab"), "ab");
        assert_eq!(escape_token(b" a"), "\\x20a");
        assert_eq!(escape_token(b"\\"), "\\\\");
        assert_eq!(escape_token("كتب".as_bytes()), "كتب");
        assert_eq!(escape_token(&"ك".as_bytes()[..1]), "\\xD9");
        assert_eq!(escape_token("\u{200F}".as_bytes()), "\\xE2\\x80\\x8F");
        for s in ["ab", "\\x20a", "\\\\", "\\xD9", "كتب"] {
            let Token::Bytes(b) = unescape_token(s).unwrap() else { panic!() };
            assert_eq!(escape_token(&b), s);
        }
        assert_eq!(unescape_token("\\<eos>").unwrap(), Token::Special("eos".into()));
        assert!(unescape_token("\\q").is_err());
        assert!(unescape_token("\\x4").is_err());
    }

    #[test]
    fn pretokenize_attaches_leading_whitespace() {
        let chunks: Vec<&str> = pretokenize("ab  cd e").collect();
        assert_eq!(chunks, vec!["ab", "  cd", " e"]);
        let chunks: Vec<&str> = pretokenize("  x ").collect();
        assert_eq!(chunks, vec!["  x", " "]);
        assert_eq!(pretokenize("").count(), 0);
    }

    #[test]
    fn ter_examples() {
        let m = train_bpe(&["كتب الطالب الدرس", "كتب المعلم"], 300).unwrap();
        let r = "كتب الطالب";
        assert_eq!(token_efficiency_ratio(&m, r, r).unwrap(), 1.0);
        assert!(matches!(
            token_efficiency_ratio(&m, "x", ""),
            Err(TokenizerError::EmptyReference { .. })
        ));
    }

    #[test]
    fn context_arithmetic() {
        let large = ContextSpec::new("large", 8192, 4.0).unwrap();
        assert_eq!(effective_context(&large), 32768);
        assert_eq!(effective_context(&ContextSpec::new("base", 4096, 1.0).unwrap()), 4096);
        assert_eq!(effective_context(&ContextSpec::new("x", 3, 1.5).unwrap()), 4);
        assert!(ContextSpec::new("bad", 0, 1.0).is_err());
        assert!(ContextSpec::new("bad", 1, 0.0).is_err());
        assert!(ContextSpec::new("bad", 1, f64::NAN).is_err());
    }

    #[test]
    fn compression_ratio_identity_and_errors() {
        let m = TokenizerModel::byte_level();
        assert_eq!(compression_ratio(&m, &m, &["abc"]).unwrap(), 1.0);
        assert!(compression_ratio::<&str>(&m, &m, &[]).is_err());
        assert!(compression_ratio(&m, &m, &[""]).is_err());
    }
}

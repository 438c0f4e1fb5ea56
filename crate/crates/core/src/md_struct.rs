//! Block-level Markdown model used for structural scoring.
//!
//! The grammar is a fixed subset of CommonMark:
//!
//! - ATX headings, `#` through `######`
//! - bullet (`-`, `*`) and ordered (`1.`) list items, two spaces of
//!   indentation per nesting level
//! - blockquotes (`>`)
//! - paragraphs separated by blank lines
//! - `**bold**` and `*italic*` inline spans
//!
//! Anything else is read as paragraph text. Parsing never fails on valid
//! UTF-8, and [`serialize_markdown`] produces a canonical form that parses
//! back to the same document.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::edit_distance;

#[derive(Debug, Error)]
pub enum MdError {
    #[error("input is not valid UTF-8 (first invalid byte at offset {offset})")]
    InputEncoding { offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanStyle {
    Plain,
    Bold,
    Italic,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub style: SpanStyle,
    pub text: String,
}

/// Inline text with emphasis annotations.
///
/// Always held in normal form: whitespace runs collapsed to a single space,
/// no leading or trailing whitespace, whitespace-only emphasis demoted to
/// plain text, and adjacent spans of the same style merged.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Inline {
    spans: Vec<Span>,
}

impl Inline {
    pub fn plain(text: &str) -> Self {
        Self::from_spans([(SpanStyle::Plain, text)])
    }

    pub fn from_spans<'a, I>(spans: I) -> Self
    where
        I: IntoIterator<Item = (SpanStyle, &'a str)>,
    {
        let mut chars: Vec<(char, SpanStyle)> = Vec::new();
        for (style, text) in spans {
            for c in text.chars() {
                if c.is_whitespace() {
                    match chars.last() {
                        None | Some((' ', _)) => {}
                        Some(_) => chars.push((' ', style)),
                    }
                } else {
                    chars.push((c, style));
                }
            }
        }
        if matches!(chars.last(), Some((' ', _))) {
            chars.pop();
        }

        // Group into runs of equal style, demoting blank emphasis to plain.
        let mut runs: Vec<Span> = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let style = chars[i].1;
            let mut j = i;
            let mut text = String::new();
            while j < chars.len() && chars[j].1 == style {
                text.push(chars[j].0);
                j += 1;
            }
            let style = if text.trim().is_empty() { SpanStyle::Plain } else { style };
            match runs.last_mut() {
                Some(last) if last.style == style => last.text.push_str(&text),
                _ => runs.push(Span { style, text }),
            }
            i = j;
        }
        Inline { spans: runs }
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Text content with emphasis markers dropped.
    pub fn text(&self) -> String {
        self.spans.iter().map(|s| s.text.as_str()).collect()
    }

    fn to_markdown(&self) -> String {
        let mut out = String::new();
        for span in &self.spans {
            let marker = match span.style {
                SpanStyle::Plain => "",
                SpanStyle::Bold => "**",
                SpanStyle::Italic => "*",
            };
            out.push_str(marker);
            for c in span.text.chars() {
                if c == '\\' || c == '*' {
                    out.push('\\');
                }
                out.push(c);
            }
            out.push_str(marker);
        }
        out
    }
}

impl From<&str> for Inline {
    fn from(text: &str) -> Self {
        Inline::plain(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ListKind {
    Bullet,
    Ordered,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Block {
    Heading { level: u8, text: Inline },
    Paragraph(Inline),
    ListItem { kind: ListKind, depth: usize, text: Inline },
    Blockquote(Inline),
}

impl Block {
    pub fn heading(level: u8, text: impl Into<Inline>) -> Self {
        Block::Heading { level: level.clamp(1, 6), text: text.into() }
    }

    pub fn paragraph(text: impl Into<Inline>) -> Self {
        Block::Paragraph(text.into())
    }

    pub fn bullet(depth: usize, text: impl Into<Inline>) -> Self {
        Block::ListItem { kind: ListKind::Bullet, depth, text: text.into() }
    }

    pub fn ordered(depth: usize, text: impl Into<Inline>) -> Self {
        Block::ListItem { kind: ListKind::Ordered, depth, text: text.into() }
    }

    pub fn blockquote(text: impl Into<Inline>) -> Self {
        Block::Blockquote(text.into())
    }

    pub fn inline(&self) -> &Inline {
        match self {
            Block::Heading { text, .. } | Block::ListItem { text, .. } => text,
            Block::Paragraph(text) | Block::Blockquote(text) => text,
        }
    }

    pub fn tag(&self) -> StructTag {
        match self {
            Block::Heading { level, .. } => StructTag::heading(*level),
            Block::Paragraph(_) => StructTag::Paragraph,
            Block::ListItem { kind: ListKind::Bullet, .. } => StructTag::BulletItem,
            Block::ListItem { kind: ListKind::Ordered, .. } => StructTag::OrderedItem,
            Block::Blockquote(_) => StructTag::Blockquote,
        }
    }

    fn is_list_item(&self) -> bool {
        matches!(self, Block::ListItem { .. })
    }

    fn to_markdown(&self) -> String {
        let with_prefix = |prefix: String, text: &Inline| {
            if text.is_empty() {
                prefix
            } else {
                format!("{prefix} {}", text.to_markdown())
            }
        };
        match self {
            Block::Heading { level, text } => {
                with_prefix("#".repeat(usize::from((*level).clamp(1, 6))), text)
            }
            Block::ListItem { kind, depth, text } => {
                let marker = match kind {
                    ListKind::Bullet => "-",
                    ListKind::Ordered => "1.",
                };
                with_prefix(format!("{}{marker}", "  ".repeat(*depth)), text)
            }
            Block::Blockquote(text) => with_prefix(">".to_string(), text),
            Block::Paragraph(text) => escape_line_start(text.to_markdown()),
        }
    }
}

/// Backslash-escapes a paragraph line that would otherwise open another
/// block kind.
fn escape_line_start(line: String) -> String {
    if line.starts_with(['#', '>', '-', '+']) {
        return format!("\\{line}");
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 && matches!(line.as_bytes().get(digits), Some(b'.') | Some(b')')) {
        let mut out = line;
        out.insert(digits, '\\');
        return out;
    }
    line
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct MarkdownDoc {
    pub blocks: Vec<Block>,
}

impl MarkdownDoc {
    pub fn new(blocks: Vec<Block>) -> Self {
        MarkdownDoc { blocks }
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// The canonical document this one serializes to: empty paragraphs
    /// removed, heading levels clamped to 1..=6, and list depth limited to one
    /// more than the preceding list item.
    pub fn normalized(&self) -> MarkdownDoc {
        let mut blocks: Vec<Block> = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let block = match block {
                Block::Paragraph(text) if text.is_empty() => continue,
                Block::Heading { level, text } => {
                    Block::Heading { level: (*level).clamp(1, 6), text: text.clone() }
                }
                Block::ListItem { kind, depth, text } => {
                    let depth = match blocks.last() {
                        Some(Block::ListItem { depth: prev, .. }) => (*depth).min(prev + 1),
                        _ => *depth,
                    };
                    Block::ListItem { kind: *kind, depth, text: text.clone() }
                }
                other => other.clone(),
            };
            blocks.push(block);
        }
        MarkdownDoc { blocks }
    }
}

/// Parses Markdown from raw bytes, rejecting invalid UTF-8.
pub fn parse_markdown_bytes(bytes: &[u8]) -> Result<MarkdownDoc, MdError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| MdError::InputEncoding { offset: e.valid_up_to() })?;
    Ok(parse_markdown(text))
}

enum LineKind<'a> {
    Blank,
    Heading(u8, &'a str),
    Item(ListKind, usize, &'a str),
    Quote(&'a str),
    Text(&'a str),
}

fn classify(line: &str) -> LineKind<'_> {
    if line.trim().is_empty() {
        return LineKind::Blank;
    }
    let mut width = 0;
    let mut body = line;
    for (i, c) in line.char_indices() {
        match c {
            ' ' => width += 1,
            '\t' => width += 4,
            _ => {
                body = &line[i..];
                break;
            }
        }
    }

    let hashes = body.bytes().take_while(|&b| b == b'#').count();
    if (1..=6).contains(&hashes) {
        if let Some(rest) = after_marker(body, hashes) {
            return LineKind::Heading(hashes as u8, rest);
        }
    }
    if let Some(rest) = body.strip_prefix('>') {
        return LineKind::Quote(rest);
    }
    if body.starts_with(['-', '*']) {
        if let Some(rest) = after_marker(body, 1) {
            return LineKind::Item(ListKind::Bullet, width / 2, rest);
        }
    }
    let digits = body.bytes().take_while(u8::is_ascii_digit).count();
    if (1..=9).contains(&digits) && body.as_bytes().get(digits) == Some(&b'.') {
        if let Some(rest) = after_marker(body, digits + 1) {
            return LineKind::Item(ListKind::Ordered, width / 2, rest);
        }
    }
    LineKind::Text(body)
}

/// Text after a block marker of `len` bytes, if the marker is followed by
/// whitespace or the end of the line.
fn after_marker(body: &str, len: usize) -> Option<&str> {
    let rest = &body[len..];
    match rest.chars().next() {
        None => Some(rest),
        Some(c) if c.is_whitespace() => Some(rest),
        Some(_) => None,
    }
}

enum Open {
    Paragraph(String),
    Item(ListKind, usize, String),
    Quote(String),
}

pub fn parse_markdown(text: &str) -> MarkdownDoc {
    let mut blocks: Vec<Block> = Vec::new();
    let mut open: Option<Open> = None;

    fn close(open: &mut Option<Open>, blocks: &mut Vec<Block>) {
        let Some(block) = open.take() else { return };
        match block {
            Open::Paragraph(raw) => {
                let text = parse_inline(&raw);
                if !text.is_empty() {
                    blocks.push(Block::Paragraph(text));
                }
            }
            Open::Item(kind, depth, raw) => {
                let depth = match blocks.last() {
                    Some(Block::ListItem { depth: prev, .. }) => depth.min(prev + 1),
                    _ => depth,
                };
                blocks.push(Block::ListItem { kind, depth, text: parse_inline(&raw) });
            }
            Open::Quote(raw) => blocks.push(Block::Blockquote(parse_inline(&raw))),
        }
    }

    for line in text.split('\n') {
        let line = line.strip_suffix('\r').unwrap_or(line);
        match classify(line) {
            LineKind::Blank => close(&mut open, &mut blocks),
            LineKind::Heading(level, rest) => {
                close(&mut open, &mut blocks);
                blocks.push(Block::Heading { level, text: parse_inline(rest) });
            }
            LineKind::Item(kind, depth, rest) => {
                close(&mut open, &mut blocks);
                open = Some(Open::Item(kind, depth, rest.to_string()));
            }
            LineKind::Quote(rest) => match &mut open {
                Some(Open::Quote(raw)) => {
                    raw.push('\n');
                    raw.push_str(rest);
                }
                _ => {
                    close(&mut open, &mut blocks);
                    open = Some(Open::Quote(rest.to_string()));
                }
            },
            LineKind::Text(body) => match &mut open {
                Some(Open::Paragraph(raw)) | Some(Open::Item(_, _, raw)) | Some(Open::Quote(raw)) => {
                    raw.push('\n');
                    raw.push_str(body);
                }
                None => open = Some(Open::Paragraph(body.to_string())),
            },
        }
    }
    close(&mut open, &mut blocks);
    MarkdownDoc { blocks }
}

fn parse_inline(raw: &str) -> Inline {
    // (char, is a live emphasis marker)
    let mut chars: Vec<(char, bool)> = Vec::with_capacity(raw.len());
    let mut it = raw.chars().peekable();
    while let Some(c) = it.next() {
        if c == '\\' {
            if let Some(&next) = it.peek() {
                if next.is_ascii_punctuation() {
                    chars.push((next, false));
                    it.next();
                    continue;
                }
            }
        }
        chars.push((c, c == '*'));
    }

    let star = |i: usize| chars.get(i).is_some_and(|&(_, live)| live);
    let collect = |range: std::ops::Range<usize>| -> String {
        chars[range].iter().map(|&(c, _)| c).collect()
    };

    let mut spans: Vec<(SpanStyle, String)> = Vec::new();
    let mut plain = String::new();
    let mut i = 0;
    while i < chars.len() {
        if star(i) {
            let closing = if star(i + 1) {
                (i + 3..chars.len())
                    .find(|&j| star(j) && star(j + 1))
                    .map(|j| (SpanStyle::Bold, i + 2..j, j + 2))
            } else {
                (i + 2..chars.len())
                    .find(|&j| star(j))
                    .map(|j| (SpanStyle::Italic, i + 1..j, j + 1))
            };
            if let Some((style, content, next)) = closing {
                if !plain.is_empty() {
                    spans.push((SpanStyle::Plain, std::mem::take(&mut plain)));
                }
                spans.push((style, collect(content)));
                i = next;
                continue;
            }
        }
        plain.push(chars[i].0);
        i += 1;
    }
    if !plain.is_empty() {
        spans.push((SpanStyle::Plain, plain));
    }
    Inline::from_spans(spans.iter().map(|(s, t)| (*s, t.as_str())))
}

/// Canonical text form: one line per block, consecutive list items on
/// adjacent lines, every other block boundary a blank line, trailing newline.
pub fn serialize_markdown(doc: &MarkdownDoc) -> String {
    let mut out = String::new();
    let mut prev: Option<&Block> = None;
    for block in &doc.blocks {
        if matches!(block, Block::Paragraph(text) if text.is_empty()) {
            continue;
        }
        if let Some(p) = prev {
            if !(p.is_list_item() && block.is_list_item()) {
                out.push('\n');
            }
        }
        out.push_str(&block.to_markdown());
        out.push('\n');
        prev = Some(block);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StructTag {
    H1,
    H2,
    H3,
    H4,
    H5,
    H6,
    BulletItem,
    OrderedItem,
    Blockquote,
    Paragraph,
}

impl StructTag {
    pub fn heading(level: u8) -> Self {
        match level {
            0 | 1 => StructTag::H1,
            2 => StructTag::H2,
            3 => StructTag::H3,
            4 => StructTag::H4,
            5 => StructTag::H5,
            _ => StructTag::H6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StructTag::H1 => "H1",
            StructTag::H2 => "H2",
            StructTag::H3 => "H3",
            StructTag::H4 => "H4",
            StructTag::H5 => "H5",
            StructTag::H6 => "H6",
            StructTag::BulletItem => "BULLET_ITEM",
            StructTag::OrderedItem => "ORDERED_ITEM",
            StructTag::Blockquote => "BLOCKQUOTE",
            StructTag::Paragraph => "PARAGRAPH",
        }
    }
}

impl fmt::Display for StructTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StructSeq {
    pub tags: Vec<StructTag>,
}

impl StructSeq {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

impl FromIterator<StructTag> for StructSeq {
    fn from_iter<I: IntoIterator<Item = StructTag>>(iter: I) -> Self {
        StructSeq { tags: iter.into_iter().collect() }
    }
}

pub fn extract_structure(doc: &MarkdownDoc) -> StructSeq {
    doc.blocks.iter().map(Block::tag).collect()
}

/// Normalized Levenshtein similarity between two block-tag sequences:
/// `1 - d(pred, ref) / max(|pred|, |ref|)`, and 1 when both are empty.
pub fn structure_accuracy(pred: &StructSeq, reference: &StructSeq) -> f64 {
    let longest = pred.len().max(reference.len());
    if longest == 0 {
        return 1.0;
    }
    let distance = edit_distance(&pred.tags, &reference.tags);
    1.0 - distance as f64 / longest as f64
}

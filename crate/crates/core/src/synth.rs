//! Paired page/Markdown dataset construction from local HTML.
//!
//! HTML (a strict subset: h1-h6, p, ul, ol, li, blockquote, em/i, strong/b,
//! br, plus transparent containers) is converted to a [`MarkdownDoc`],
//! split into pages of whole blocks, and written out as a JSON-lines
//! manifest with one Markdown file per page. Rasterization is delegated to
//! an external command.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::md_struct::{serialize_markdown, Block, Inline, ListKind, MarkdownDoc, SpanStyle};

pub const DEFAULT_MAX_CHARS: usize = 1800;
pub const MIN_MAX_CHARS: usize = 200;
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("HTML parse error at byte {offset}: {message}")]
    Html { offset: usize, message: String },
    #[error("{doc_id}: HTML parse error at byte {offset}: {message}")]
    Source { doc_id: String, offset: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {path} after {pages_written} page(s) were written: {source}")]
    Io { path: PathBuf, pages_written: usize, source: std::io::Error },
    #[error("invalid manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("render command template is invalid: {0}")]
    Config(String),
    #[error("failed to start renderer `{program}`: {source}")]
    Spawn { program: String, source: std::io::Error },
    #[error("renderer exited with status {}: {stderr}", code.map_or("signal".to_string(), |c| c.to_string()))]
    Failed { code: Option<i32>, stderr: String },
    #[error("renderer produced no output at {0}")]
    MissingOutput(PathBuf),
}

// ---------------------------------------------------------------------------
// HTML subset parser

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Element { name: String, children: Vec<Node> },
    Text(String),
}

const VOID: &[&str] = &["br", "hr", "img", "meta", "link", "input", "wbr", "col", "area", "base", "source"];
const RAW_TEXT: &[&str] = &["script", "style"];
const SKIPPED: &[&str] = &["head", "title", "script", "style", "template", "noscript"];
const CONTAINERS: &[&str] = &[
    "html", "body", "div", "section", "article", "main", "header", "footer", "nav", "aside",
    "figure", "figcaption", "hr", "table", "tr", "td", "th", "pre",
];

fn html_err(offset: usize, message: impl Into<String>) -> SynthError {
    SynthError::Html { offset, message: message.into() }
}

fn parse_html(html: &str) -> Result<Vec<Node>, SynthError> {
    struct Frame {
        name: String,
        offset: usize,
        children: Vec<Node>,
    }
    let bytes = html.as_bytes();
    let mut stack: Vec<Frame> = vec![Frame { name: String::new(), offset: 0, children: Vec::new() }];
    let mut pos = 0;
    let push_text = |stack: &mut Vec<Frame>, raw: &str| {
        if !raw.is_empty() {
            let text = html_escape::decode_html_entities(raw).into_owned();
            stack.last_mut().expect("root frame").children.push(Node::Text(text));
        }
    };

    while pos < bytes.len() {
        let Some(rel) = html[pos..].find('<') else {
            push_text(&mut stack, &html[pos..]);
            break;
        };
        let lt = pos + rel;
        push_text(&mut stack, &html[pos..lt]);
        let rest = &html[lt..];

        if rest.starts_with("<!--") {
            let end = rest.find("-->").ok_or_else(|| html_err(lt, "unterminated comment"))?;
            pos = lt + end + 3;
        } else if rest.starts_with("<!") || rest.starts_with("<?") {
            let end = rest.find('>').ok_or_else(|| html_err(lt, "unterminated declaration"))?;
            pos = lt + end + 1;
        } else if let Some(after) = rest.strip_prefix("</") {
            let name_len = after.bytes().take_while(u8::is_ascii_alphanumeric).count();
            let name = after[..name_len].to_ascii_lowercase();
            let end = rest.find('>').ok_or_else(|| html_err(lt, "unterminated closing tag"))?;
            if name.is_empty() || !after[name_len..end - 2].trim().is_empty() {
                return Err(html_err(lt, "malformed closing tag"));
            }
            pos = lt + end + 1;
            if VOID.contains(&name.as_str()) {
                continue;
            }
            if stack.len() == 1 {
                return Err(html_err(lt, format!("closing tag </{name}> has no matching open tag")));
            }
            let top = stack.last().expect("non-root frame");
            if top.name != name {
                return Err(html_err(lt, format!("closing tag </{name}> does not match open <{}>", top.name)));
            }
            let frame = stack.pop().expect("non-root frame");
            stack
                .last_mut()
                .expect("root frame")
                .children
                .push(Node::Element { name: frame.name, children: frame.children });
        } else if rest[1..].starts_with(|c: char| c.is_ascii_alphabetic()) {
            let name_len = rest[1..].bytes().take_while(u8::is_ascii_alphanumeric).count();
            let name = rest[1..1 + name_len].to_ascii_lowercase();
            let end = tag_end(rest).ok_or_else(|| html_err(lt, format!("unterminated tag <{name}")))?;
            let self_closing = rest[..end].ends_with('/');
            pos = lt + end + 1;
            if self_closing || VOID.contains(&name.as_str()) {
                stack.last_mut().expect("root frame").children.push(Node::Element { name, children: Vec::new() });
            } else if RAW_TEXT.contains(&name.as_str()) {
                let close = format!("</{name}");
                let body_end = html[pos..]
                    .to_ascii_lowercase()
                    .find(&close)
                    .ok_or_else(|| html_err(lt, format!("<{name}> is never closed")))?;
                let close_end = html[pos + body_end..]
                    .find('>')
                    .ok_or_else(|| html_err(pos + body_end, "unterminated closing tag"))?;
                pos += body_end + close_end + 1;
                stack.last_mut().expect("root frame").children.push(Node::Element { name, children: Vec::new() });
            } else {
                stack.push(Frame { name, offset: lt, children: Vec::new() });
            }
        } else {
            // A bare '<' that opens nothing is text.
            push_text(&mut stack, "<");
            pos = lt + 1;
        }
    }

    if stack.len() > 1 {
        let open = stack.last().expect("non-root frame");
        return Err(html_err(open.offset, format!("<{}> is never closed", open.name)));
    }
    Ok(stack.pop().expect("root frame").children)
}

/// Index of the `>` ending the tag that starts `tag`, skipping quoted
/// attribute values.
fn tag_end(tag: &str) -> Option<usize> {
    let mut quote: Option<char> = None;
    for (i, c) in tag.char_indices() {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, '"' | '\'') => quote = Some(c),
            (None, '>') => return Some(i),
            _ => {}
        }
    }
    None
}

// ---------------------------------------------------------------------------
// HTML to Markdown

#[derive(Default)]
struct Converter {
    blocks: Vec<Block>,
    pending: Vec<(SpanStyle, String)>,
    lists: Vec<ListKind>,
    quote_depth: usize,
    bold: usize,
    italic: usize,
}

fn heading_level(name: &str) -> Option<u8> {
    match name.as_bytes() {
        [b'h', d @ b'1'..=b'6'] => Some(d - b'0'),
        _ => None,
    }
}

impl Converter {
    fn style(&self) -> SpanStyle {
        if self.bold > 0 {
            SpanStyle::Bold
        } else if self.italic > 0 {
            SpanStyle::Italic
        } else {
            SpanStyle::Plain
        }
    }

    fn take_inline(&mut self) -> Inline {
        let spans = std::mem::take(&mut self.pending);
        Inline::from_spans(spans.iter().map(|(s, t)| (*s, t.as_str())))
    }

    fn emit(&mut self, block: Block) {
        let block = if self.quote_depth > 0 { Block::Blockquote(block.inline().clone()) } else { block };
        self.blocks.push(block);
    }

    /// Loose text outside any block element becomes a paragraph.
    fn flush(&mut self) {
        let text = self.take_inline();
        if !text.is_empty() {
            self.emit(Block::Paragraph(text));
        }
    }

    /// Collects inline content; nested lists are returned for later when
    /// `defer_lists` is set.
    fn inline<'a>(&mut self, nodes: &'a [Node], defer_lists: bool, deferred: &mut Vec<&'a Node>) {
        for node in nodes {
            match node {
                Node::Text(t) => self.pending.push((self.style(), t.clone())),
                Node::Element { name, children } => match name.as_str() {
                    "ul" | "ol" if defer_lists => deferred.push(node),
                    "br" => self.pending.push((SpanStyle::Plain, " ".into())),
                    n if SKIPPED.contains(&n) => {}
                    "strong" | "b" => {
                        self.bold += 1;
                        self.inline(children, defer_lists, deferred);
                        self.bold -= 1;
                    }
                    "em" | "i" => {
                        self.italic += 1;
                        self.inline(children, defer_lists, deferred);
                        self.italic -= 1;
                    }
                    n => {
                        let separate = CONTAINERS.contains(&n)
                            || heading_level(n).is_some()
                            || matches!(n, "p" | "li" | "ul" | "ol" | "blockquote");
                        if separate {
                            self.pending.push((SpanStyle::Plain, " ".into()));
                        }
                        self.inline(children, defer_lists, deferred);
                        if separate {
                            self.pending.push((SpanStyle::Plain, " ".into()));
                        }
                    }
                },
            }
        }
    }

    fn walk(&mut self, nodes: &[Node]) {
        for node in nodes {
            let (name, children) = match node {
                Node::Text(t) => {
                    self.pending.push((self.style(), t.clone()));
                    continue;
                }
                Node::Element { name, children } => (name.as_str(), children),
            };
            if let Some(level) = heading_level(name) {
                self.flush();
                self.inline(children, false, &mut Vec::new());
                let text = self.take_inline();
                self.emit(Block::Heading { level, text });
                continue;
            }
            match name {
                "p" => {
                    self.flush();
                    self.inline(children, false, &mut Vec::new());
                    self.flush();
                }
                "ul" | "ol" => {
                    self.flush();
                    self.lists.push(if name == "ol" { ListKind::Ordered } else { ListKind::Bullet });
                    self.walk(children);
                    self.flush();
                    self.lists.pop();
                }
                "li" => {
                    self.flush();
                    let mut nested = Vec::new();
                    self.inline(children, true, &mut nested);
                    let text = self.take_inline();
                    let kind = self.lists.last().copied().unwrap_or(ListKind::Bullet);
                    let depth = self.lists.len().saturating_sub(1);
                    self.emit(Block::ListItem { kind, depth, text });
                    self.walk_owned(&nested);
                }
                "blockquote" => {
                    self.flush();
                    self.quote_depth += 1;
                    self.walk(children);
                    self.flush();
                    self.quote_depth -= 1;
                }
                "br" => self.pending.push((SpanStyle::Plain, " ".into())),
                "strong" | "b" => {
                    self.bold += 1;
                    self.walk(children);
                    self.bold -= 1;
                }
                "em" | "i" => {
                    self.italic += 1;
                    self.walk(children);
                    self.italic -= 1;
                }
                n if SKIPPED.contains(&n) => {}
                n if CONTAINERS.contains(&n) => {
                    self.flush();
                    self.walk(children);
                    self.flush();
                }
                _ => self.walk(children),
            }
        }
    }

    fn walk_owned(&mut self, nodes: &[&Node]) {
        for node in nodes {
            self.walk(std::slice::from_ref(*node));
        }
    }
}

/// Converts the supported HTML subset to a Markdown document. Tags outside
/// the subset are unwrapped; `head`, `title`, `script` and `style` content is
/// dropped.
pub fn html_to_markdown(html: &str) -> Result<MarkdownDoc, SynthError> {
    let nodes = parse_html(html)?;
    let mut conv = Converter::default();
    conv.walk(&nodes);
    conv.flush();
    Ok(MarkdownDoc::new(conv.blocks).normalized())
}

// ---------------------------------------------------------------------------
// Pagination

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PageBudget {
    max_chars: usize,
}

impl PageBudget {
    pub fn new(max_chars: usize) -> Result<Self, SynthError> {
        if max_chars < MIN_MAX_CHARS {
            return Err(SynthError::Config(format!("page budget must be at least {MIN_MAX_CHARS} characters, got {max_chars}")));
        }
        Ok(PageBudget { max_chars })
    }

    pub fn max_chars(&self) -> usize {
        self.max_chars
    }
}

impl Default for PageBudget {
    fn default() -> Self {
        PageBudget { max_chars: DEFAULT_MAX_CHARS }
    }
}

/// Greedy packing of whole blocks into pages of at most `max_chars`
/// serialized characters. A block that alone exceeds the budget gets a page
/// to itself.
pub fn paginate(doc: &MarkdownDoc, budget: PageBudget) -> Vec<MarkdownDoc> {
    let mut pages = Vec::new();
    let mut current = MarkdownDoc::default();
    for block in &doc.blocks {
        current.blocks.push(block.clone());
        if current.blocks.len() > 1 && serialize_markdown(&current).chars().count() > budget.max_chars {
            let next = current.blocks.pop().expect("just pushed");
            pages.push(std::mem::take(&mut current));
            current.blocks.push(next);
        }
    }
    if !current.is_empty() {
        pages.push(current);
    }
    pages
}

/// Minimal standalone HTML for one page, handed to the external renderer.
pub fn page_html(doc: &MarkdownDoc, title: &str) -> String {
    fn inline_html(text: &Inline) -> String {
        text.spans()
            .iter()
            .map(|span| {
                let escaped = html_escape::encode_text(&span.text);
                match span.style {
                    SpanStyle::Plain => escaped.into_owned(),
                    SpanStyle::Bold => format!("<strong>{escaped}</strong>"),
                    SpanStyle::Italic => format!("<em>{escaped}</em>"),
                }
            })
            .collect()
    }

    let mut body = String::new();
    let mut open: Vec<ListKind> = Vec::new();
    let close_to = |open: &mut Vec<ListKind>, body: &mut String, n: usize| {
        while open.len() > n {
            let kind = open.pop().expect("non-empty");
            body.push_str(if kind == ListKind::Ordered { "</ol>\n" } else { "</ul>\n" });
        }
    };
    for block in &doc.blocks {
        match block {
            Block::ListItem { kind, depth, text } => {
                close_to(&mut open, &mut body, depth + 1);
                if open.len() == depth + 1 && open.last() != Some(kind) {
                    close_to(&mut open, &mut body, *depth);
                }
                while open.len() < depth + 1 {
                    body.push_str(if *kind == ListKind::Ordered { "<ol>\n" } else { "<ul>\n" });
                    open.push(*kind);
                }
                body.push_str(&format!("<li>{}</li>\n", inline_html(text)));
            }
            other => {
                close_to(&mut open, &mut body, 0);
                let inner = inline_html(other.inline());
                match other {
                    Block::Heading { level, .. } => body.push_str(&format!("<h{level}>{inner}</h{level}>\n")),
                    Block::Blockquote(_) => body.push_str(&format!("<blockquote><p>{inner}</p></blockquote>\n")),
                    _ => body.push_str(&format!("<p>{inner}</p>\n")),
                }
            }
        }
    }
    close_to(&mut open, &mut body, 0);
    format!(
        "<!DOCTYPE html>\n<html lang=\"ar\" dir=\"rtl\">\n<head><meta charset=\"utf-8\"><title>{}</title></head>\n<body>\n{body}</body>\n</html>\n",
        html_escape::encode_text(title)
    )
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(default)]
    pub page_index: usize,
    pub markdown: String,
    #[serde(rename = "image", default)]
    pub image_path: Option<String>,
    #[serde(default)]
    pub source: Option<String>,
}

pub fn page_id(doc_id: &str, page_index: usize) -> String {
    format!("{doc_id}_{page_index:04}")
}

/// Checks id uniqueness and, for every `source`, that page indices run
/// 0, 1, 2, ... without gaps.
pub fn check_manifest(entries: &[ManifestEntry]) -> Result<(), SynthError> {
    let mut ids = HashSet::new();
    let mut pages: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for entry in entries {
        if !ids.insert(entry.id.as_str()) {
            return Err(SynthError::Manifest(format!("duplicate id {}", entry.id)));
        }
        if entry.markdown.is_empty() {
            return Err(SynthError::Manifest(format!("entry {} has empty markdown", entry.id)));
        }
        if let Some(source) = &entry.source {
            pages.entry(source).or_default().push(entry.page_index);
        }
    }
    for (source, mut indices) in pages {
        indices.sort_unstable();
        if indices.iter().enumerate().any(|(i, &p)| i != p) {
            return Err(SynthError::Manifest(format!("page indices for {source} are not contiguous from 0")));
        }
    }
    Ok(())
}

pub fn manifest_to_jsonl(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for entry in entries {
        out.push_str(&serde_json::to_string(entry).expect("manifest entries always serialize"));
        out.push('\n');
    }
    out
}

/// Parses a JSON-lines manifest; errors carry the 1-based line number.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, SynthError> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| SynthError::Manifest(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Rendering

/// Runs the renderer for one page. The template is split like a shell
/// command line (no shell is involved) and `{html}` / `{png}` are replaced
/// in every argument.
pub fn render_page(page_html: &Path, png: &Path, cmd_template: &str) -> Result<PathBuf, RenderError> {
    for placeholder in ["{html}", "{png}"] {
        if !cmd_template.contains(placeholder) {
            return Err(RenderError::Config(format!("missing {placeholder} placeholder")));
        }
    }
    let args = shell_words::split(cmd_template).map_err(|e| RenderError::Config(e.to_string()))?;
    let html_arg = page_html.to_string_lossy();
    let png_arg = png.to_string_lossy();
    let args: Vec<String> =
        args.iter().map(|a| a.replace("{html}", &html_arg).replace("{png}", &png_arg)).collect();
    let (program, rest) = args.split_first().ok_or_else(|| RenderError::Config("empty command".into()))?;

    let output = Command::new(program)
        .args(rest)
        .output()
        .map_err(|source| RenderError::Spawn { program: program.clone(), source })?;
    if !output.status.success() {
        return Err(RenderError::Failed {
            code: output.status.code(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    match fs::metadata(png) {
        Ok(meta) if meta.len() > 0 => Ok(png.to_path_buf()),
        _ => Err(RenderError::MissingOutput(png.to_path_buf())),
    }
}

// ---------------------------------------------------------------------------
// Manifest construction

#[derive(Debug, Clone)]
pub struct Source {
    pub doc_id: String,
    pub html: String,
    /// Where the HTML came from, recorded in the manifest's `source` field.
    pub origin: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub budget: PageBudget,
    pub render_cmd: Option<String>,
    pub workers: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { budget: PageBudget::default(), render_cmd: None, workers: 1 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SynthOutput {
    pub entries: Vec<ManifestEntry>,
    pub warnings: Vec<String>,
    pub render_failures: usize,
}

fn check_doc_id(id: &str) -> Result<(), SynthError> {
    if id.is_empty() || id.starts_with('.') || id.contains(['/', '\\', '\0']) {
        return Err(SynthError::Config(format!("unusable document id {id:?}")));
    }
    Ok(())
}

struct PagePlan {
    doc_id: String,
    origin: Option<String>,
    index: usize,
    doc: MarkdownDoc,
}

/// Writes `pages/<id>.md` per page (and `pages/<id>.html` plus
/// `images/<id>.png` when a renderer is configured) and `manifest.jsonl`
/// under `out_dir`. Entries are ordered by (doc_id, page_index).
pub fn build_manifest(sources: &[Source], out_dir: &Path, config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    let mut seen = HashSet::new();
    for source in sources {
        check_doc_id(&source.doc_id)?;
        if !seen.insert(source.doc_id.as_str()) {
            return Err(SynthError::Config(format!("duplicate document id {}", source.doc_id)));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| SynthError::Config(e.to_string()))?;
    pool.install(|| build_in_pool(sources, out_dir, config))
}

fn build_in_pool(sources: &[Source], out_dir: &Path, config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    let mut ordered: Vec<&Source> = sources.iter().collect();
    ordered.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

    let per_source: Vec<Vec<PagePlan>> = ordered
        .par_iter()
        .map(|source| {
            let doc = html_to_markdown(&source.html).map_err(|e| match e {
                SynthError::Html { offset, message } => {
                    SynthError::Source { doc_id: source.doc_id.clone(), offset, message }
                }
                other => other,
            })?;
            Ok(paginate(&doc, config.budget)
                .into_iter()
                .enumerate()
                .map(|(index, doc)| PagePlan {
                    doc_id: source.doc_id.clone(),
                    origin: source.origin.clone(),
                    index,
                    doc,
                })
                .collect())
        })
        .collect::<Result<_, SynthError>>()?;
    let plans: Vec<PagePlan> = per_source.into_iter().flatten().collect();

    let pages_dir = out_dir.join("pages");
    let images_dir = out_dir.join("images");
    let io = |path: &Path, pages_written: usize| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, pages_written, source }
    };
    fs::create_dir_all(&pages_dir).map_err(io(&pages_dir, 0))?;
    if config.render_cmd.is_some() {
        fs::create_dir_all(&images_dir).map_err(io(&images_dir, 0))?;
    }

    let written = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<Result<(ManifestEntry, Option<String>), SynthError>> = plans
        .par_iter()
        .map(|plan| {
            let id = page_id(&plan.doc_id, plan.index);
            let markdown = serialize_markdown(&plan.doc);
            let md_path = pages_dir.join(format!("{id}.md"));
            let done = || written.load(std::sync::atomic::Ordering::SeqCst);
            fs::write(&md_path, &markdown).map_err(io(&md_path, done()))?;

            let mut image_path = None;
            let mut warning = None;
            if let Some(template) = &config.render_cmd {
                let html_path = pages_dir.join(format!("{id}.html"));
                fs::write(&html_path, page_html(&plan.doc, &id)).map_err(io(&html_path, done()))?;
                let png_path = images_dir.join(format!("{id}.png"));
                match render_page(&html_path, &png_path, template) {
                    Ok(_) => image_path = Some(format!("images/{id}.png")),
                    Err(RenderError::Config(msg)) => return Err(SynthError::Config(msg)),
                    Err(e) => warning = Some(format!("{id}: {e}")),
                }
            }
            written.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            let entry = ManifestEntry {
                id,
                page_index: plan.index,
                markdown,
                image_path,
                source: plan.origin.clone().or_else(|| Some(plan.doc_id.clone())),
            };
            Ok((entry, warning))
        })
        .collect();

    let mut output = SynthOutput::default();
    for result in results {
        let (entry, warning) = result?;
        if let Some(w) = warning {
            output.render_failures += 1;
            output.warnings.push(w);
        }
        output.entries.push(entry);
    }
    check_manifest(&output.entries)?;

    let manifest_path = out_dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, manifest_to_jsonl(&output.entries))
        .map_err(io(&manifest_path, output.entries.len()))?;
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::md_struct::{extract_structure, parse_markdown, StructTag};

    #[test]
    fn empty_html() {
        assert!(html_to_markdown("").unwrap().is_empty());
    }

    #[test]
    fn heading_and_paragraph() {
        let doc = html_to_markdown("<h1>T</h1><p>x</p>").unwrap();
        assert_eq!(doc.blocks, vec![Block::heading(1, "T"), Block::paragraph("x")]);
        assert_eq!(serialize_markdown(&doc), "# T\n\nx\n");
    }

    #[test]
    fn bullet_list() {
        let doc = html_to_markdown("<ul><li>a</li><li>b</li></ul>").unwrap();
        assert_eq!(doc.blocks, vec![Block::bullet(0, "a"), Block::bullet(0, "b")]);
    }

    #[test]
    fn nested_lists_and_quotes() {
        let html = "<ol><li>one<ul><li>sub</li></ul></li><li>two</li></ol>\
                    <blockquote><p>q1</p><p>q2</p></blockquote>";
        let doc = html_to_markdown(html).unwrap();
        assert_eq!(
            doc.blocks,
            vec![
                Block::ordered(0, "one"),
                Block::bullet(1, "sub"),
                Block::ordered(0, "two"),
                Block::blockquote("q1"),
                Block::blockquote("q2"),
            ]
        );
    }

    #[test]
    fn inline_styles_entities_and_unknown_tags() {
        let html = r#"<html><head><title>skip me</title><style>p{}</style></head>
            <body><div class="x"><p>أ <strong>ب</strong><br/>ج <em>د</em> <span>&amp; &#1607;</span></p></div>
            <script>var a = "<p>";</script></body></html>"#;
        let doc = html_to_markdown(html).unwrap();
        assert_eq!(serialize_markdown(&doc), "أ **ب** ج *د* & ه\n");
    }

    #[test]
    fn loose_text_becomes_paragraphs() {
        let doc = html_to_markdown("<div>one</div><div>two <b>three</b></div>").unwrap();
        assert_eq!(extract_structure(&doc).tags, vec![StructTag::Paragraph, StructTag::Paragraph]);
    }

    #[test]
    fn unbalanced_tags_report_offsets() {
        match html_to_markdown("<p>a</div>") {
            Err(SynthError::Html { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
        match html_to_markdown("<h1>x</h1><p>open") {
            Err(SynthError::Html { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(html_to_markdown("</p>"), Err(SynthError::Html { offset: 0, .. })));
        assert!(matches!(html_to_markdown("<p>a</p"), Err(SynthError::Html { .. })));
    }

    #[test]
    fn greedy_pagination() {
        let para = "ب".repeat(500);
        let doc = MarkdownDoc::new((0..10).map(|_| Block::paragraph(para.as_str())).collect());
        let pages = paginate(&doc, PageBudget::new(1800).unwrap());
        let sizes: Vec<usize> = pages.iter().map(|p| p.blocks.len()).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
    }

    #[test]
    fn small_doc_is_one_page_and_big_block_stands_alone() {
        let doc = MarkdownDoc::new(vec![Block::heading(1, "t"), Block::paragraph("x")]);
        assert_eq!(paginate(&doc, PageBudget::default()), vec![doc.clone()]);

        let big = "x".repeat(900);
        let doc = MarkdownDoc::new(vec![
            Block::paragraph("a"),
            Block::paragraph(big.as_str()),
            Block::paragraph("b"),
        ]);
        let pages = paginate(&doc, PageBudget::new(500).unwrap());
        assert_eq!(pages.len(), 3);
        assert!(paginate(&MarkdownDoc::default(), PageBudget::default()).is_empty());
    }

    #[test]
    fn pages_rejoin_losslessly() {
        let mut blocks = vec![Block::heading(1, "title")];
        for i in 0..40 {
            blocks.push(Block::paragraph(format!("paragraph {i} ").repeat(8).as_str()));
            blocks.push(Block::bullet(0, "item"));
            blocks.push(Block::bullet(1, "nested item"));
        }
        let doc = MarkdownDoc::new(blocks);
        let pages = paginate(&doc, PageBudget::new(300).unwrap());
        assert!(pages.len() > 5);
        let joined: Vec<String> = pages.iter().map(serialize_markdown).collect();
        assert_eq!(parse_markdown(&joined.join("\n")), doc);
    }

    #[test]
    fn budget_floor() {
        assert!(PageBudget::new(199).is_err());
        assert_eq!(PageBudget::new(200).unwrap().max_chars(), 200);
        assert_eq!(PageBudget::default().max_chars(), 1800);
    }

    #[test]
    fn page_html_nests_lists() {
        let doc = MarkdownDoc::new(vec![
            Block::bullet(0, "a"),
            Block::bullet(1, "b"),
            Block::ordered(0, "c"),
            Block::paragraph("<x>"),
        ]);
        let html = page_html(&doc, "p");
        assert!(html.contains("<ul>\n<li>a</li>\n<ul>\n<li>b</li>\n</ul>\n</ul>\n<ol>\n<li>c</li>\n</ol>\n<p>&lt;x&gt;</p>"));
        // The page HTML maps back to the same structure.
        assert_eq!(extract_structure(&html_to_markdown(&html).unwrap()), extract_structure(&doc));
    }

    #[test]
    fn manifest_checks() {
        let entry = |id: &str, p: usize| ManifestEntry {
            id: id.into(),
            page_index: p,
            markdown: "x\n".into(),
            image_path: None,
            source: Some("s.html".into()),
        };
        assert!(check_manifest(&[entry("a", 0), entry("b", 1)]).is_ok());
        assert!(check_manifest(&[entry("a", 0), entry("a", 1)]).is_err());
        assert!(check_manifest(&[entry("a", 0), entry("b", 2)]).is_err());
    }

    #[test]
    fn manifest_line_format() {
        let entry = ManifestEntry {
            id: "book_0000".into(),
            page_index: 0,
            markdown: "# عنوان\n".into(),
            image_path: None,
            source: Some("book.html".into()),
        };
        let line = manifest_to_jsonl(std::slice::from_ref(&entry));
        assert_eq!(
            line,
            "{\"id\":\"book_0000\",\"page_index\":0,\"markdown\":\"# عنوان\\n\",\"image\":null,\"source\":\"book.html\"}\n"
        );
        assert_eq!(parse_manifest(&line).unwrap(), vec![entry]);
        let err = parse_manifest("\n{\"id\": 3}\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn render_template_validation() {
        let p = Path::new("/nonexistent/x.html");
        let q = Path::new("/nonexistent/x.png");
        assert!(matches!(render_page(p, q, "cp {html} out.png"), Err(RenderError::Config(_))));
        assert!(matches!(render_page(p, q, "cp in.html {png}"), Err(RenderError::Config(_))));
    }
}

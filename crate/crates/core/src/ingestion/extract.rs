//! Main-text extraction for HTML, plain text and text-layer PDF bodies.
//!
//! HTML boilerplate removal is rule-based: elements are dropped by tag name,
//! ARIA role, or class/id token according to [`BoilerplateRules`]. What is
//! left is flattened into blocks (headings, paragraphs, list items) separated
//! by a blank line, except that consecutive list items are separated by a
//! single newline.

use std::collections::HashSet;
use std::sync::OnceLock;

use ego_tree::NodeRef;
use scraper::{Html, Node, Selector};
use serde::Deserialize;

use super::{IngestError, SectionHeader};
use crate::text::{char_len, normalize_line, normalize_plain};

const DEFAULT_RULES: &str = include_str!("../../data/boilerplate.json");

/// Text plus headings produced by [`extract_text`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedText {
    pub text: String,
    pub section_headers: Vec<SectionHeader>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BoilerplateRules {
    pub version: String,
    pub tags: HashSet<String>,
    pub roles: HashSet<String>,
    pub class_id_tokens: HashSet<String>,
    /// Selectors tried in order to find the main content root.
    pub main_selectors: Vec<String>,
}

impl BoilerplateRules {
    pub fn embedded() -> &'static BoilerplateRules {
        static RULES: OnceLock<BoilerplateRules> = OnceLock::new();
        RULES.get_or_init(|| serde_json::from_str(DEFAULT_RULES).expect("embedded boilerplate rules are valid"))
    }

    pub fn from_json_str(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    fn token_blocked(&self, token: &str) -> bool {
        let token = token.to_ascii_lowercase();
        self.class_id_tokens.contains(&token) || token.split(['-', '_']).any(|part| self.class_id_tokens.contains(part))
    }

    fn is_blocked(&self, el: &scraper::node::Element) -> bool {
        if self.tags.contains(el.name()) {
            return true;
        }
        if el.attr("hidden").is_some() || el.attr("aria-hidden") == Some("true") {
            return true;
        }
        if let Some(style) = el.attr("style") {
            let compact: String = style.chars().filter(|c| !c.is_whitespace()).collect();
            if compact.to_ascii_lowercase().contains("display:none") {
                return true;
            }
        }
        if let Some(role) = el.attr("role") {
            if self.roles.contains(&role.trim().to_ascii_lowercase()) {
                return true;
            }
        }
        el.classes().any(|c| self.token_blocked(c)) || el.id().is_some_and(|id| self.token_blocked(id))
    }
}

/// Extract normalized main text from a body of the given MIME type.
pub fn extract_text(body: &[u8], content_type: &str) -> Result<ExtractedText, IngestError> {
    extract_text_with(body, content_type, BoilerplateRules::embedded())
}

pub fn extract_text_with(
    body: &[u8],
    content_type: &str,
    rules: &BoilerplateRules,
) -> Result<ExtractedText, IngestError> {
    let essence = content_type.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
    match essence.as_str() {
        "text/html" | "application/xhtml+xml" => {
            let html = String::from_utf8_lossy(strip_bom(body));
            Ok(extract_html(&html, rules))
        }
        "text/plain" => {
            let text = std::str::from_utf8(strip_bom(body)).map_err(|_| IngestError::InvalidEncoding)?;
            Ok(ExtractedText {
                text: normalize_plain(text),
                section_headers: Vec::new(),
            })
        }
        "application/pdf" => extract_pdf(body),
        _ => Err(IngestError::UnsupportedFormat(content_type.to_string())),
    }
}

fn strip_bom(body: &[u8]) -> &[u8] {
    body.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(body)
}

fn extract_pdf(body: &[u8]) -> Result<ExtractedText, IngestError> {
    let doc = lopdf::Document::load_mem(body).map_err(|e| IngestError::MalformedPdf(e.to_string()))?;
    let mut raw = String::new();
    for page in doc.get_pages().keys() {
        if let Ok(t) = doc.extract_text(&[*page]) {
            raw.push_str(&t);
            raw.push_str("\n\n");
        }
    }
    let text = normalize_plain(&raw);
    if text.is_empty() {
        return Err(IngestError::NoTextLayer);
    }
    Ok(ExtractedText {
        text,
        section_headers: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    Paragraph,
    ListItem,
    Heading(u8),
}

struct Walker<'r> {
    rules: &'r BlockerRef<'r>,
    blocks: Vec<(BlockKind, String)>,
    buf: String,
    kinds: Vec<BlockKind>,
}

/// Rules plus the root that is exempt from class/id blocking.
struct BlockerRef<'r> {
    rules: &'r BoilerplateRules,
    root: ego_tree::NodeId,
}

const BLOCK_TAGS: &[&str] = &[
    "html",
    "body",
    "main",
    "article",
    "section",
    "div",
    "p",
    "ul",
    "ol",
    "dl",
    "dt",
    "dd",
    "table",
    "thead",
    "tbody",
    "tfoot",
    "tr",
    "blockquote",
    "pre",
    "address",
    "figure",
    "figcaption",
    "hr",
    "center",
    "details",
    "summary",
    "fieldset",
    "caption",
    "li",
    "h1",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
];

impl<'r> Walker<'r> {
    fn kind(&self) -> BlockKind {
        *self.kinds.last().unwrap_or(&BlockKind::Paragraph)
    }

    fn flush(&mut self) {
        if self.buf.trim().is_empty() {
            self.buf.clear();
            return;
        }
        let raw = std::mem::take(&mut self.buf);
        let kind = self.kind();
        let text = match kind {
            BlockKind::Paragraph => raw
                .split('\n')
                .map(normalize_line)
                .filter(|l| !l.is_empty())
                .collect::<Vec<_>>()
                .join("\n"),
            BlockKind::ListItem => {
                let line = normalize_line(&raw.replace('\n', " "));
                if line.is_empty() {
                    line
                } else {
                    format!("- {line}")
                }
            }
            BlockKind::Heading(_) => normalize_line(&raw.replace('\n', " ")),
        };
        if !text.is_empty() {
            self.blocks.push((kind, text));
        }
    }

    fn walk(&mut self, node: NodeRef<'_, Node>) {
        match node.value() {
            Node::Text(t) => self.buf.push_str(t),
            Node::Element(el) => {
                let blocked = if node.id() == self.rules.root {
                    false
                } else {
                    self.rules.rules.is_blocked(el)
                };
                if blocked {
                    return;
                }
                let name = el.name();
                match name {
                    "br" => self.buf.push('\n'),
                    "h1" | "h2" | "h3" | "h4" | "h5" | "h6" => {
                        let depth = name.as_bytes()[1] - b'0';
                        self.flush();
                        self.kinds.push(BlockKind::Heading(depth));
                        self.children(node);
                        self.flush();
                        self.kinds.pop();
                    }
                    "li" => {
                        self.flush();
                        self.kinds.push(BlockKind::ListItem);
                        self.children(node);
                        self.flush();
                        self.kinds.pop();
                    }
                    "td" | "th" => {
                        self.children(node);
                        self.buf.push(' ');
                    }
                    _ if BLOCK_TAGS.contains(&name) => {
                        self.flush();
                        self.children(node);
                        self.flush();
                    }
                    _ => self.children(node),
                }
            }
            Node::Document | Node::Fragment => self.children(node),
            _ => {}
        }
    }

    fn children(&mut self, node: NodeRef<'_, Node>) {
        for child in node.children() {
            self.walk(child);
        }
    }
}

fn main_root<'a>(doc: &'a Html, rules: &BoilerplateRules) -> NodeRef<'a, Node> {
    for sel in &rules.main_selectors {
        let Ok(selector) = Selector::parse(sel) else {
            continue;
        };
        if let Some(el) = doc.select(&selector).find(|el| el.text().any(|t| !t.trim().is_empty())) {
            return *el;
        }
    }
    let body = Selector::parse("body").expect("static selector");
    doc.select(&body)
        .next()
        .map(|el| *el)
        .unwrap_or_else(|| doc.tree.root())
}

fn extract_html(html: &str, rules: &BoilerplateRules) -> ExtractedText {
    let doc = Html::parse_document(html);
    let root = main_root(&doc, rules);
    let blocker = BlockerRef { rules, root: root.id() };
    let mut walker = Walker {
        rules: &blocker,
        blocks: Vec::new(),
        buf: String::new(),
        kinds: Vec::new(),
    };
    walker.walk(root);
    walker.flush();

    let mut text = String::new();
    let mut offset = 0usize;
    let mut headers = Vec::new();
    let mut prev: Option<BlockKind> = None;
    for (kind, block) in walker.blocks {
        if let Some(p) = prev {
            let sep = if p == BlockKind::ListItem && kind == BlockKind::ListItem {
                "\n"
            } else {
                "\n\n"
            };
            text.push_str(sep);
            offset += sep.len();
        }
        if let BlockKind::Heading(depth) = kind {
            headers.push(SectionHeader {
                depth,
                text: block.clone(),
                offset,
            });
        }
        offset += char_len(&block);
        text.push_str(&block);
        prev = Some(kind);
    }
    ExtractedText {
        text,
        section_headers: headers,
    }
}

//! Clause segmentation.
//!
//! A segment is a paragraph (lines between blank lines) or a single `"- "`
//! list line. Heading lines, identified by the document's header offsets,
//! are not segments; they set the section path of what follows. Blocks
//! shorter than the minimum length merge forward into the next block of the
//! same section.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ingestion::PolicyDocument;
use crate::text::{char_len, char_slice};

pub const DEFAULT_MIN_SEGMENT_CHARS: usize = 25;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub text: String,
    pub section_path: Vec<String>,
    /// Char offsets into the document text, half-open.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    pub min_segment_chars: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            min_segment_chars: DEFAULT_MIN_SEGMENT_CHARS,
        }
    }
}

struct Block {
    start: usize,
    end: usize,
    section: usize,
    path: Vec<String>,
}

/// Segment with the default minimum length.
pub fn segment(doc: &PolicyDocument) -> Vec<Segment> {
    segment_with(doc, SegmenterConfig::default())
}

pub fn segment_with(doc: &PolicyDocument, config: SegmenterConfig) -> Vec<Segment> {
    let text = &doc.text;
    let headers: HashMap<usize, (u8, &str)> = doc
        .section_headers
        .iter()
        .map(|h| (h.offset, (h.depth, h.text.as_str())))
        .collect();

    let mut blocks: Vec<Block> = Vec::new();
    let mut stack: Vec<(u8, String)> = Vec::new();
    let mut section = 0usize;
    let mut open: Option<Block> = None;
    let path_of = |stack: &[(u8, String)]| stack.iter().map(|(_, t)| t.clone()).collect::<Vec<_>>();

    let mut offset = 0usize;
    for line in text.split('\n') {
        let len = char_len(line);
        let (start, end) = (offset, offset + len);
        offset = end + 1;

        if let Some((depth, title)) = headers.get(&start) {
            blocks.extend(open.take());
            while stack.last().is_some_and(|(d, _)| d >= depth) {
                stack.pop();
            }
            stack.push((*depth, title.to_string()));
            section += 1;
            continue;
        }
        if line.trim().is_empty() {
            blocks.extend(open.take());
            continue;
        }
        if line.starts_with("- ") {
            blocks.extend(open.take());
            blocks.push(Block {
                start,
                end,
                section,
                path: path_of(&stack),
            });
            continue;
        }
        match open.as_mut() {
            Some(b) => b.end = end,
            None => {
                open = Some(Block {
                    start,
                    end,
                    section,
                    path: path_of(&stack),
                })
            }
        }
    }
    blocks.extend(open);

    // Merge short blocks forward within a section.
    let mut merged: Vec<Block> = Vec::with_capacity(blocks.len());
    let mut carry: Option<Block> = None;
    for mut block in blocks {
        if let Some(c) = carry.take() {
            if c.section == block.section {
                block.start = c.start;
                block.path = c.path;
            } else {
                merged.push(c);
            }
        }
        let body = char_slice(text, block.start, block.end).trim();
        if char_len(body) < config.min_segment_chars {
            carry = Some(block);
        } else {
            merged.push(block);
        }
    }
    merged.extend(carry);

    merged
        .into_iter()
        .enumerate()
        .map(|(i, b)| Segment {
            id: format!("seg-{i}"),
            text: char_slice(text, b.start, b.end).trim().to_string(),
            section_path: b.path,
            start: b.start,
            end: b.end,
        })
        .collect()
}

/// Id of the segment whose `[start, end)` range contains `offset`.
pub fn locate(segments: &[Segment], offset: usize) -> Option<&str> {
    let i = segments.partition_point(|s| s.end <= offset);
    segments
        .get(i)
        .filter(|s| s.start <= offset && offset < s.end)
        .map(|s| s.id.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::{extract_text, PolicySource, SectionHeader};
    use proptest::prelude::*;

    fn doc(text: &str, headers: Vec<SectionHeader>) -> PolicyDocument {
        PolicyDocument::new(
            PolicySource::local("example.com", "text/plain", text.as_bytes()).unwrap(),
            crate::ingestion::ExtractedText {
                text: text.to_string(),
                section_headers: headers,
            },
        )
    }

    fn html_doc(html: &str) -> PolicyDocument {
        PolicyDocument::new(
            PolicySource::local("example.com", "text/html", html.as_bytes()).unwrap(),
            extract_text(html.as_bytes(), "text/html").unwrap(),
        )
    }

    #[test]
    fn empty_document_has_no_segments() {
        assert!(segment(&doc("", vec![])).is_empty());
    }

    #[test]
    fn header_sets_section_path_for_both_paragraphs() {
        let d = html_doc(
            "<h1>Data We Collect</h1>\
             <p>We collect your email address when you register.</p>\
             <p>We also collect usage data automatically from your device.</p>",
        );
        let segs = segment(&d);
        assert_eq!(segs.len(), 2);
        for s in &segs {
            assert_eq!(s.section_path, vec!["Data We Collect".to_string()]);
        }
        assert_eq!(segs[0].id, "seg-0");
        assert_eq!(
            segs[1].text,
            "We also collect usage data automatically from your device."
        );
    }

    #[test]
    fn paragraph_and_three_list_lines_make_four_segments() {
        let d = html_doc(
            "<p>We collect the following categories of data:</p>\
             <ul><li>Your email address and phone number</li>\
             <li>Your precise location from GPS sensors</li>\
             <li>Payment information such as credit cards</li></ul>",
        );
        let segs = segment(&d);
        assert_eq!(segs.len(), 4);
        assert!(segs[1].text.starts_with("- Your email"));
    }

    #[test]
    fn short_block_merges_into_next_in_same_section() {
        let text = "Summary\n\nThis paragraph is long enough to stand alone.";
        let segs = segment(&doc(text, vec![]));
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].start, 0);
        assert_eq!(segs[0].text, text);
    }

    #[test]
    fn short_block_does_not_cross_a_header() {
        let text = "Short.\n\nNext section\n\nThis paragraph is long enough to stand alone.";
        let headers = vec![SectionHeader {
            depth: 2,
            text: "Next section".into(),
            offset: 8,
        }];
        let segs = segment(&doc(text, headers));
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].text, "Short.");
        assert!(segs[0].section_path.is_empty());
        assert_eq!(segs[1].section_path, vec!["Next section".to_string()]);
    }

    #[test]
    fn nested_headers_build_path() {
        let d = html_doc(
            "<h1>Policy</h1><h2>Sharing</h2><p>We share data with our advertising partners.</p>\
             <h2>Retention</h2><p>We keep your data for as long as we wish to.</p>",
        );
        let segs = segment(&d);
        assert_eq!(segs[0].section_path, vec!["Policy", "Sharing"]);
        assert_eq!(segs[1].section_path, vec!["Policy", "Retention"]);
    }

    #[test]
    fn locate_uses_half_open_ranges() {
        let text = "First paragraph that is long enough here.\n\nSecond paragraph that is long enough too.";
        let segs = segment(&doc(text, vec![]));
        assert_eq!(locate(&segs, 0), Some("seg-0"));
        assert_eq!(locate(&segs, segs[1].start + 3), Some("seg-1"));
        assert_eq!(locate(&segs, segs[0].end), None, "gap between segments");
        assert_eq!(locate(&segs, segs[1].end), None, "end of last segment");
    }

    fn non_ws(s: &str) -> Vec<char> {
        let mut v: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        v.sort_unstable();
        v
    }

    fn arb_doc() -> impl Strategy<Value = PolicyDocument> {
        let block = prop_oneof![
            "[a-z]{1,12}( [a-z]{1,12}){0,8}\\.".prop_map(|s| (0u8, s)),
            "[a-z]{1,12}( [a-z]{1,12}){0,4}".prop_map(|s| (1u8, format!("- {s}"))),
            "[A-Z][a-z]{2,10}".prop_map(|s| (2u8, s)),
        ];
        proptest::collection::vec(block, 0..15).prop_map(|blocks| {
            let mut text = String::new();
            let mut headers = Vec::new();
            for (i, (kind, b)) in blocks.iter().enumerate() {
                if i > 0 {
                    text.push_str(if *kind == 1 && blocks[i - 1].0 == 1 {
                        "\n"
                    } else {
                        "\n\n"
                    });
                }
                if *kind == 2 {
                    headers.push(SectionHeader {
                        depth: 1 + (b.len() % 3) as u8,
                        text: b.clone(),
                        offset: char_len(&text),
                    });
                }
                text.push_str(b);
            }
            doc(&text, headers)
        })
    }

    proptest! {
        #[test]
        fn segment_invariants_hold(d in arb_doc()) {
            let segs = segment(&d);
            let mut prev_end = 0;
            for (i, s) in segs.iter().enumerate() {
                prop_assert_eq!(&s.id, &format!("seg-{i}"));
                prop_assert!(s.start >= prev_end);
                prop_assert!(s.start < s.end);
                prop_assert!(!s.text.is_empty());
                prop_assert_eq!(s.text.as_str(), char_slice(&d.text, s.start, s.end).trim());
                prev_end = s.end;
            }
            // Reconstruction: all non-header content is covered.
            let header_chars: String = d.section_headers.iter().map(|h| h.text.clone()).collect();
            let mut expected = non_ws(&d.text);
            for c in non_ws(&header_chars) {
                let pos = expected.binary_search(&c).unwrap();
                expected.remove(pos);
            }
            let joined: String = segs.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n");
            prop_assert_eq!(non_ws(&joined), expected);
            prop_assert_eq!(segment(&d), segs);
        }
    }
}

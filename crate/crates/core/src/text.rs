//! Small text helpers shared across stages.
//!
//! Offsets exposed by this crate are counted in Unicode scalar values
//! (`char`s), not bytes.

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of the UTF-8 bytes of `text`.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Byte index of the `char_offset`-th character, or `text.len()` past the end.
pub fn byte_index(text: &str, char_offset: usize) -> usize {
    text.char_indices()
        .nth(char_offset)
        .map(|(i, _)| i)
        .unwrap_or(text.len())
}

/// Slice by char offsets. Out-of-range bounds are clamped.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let s = byte_index(text, start);
    let e = byte_index(text, end.max(start));
    &text[s..e]
}

/// First `n` characters of `text`.
pub fn take_chars(text: &str, n: usize) -> &str {
    &text[..byte_index(text, n)]
}

const BULLETS: &[char] = &['•', '·', '◦', '‣', '▪', '●', '*', '–', '—'];

/// Collapse whitespace runs to one space, trim, and rewrite a leading bullet
/// glyph as `"- "`.
pub fn normalize_line(line: &str) -> String {
    let collapsed = line.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut chars = collapsed.chars();
    match chars.next() {
        Some(c) if BULLETS.contains(&c) && collapsed[c.len_utf8()..].starts_with(' ') => {
            let rest = collapsed[c.len_utf8()..].trim_start();
            if rest.is_empty() {
                String::new()
            } else {
                format!("- {rest}")
            }
        }
        _ => collapsed,
    }
}

/// Normalize a plain-text body: line endings, per-line whitespace and bullets,
/// and at most one blank line between blocks.
pub fn normalize_plain(text: &str) -> String {
    let unified = text.replace("\r\n", "\n").replace('\r', "\n");
    let mut out = String::with_capacity(unified.len());
    let mut pending_blank = false;
    for raw in unified.split('\n') {
        let line = normalize_line(raw);
        if line.is_empty() {
            pending_blank = !out.is_empty();
            continue;
        }
        if !out.is_empty() {
            out.push('\n');
            if pending_blank {
                out.push('\n');
            }
        }
        pending_blank = false;
        out.push_str(&line);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_lowercase_hex() {
        let h = sha256_hex("abc");
        assert_eq!(h, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn char_slicing_handles_multibyte() {
        let t = "héllo wörld";
        assert_eq!(char_slice(t, 1, 5), "éllo");
        assert_eq!(char_slice(t, 6, 100), "wörld");
        assert_eq!(take_chars(t, 2), "hé");
    }

    #[test]
    fn bullets_become_dashes() {
        assert_eq!(normalize_line("  •   emails  "), "- emails");
        assert_eq!(normalize_line("* location"), "- location");
        assert_eq!(normalize_line("*bold*"), "*bold*");
        assert_eq!(normalize_line("- already"), "- already");
    }

    #[test]
    fn plain_normalization_collapses_blank_runs() {
        let input = "  Title \r\n\r\n\r\n\tBody   text\n\n\n\n- a\n- b\n\n";
        assert_eq!(normalize_plain(input), "Title\n\nBody text\n\n- a\n- b");
    }

    #[test]
    fn plain_normalization_is_idempotent() {
        let once = normalize_plain(" a \n\n\n b\n • c ");
        assert_eq!(normalize_plain(&once), once);
    }
}

use scraper::{Html, Selector};
use url::Url;

use super::IngestError;

/// Patterns matched case-insensitively against link text or href path.
/// Earlier entries win; ties go to the earliest anchor in the document.
pub const PRIVACY_LINK_PATTERNS: [&str; 6] = [
    "privacy policy",
    "privacy notice",
    "privacy",
    "/privacy",
    "/legal/privacy",
    "datenschutz",
];

/// Find the most likely privacy-policy link on a homepage.
pub fn discover_policy_url(homepage_html: &str, base_url: &str) -> Result<Option<Url>, IngestError> {
    let base = Url::parse(base_url).map_err(|e| IngestError::InvalidInput(format!("base URL {base_url:?}: {e}")))?;
    if base.cannot_be_a_base() || base.host_str().is_none() {
        return Err(IngestError::InvalidInput(format!(
            "base URL {base_url:?} is not absolute"
        )));
    }

    let doc = Html::parse_document(homepage_html);
    let anchors = Selector::parse("a[href]").expect("static selector");

    let mut best: Option<(usize, Url)> = None;
    for anchor in doc.select(&anchors) {
        let Some(href) = anchor.value().attr("href") else {
            continue;
        };
        let Ok(resolved) = base.join(href.trim()) else {
            continue;
        };
        if !matches!(resolved.scheme(), "http" | "https") {
            continue;
        }
        let text = anchor
            .text()
            .collect::<String>()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        let path = resolved.path().to_lowercase();

        let rank = PRIVACY_LINK_PATTERNS
            .iter()
            .position(|p| text.contains(p) || path.contains(p));
        if let Some(rank) = rank {
            // Strict comparison keeps the earliest anchor on ties.
            if best.as_ref().is_none_or(|(r, _)| rank < *r) {
                best = Some((rank, resolved));
            }
        }
    }
    Ok(best.map(|(_, url)| url))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_href_resolves_against_base() {
        let html = r#"<a href="/legal/privacy">Privacy Policy</a>"#;
        let url = discover_policy_url(html, "https://ex.com").unwrap().unwrap();
        assert_eq!(url.as_str(), "https://ex.com/legal/privacy");
    }

    #[test]
    fn empty_page_has_no_link() {
        assert_eq!(discover_policy_url("", "https://ex.com").unwrap(), None);
    }

    #[test]
    fn privacy_policy_text_beats_weaker_match() {
        let html = r#"
            <a href="/privacy-terms">Terms</a>
            <a href="/p/2">Privacy Policy</a>
        "#;
        let url = discover_policy_url(html, "https://ex.com/").unwrap().unwrap();
        assert_eq!(url.as_str(), "https://ex.com/p/2");
    }

    #[test]
    fn ties_go_to_first_anchor() {
        let html = r#"<a href="/a">Privacy</a><a href="/b">privacy</a>"#;
        let url = discover_policy_url(html, "https://ex.com/").unwrap().unwrap();
        assert_eq!(url.path(), "/a");
    }

    #[test]
    fn href_path_alone_can_match() {
        let html = r#"<a href="https://other.org/de/datenschutz">Rechtliches</a>"#;
        let url = discover_policy_url(html, "https://ex.de/").unwrap().unwrap();
        assert_eq!(url.as_str(), "https://other.org/de/datenschutz");
    }

    #[test]
    fn non_http_links_are_ignored() {
        let html = r#"<a href="mailto:privacy@ex.com">Privacy Policy</a>"#;
        assert_eq!(discover_policy_url(html, "https://ex.com").unwrap(), None);
    }

    #[test]
    fn malformed_base_is_invalid_input() {
        assert!(matches!(
            discover_policy_url("<a href='/privacy'>x</a>", "not a url"),
            Err(IngestError::InvalidInput(_))
        ));
    }

    #[test]
    fn discovery_is_deterministic() {
        let html = r#"<nav><a href="/privacy">Privacy</a><a href="/legal/privacy">Privacy notice</a></nav>"#;
        let first = discover_policy_url(html, "https://ex.com").unwrap();
        for _ in 0..10 {
            assert_eq!(discover_policy_url(html, "https://ex.com").unwrap(), first);
        }
        assert_eq!(first.unwrap().path(), "/legal/privacy");
    }
}

use std::sync::OnceLock;

use regex::{Captures, Regex};

struct Patterns {
    drop_blocks: Regex,
    comment: Regex,
    anchor: Regex,
    href: Regex,
    block_break: Regex,
    tag: Regex,
    entity: Regex,
    spaces: Regex,
    blank_lines: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        drop_blocks: Regex::new(r"(?is)<(script|style|head)\b[^>]*>.*?</(script|style|head)\s*>").unwrap(),
        comment: Regex::new(r"(?s)<!--.*?-->").unwrap(),
        anchor: Regex::new(r"(?is)<a\b([^>]*)>(.*?)</a\s*>").unwrap(),
        href: Regex::new(r#"(?i)\bhref\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>]+))"#).unwrap(),
        block_break: Regex::new(r"(?i)<\s*(br|/p|p|/div|div|/li|li|/tr|tr|/h[1-6]|h[1-6]|/table|hr)\b[^>]*>").unwrap(),
        tag: Regex::new(r"(?s)<[^>]*>").unwrap(),
        entity: Regex::new(r"&(#[0-9]{1,7}|#[xX][0-9a-fA-F]{1,6}|[a-zA-Z]{2,8});").unwrap(),
        spaces: Regex::new(r"[ \t\u{a0}]+").unwrap(),
        blank_lines: Regex::new(r"\n{2,}").unwrap(),
    })
}

fn decode_entities(text: &str) -> String {
    patterns()
        .entity
        .replace_all(text, |caps: &Captures| {
            let name = &caps[1];
            let decoded = if let Some(hex) = name.strip_prefix("#x").or_else(|| name.strip_prefix("#X")) {
                u32::from_str_radix(hex, 16).ok().and_then(char::from_u32)
            } else if let Some(dec) = name.strip_prefix('#') {
                dec.parse::<u32>().ok().and_then(char::from_u32)
            } else {
                match name.to_ascii_lowercase().as_str() {
                    "amp" => Some('&'),
                    "lt" => Some('<'),
                    "gt" => Some('>'),
                    "quot" => Some('"'),
                    "apos" => Some('\''),
                    "nbsp" => Some(' '),
                    _ => None,
                }
            };
            decoded.map_or_else(|| caps[0].to_string(), |c| c.to_string())
        })
        .into_owned()
}

/// Reduces an HTML document to its visible text.
///
/// Anchor targets are kept: when an `href` is not already part of the link
/// text it is appended after it, so URL extraction still sees it.
pub fn html_to_text(html: &str) -> String {
    let p = patterns();
    let without_blocks = p.drop_blocks.replace_all(html, " ");
    let without_comments = p.comment.replace_all(&without_blocks, " ");
    let with_links = p.anchor.replace_all(&without_comments, |caps: &Captures| {
        let inner = p.tag.replace_all(&caps[2], " ");
        let inner = decode_entities(&inner);
        let href = p.href.captures(&caps[1]).and_then(|h| {
            h.get(1).or_else(|| h.get(2)).or_else(|| h.get(3)).map(|m| decode_entities(m.as_str()))
        });
        match href {
            Some(target) if !inner.contains(&target) && target.to_ascii_lowercase().starts_with("http") => {
                format!(" {} {} ", inner.trim(), target)
            }
            _ => format!(" {} ", inner.trim()),
        }
    });
    let with_breaks = p.block_break.replace_all(&with_links, "\n");
    let stripped = p.tag.replace_all(&with_breaks, " ");
    let decoded = decode_entities(&stripped);
    let collapsed = p.spaces.replace_all(&decoded, " ");
    let lines: Vec<&str> = collapsed.lines().map(str::trim).collect();
    let joined = lines.join("\n");
    p.blank_lines.replace_all(&joined, "\n").trim().to_string()
}

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::domain::is_ip_literal;

/// A URL found in message content, with the counters the URL rules use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlRef {
    pub raw: String,
    pub scheme: String,
    pub host: String,
    pub is_ip_literal: bool,
    pub query_param_count: usize,
    pub percent_escape_count: usize,
}

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?i)https?://[^\s<>"'`{}|\\^\[\]]+"#).unwrap())
}

fn escape_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"%[0-9A-Fa-f]{2}").unwrap())
}

fn trim_trailing(candidate: &str) -> &str {
    let mut s = candidate;
    loop {
        let Some(last) = s.chars().last() else { return s };
        let strip = match last {
            '.' | ',' | ';' | ':' | '!' | '?' | '\'' | '"' => true,
            ')' => s.matches('(').count() < s.matches(')').count(),
            _ => false,
        };
        if !strip {
            return s;
        }
        s = &s[..s.len() - last.len_utf8()];
    }
}

impl UrlRef {
    /// Parses a single `http(s)://` URL. Returns `None` when no usable host is present.
    pub fn parse(raw: &str) -> Option<UrlRef> {
        let (scheme, rest) = raw.split_once("://")?;
        let scheme = scheme.to_ascii_lowercase();
        if scheme != "http" && scheme != "https" {
            return None;
        }
        let authority_end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
        let authority = &rest[..authority_end];
        let host_port = authority.rsplit_once('@').map_or(authority, |(_, h)| h);
        let host = match host_port.rsplit_once(':') {
            Some((h, port)) if port.chars().all(|c| c.is_ascii_digit()) => h,
            _ => host_port,
        };
        let host = host.trim_end_matches('.').to_lowercase();
        if host.is_empty()
            || !host.chars().all(|c| c.is_alphanumeric() || c == '.' || c == '-' || c == '_')
            || host.starts_with('.')
        {
            return None;
        }
        let after = &rest[authority_end..];
        let query_param_count = after
            .split_once('?')
            .map(|(_, q)| q.split('#').next().unwrap_or(""))
            .map_or(0, |q| q.split('&').filter(|p| !p.is_empty()).count());
        Some(UrlRef {
            raw: raw.to_string(),
            scheme,
            is_ip_literal: is_ip_literal(&host),
            host,
            query_param_count,
            percent_escape_count: escape_pattern().find_iter(raw).count(),
        })
    }
}

/// Finds every `http://` / `https://` span in `text`. Candidates without a
/// parsable host are skipped.
pub fn extract_urls(text: &str) -> Vec<UrlRef> {
    url_pattern()
        .find_iter(text)
        .filter_map(|m| UrlRef::parse(trim_trailing(m.as_str())))
        .collect()
}

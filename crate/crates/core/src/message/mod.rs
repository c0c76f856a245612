//! Normalized email representation and the parsers that produce it.
//!
//! Three ingestion formats are supported: single RFC-822 style `.eml`
//! sources, `From `-delimited mbox archives, and a line-oriented JSONL
//! corpus format (`{id, from, subject, body, label, source}`).

mod corpus;
mod domain;
mod eml;
mod html;
mod mbox;
mod urls;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use corpus::{load_corpus, parse_corpus, CorpusRecord};
pub use domain::{is_ip_literal, registrable_domain};
pub use eml::parse_eml;
pub use html::html_to_text;
pub use mbox::{parse_mbox, MboxArchive, MboxFailure};
pub use urls::{extract_urls, UrlRef};

/// Ground-truth label attached to corpus items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Phishing,
    Benign,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Phishing => "phishing",
            Label::Benign => "benign",
        }
    }

    pub fn is_phishing(self) -> bool {
        self == Label::Phishing
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = MessageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "phishing" | "phish" | "1" | "spam" => Ok(Label::Phishing),
            "benign" | "ham" | "legitimate" | "0" => Ok(Label::Benign),
            other => Err(MessageError::UnknownLabel(other.to_string())),
        }
    }
}

/// Non-fatal conditions noticed while parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ParseWarning {
    /// A part declared a transfer encoding we do not understand; its body was
    /// passed through undecoded.
    UnsupportedEncoding(String),
    /// A part declared a charset we do not know; it was decoded as Latin-1.
    UnknownCharset(String),
}

#[derive(Debug, thiserror::Error)]
pub enum MessageError {
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("archive contains no messages")]
    EmptyArchive,
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("corpus line {line}: {source}")]
    CorpusLine {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A parsed message reduced to the fields the detectors consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmailMessage {
    pub id: String,
    /// Header fields in source order, values decoded.
    pub headers: Vec<(String, String)>,
    pub from_address: String,
    /// Lowercased host part of `from_address`; empty when it could not be parsed.
    pub from_domain: String,
    pub reply_to: Option<String>,
    pub subject: String,
    pub body_text: String,
    pub urls: Vec<UrlRef>,
    pub source_label: Option<String>,
    pub ground_truth: Option<Label>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<ParseWarning>,
}

impl EmailMessage {
    /// Builds a message from already-decoded parts. URLs are extracted from
    /// the body and from header values.
    pub fn from_parts(
        id: impl Into<String>,
        headers: Vec<(String, String)>,
        body_text: String,
    ) -> Self {
        let from_raw = header_value(&headers, "from").unwrap_or_default();
        let from_address = parse_address(&from_raw);
        let from_domain = address_domain(&from_address);
        let reply_to = header_value(&headers, "reply-to").map(|v| parse_address(&v));
        let subject = header_value(&headers, "subject").unwrap_or_default();
        let mut urls = extract_urls(&body_text);
        for (name, value) in &headers {
            if name.eq_ignore_ascii_case("list-unsubscribe") || name.eq_ignore_ascii_case("subject") {
                urls.extend(extract_urls(value));
            }
        }
        EmailMessage {
            id: id.into(),
            headers,
            from_address,
            from_domain,
            reply_to,
            subject,
            body_text,
            urls,
            source_label: None,
            ground_truth: None,
            warnings: Vec::new(),
        }
    }

    /// First value of the named header (case-insensitive).
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    /// Display name portion of the From header, if any.
    pub fn from_display_name(&self) -> Option<String> {
        let raw = self.header("from")?;
        let lt = raw.find('<')?;
        let name = raw[..lt].trim().trim_matches('"').trim();
        (!name.is_empty()).then(|| name.to_string())
    }

    /// Subject and body joined, the text content rules scan.
    pub fn content_text(&self) -> String {
        if self.subject.is_empty() {
            self.body_text.clone()
        } else {
            format!("{}\n{}", self.subject, self.body_text)
        }
    }

    /// Serializes headers and decoded body back into an RFC-822 style source.
    pub fn to_eml(&self) -> String {
        let mut out = String::new();
        for (name, value) in &self.headers {
            out.push_str(name);
            out.push_str(": ");
            out.push_str(value);
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&self.body_text);
        out
    }
}

pub(crate) fn header_value(headers: &[(String, String)], name: &str) -> Option<String> {
    headers
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, v)| v.clone())
}

/// Extracts the bare `local@domain` address from a header value such as
/// `"Name" <user@host>`. Returns the trimmed input when no address is found.
pub fn parse_address(value: &str) -> String {
    if let Ok(list) = mailparse::addrparse(value) {
        if let Some(addr) = list.iter().find_map(|a| match a {
            mailparse::MailAddr::Single(s) => Some(s.addr.clone()),
            mailparse::MailAddr::Group(g) => g.addrs.first().map(|s| s.addr.clone()),
        }) {
            if addr.contains('@') {
                return addr.trim().to_string();
            }
        }
    }
    // Fall back to the first token that looks like an address.
    value
        .split(|c: char| c.is_whitespace() || c == '<' || c == '>' || c == ',' || c == '"')
        .find(|tok| {
            let mut parts = tok.splitn(2, '@');
            matches!((parts.next(), parts.next()), (Some(l), Some(d)) if !l.is_empty() && !d.is_empty())
        })
        .unwrap_or(value.trim())
        .to_string()
}

pub fn address_domain(address: &str) -> String {
    match address.rsplit_once('@') {
        Some((local, host)) if !local.is_empty() => {
            let host = host.trim().trim_end_matches(['>', '.']).to_ascii_lowercase();
            if host.is_empty() || host.contains(char::is_whitespace) || !host.contains('.') && !is_ip_literal(&host) {
                String::new()
            } else {
                host
            }
        }
        _ => String::new(),
    }
}

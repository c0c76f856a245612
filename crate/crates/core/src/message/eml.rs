use mailparse::{DispositionType, MailHeaderMap, ParsedMail};
use sha2::{Digest, Sha256};

use super::html::html_to_text;
use super::{EmailMessage, MessageError, ParseWarning};

const KNOWN_ENCODINGS: &[&str] = &["", "7bit", "8bit", "binary", "quoted-printable", "base64"];

fn has_separator(raw: &[u8]) -> bool {
    raw.windows(2).any(|w| w == b"\n\n") || raw.windows(3).any(|w| w == b"\n\r\n")
}

fn latin1(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| b as char).collect()
}

fn decode_charset(bytes: &[u8], label: &str, warnings: &mut Vec<ParseWarning>) -> String {
    let label = label.trim().to_ascii_lowercase();
    match label.as_str() {
        "" | "us-ascii" | "ascii" | "utf-8" | "utf8" => match std::str::from_utf8(bytes) {
            Ok(s) => s.to_string(),
            Err(_) if label.starts_with("utf") => String::from_utf8_lossy(bytes).into_owned(),
            Err(_) => latin1(bytes),
        },
        _ => match charset::Charset::for_label(label.as_bytes()) {
            Some(cs) => cs.decode(bytes).0.into_owned(),
            None => {
                warnings.push(ParseWarning::UnknownCharset(label));
                latin1(bytes)
            }
        },
    }
}

/// Decoded text of one leaf part, honoring transfer encoding and charset.
fn leaf_text(part: &ParsedMail<'_>, warnings: &mut Vec<ParseWarning>) -> String {
    let encoding = part
        .headers
        .get_first_value("Content-Transfer-Encoding")
        .map(|v| v.trim().to_ascii_lowercase())
        .unwrap_or_default();
    let bytes = if KNOWN_ENCODINGS.contains(&encoding.as_str()) {
        part.get_body_raw().unwrap_or_else(|_| part.raw_bytes.to_vec())
    } else {
        warnings.push(ParseWarning::UnsupportedEncoding(encoding));
        // Unknown encodings fall through mailparse as 7bit, i.e. undecoded.
        part.get_body_raw().unwrap_or_default()
    };
    decode_charset(&bytes, &part.ctype.charset, warnings).replace("\r\n", "\n")
}

fn collect_text(part: &ParsedMail<'_>, plain: &mut Vec<String>, html: &mut Vec<String>, warnings: &mut Vec<ParseWarning>) {
    if !part.subparts.is_empty() {
        for sub in &part.subparts {
            collect_text(sub, plain, html, warnings);
        }
        return;
    }
    if part.get_content_disposition().disposition == DispositionType::Attachment {
        return;
    }
    let mime = part.ctype.mimetype.to_ascii_lowercase();
    if mime == "text/html" {
        html.push(leaf_text(part, warnings));
    } else if mime == "text/plain" || mime.is_empty() {
        plain.push(leaf_text(part, warnings));
    }
}

fn content_id(raw: &[u8]) -> String {
    let digest = Sha256::digest(raw);
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("sha256-{hex}")
}

/// Parses a single RFC-822 style message.
///
/// Transfer encodings (quoted-printable, base64) are decoded; HTML-only
/// bodies are reduced to visible text with link targets kept. The message id
/// is taken from `Message-ID`, or derived from a content hash when absent.
pub fn parse_eml(raw: &[u8]) -> Result<EmailMessage, MessageError> {
    if !has_separator(raw) {
        return Err(MessageError::MalformedMessage("no header/body separator".into()));
    }
    let parsed = mailparse::parse_mail(raw).map_err(|e| MessageError::MalformedMessage(e.to_string()))?;
    if parsed.headers.is_empty() {
        return Err(MessageError::MalformedMessage("no header fields".into()));
    }
    let headers: Vec<(String, String)> = parsed
        .headers
        .iter()
        .map(|h| (h.get_key(), h.get_value().trim().to_string()))
        .collect();
    if headers.iter().any(|(k, _)| k.is_empty() || k.contains(char::is_whitespace)) {
        return Err(MessageError::MalformedMessage("invalid header field name".into()));
    }

    let mut warnings = Vec::new();
    let mut plain = Vec::new();
    let mut html = Vec::new();
    collect_text(&parsed, &mut plain, &mut html, &mut warnings);
    let body_text = if !plain.is_empty() {
        plain.join("\n")
    } else {
        html.iter().map(|h| html_to_text(h)).collect::<Vec<_>>().join("\n")
    };

    let id = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("message-id"))
        .map(|(_, v)| v.trim().trim_start_matches('<').trim_end_matches('>').to_string())
        .filter(|v| !v.is_empty())
        .unwrap_or_else(|| content_id(raw));

    let mut msg = EmailMessage::from_parts(id, headers, body_text);
    msg.warnings = warnings;
    Ok(msg)
}

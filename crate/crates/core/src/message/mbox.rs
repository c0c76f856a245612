use serde::Serialize;

use super::eml::parse_eml;
use super::{EmailMessage, MessageError};

/// A message in an archive that could not be parsed.
#[derive(Debug, Clone, Serialize)]
pub struct MboxFailure {
    /// Zero-based position of the message within the archive.
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct MboxArchive {
    pub messages: Vec<EmailMessage>,
    pub failures: Vec<MboxFailure>,
}

fn split_messages(raw: &[u8]) -> Vec<Vec<u8>> {
    let mut messages = Vec::new();
    let mut current: Option<Vec<u8>> = None;
    let mut prev_blank = true;
    for line in raw.split_inclusive(|&b| b == b'\n') {
        if line.starts_with(b"From ") && prev_blank {
            if let Some(msg) = current.take() {
                messages.push(msg);
            }
            current = Some(Vec::new());
            prev_blank = false;
            continue;
        }
        let stripped = line.strip_suffix(b"\n").unwrap_or(line);
        let stripped = stripped.strip_suffix(b"\r").unwrap_or(stripped);
        prev_blank = stripped.is_empty();
        if let Some(buf) = current.as_mut() {
            // mboxrd quoting: ">From " and ">>From " lose one '>'.
            let unquoted = if line.starts_with(b">") && line.iter().skip_while(|&&b| b == b'>').take(5).eq(b"From ".iter()) {
                &line[1..]
            } else {
                line
            };
            buf.extend_from_slice(unquoted);
        }
    }
    if let Some(msg) = current {
        messages.push(msg);
    }
    messages
}

/// Splits a `From `-delimited archive and parses each message.
///
/// A message that fails to parse is recorded in `failures` and does not
/// stop the remaining messages from being read.
pub fn parse_mbox(raw: &[u8]) -> Result<MboxArchive, MessageError> {
    let chunks = split_messages(raw);
    if chunks.is_empty() {
        return Err(MessageError::EmptyArchive);
    }
    let mut archive = MboxArchive::default();
    for (index, chunk) in chunks.iter().enumerate() {
        // Trailing blank line belongs to the separator, not the message.
        let body = chunk.strip_suffix(b"\n").unwrap_or(chunk);
        match parse_eml(body) {
            Ok(msg) => archive.messages.push(msg),
            Err(e) => archive.failures.push(MboxFailure { index, error: e.to_string() }),
        }
    }
    Ok(archive)
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmailMessage, Label, MessageError};

/// One line of the JSONL corpus format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub from: String,
    #[serde(default)]
    pub subject: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub source: Option<String>,
}

impl CorpusRecord {
    pub fn into_message(self) -> Result<EmailMessage, MessageError> {
        let ground_truth = self.label.as_deref().map(str::parse::<Label>).transpose()?;
        let mut headers = vec![("From".to_string(), self.from)];
        if !self.subject.is_empty() {
            headers.push(("Subject".to_string(), self.subject));
        }
        let body = self.body.replace("\r\n", "\n");
        let mut msg = EmailMessage::from_parts(self.id, headers, body);
        msg.ground_truth = ground_truth;
        msg.source_label = self.source;
        Ok(msg)
    }

    pub fn from_message(msg: &EmailMessage) -> Self {
        CorpusRecord {
            id: msg.id.clone(),
            from: msg.header("from").unwrap_or(&msg.from_address).to_string(),
            subject: msg.subject.clone(),
            body: msg.body_text.clone(),
            label: msg.ground_truth.map(|l| l.as_str().to_string()),
            source: msg.source_label.clone(),
        }
    }
}

/// Parses JSONL corpus text. Blank lines are ignored.
pub fn parse_corpus(text: &str) -> Result<Vec<EmailMessage>, MessageError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let record: CorpusRecord =
                serde_json::from_str(line).map_err(|source| MessageError::CorpusLine { line: i + 1, source })?;
            record.into_message()
        })
        .collect()
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<EmailMessage>, MessageError> {
    let text = std::fs::read_to_string(path)?;
    parse_corpus(&text)
}

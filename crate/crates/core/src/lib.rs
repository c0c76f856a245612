//! Two-phase phishing detection.
//!
//! Phase 1 scores a message with weighted deterministic rules (DNS and
//! authentication records, URL structure, content cues). Fired indicators
//! are mapped onto ontology properties to infer attack types with
//! confidence scores and reasoning chains. Phase 2 redacts sensitive
//! fields, embeds the message, retrieves similar known-phishing examples
//! and fuses the similarity statistics with the Phase 1 verdict through a
//! conservative cascade.

pub mod decision;
pub mod economics;
pub mod eval;
pub mod explanation;
pub mod manifest;
pub mod message;
pub mod ontology;
pub mod pipeline;
pub mod redaction;
pub mod retrieval;
pub mod rules;
pub mod textgen;

mod error;
mod sync;

pub use error::{Error, Result};

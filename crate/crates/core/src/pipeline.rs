//! End-to-end analysis of one message and batch evaluation.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{cascade, CascadeConfig, FinalDecision};
use crate::explanation::{generate_explanations, Explanation, ExplanationContext};
use crate::manifest::sha256_hex;
use crate::message::EmailMessage;
use crate::ontology::{classify_attacks, generate_chain, map_properties_checked, AttackMatch, OntologyConfig, PropertySet, ReasoningChain};
use crate::redaction::{PiiCounts, Redactor};
use crate::retrieval::{embed, similarity_stats, CorpusIndex, EmbeddingProvider, NeighborSet, SearchMode, SimilarityStats, DEFAULT_K};
use crate::rules::{resolve_dns, DnsLookup, DnsResolver, NullResolver, Phase1Result, RuleConfig, RuleEngine, RuleId};
use crate::textgen::TextGenProvider;
use crate::Result;

/// Whether similarity scoring ran for a message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Phase2Status {
    Completed,
    /// Not configured; the verdict comes from Phase 1 alone.
    Disabled,
    /// Configured but failed; the verdict comes from Phase 1 alone.
    Unavailable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub id: String,
    /// SHA-256 of the message's headers and decoded body.
    pub digest: String,
    pub dns: DnsLookup,
    pub phase1: Phase1Result,
    pub properties: PropertySet,
    /// Fired rules with no ontology property.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unmapped_rules: Vec<RuleId>,
    pub matches: Vec<AttackMatch>,
    pub chain: ReasoningChain,
    pub redaction_counts: PiiCounts,
    pub neighbors: NeighborSet,
    pub stats: SimilarityStats,
    pub decision: FinalDecision,
    pub explanation: Explanation,
    pub phase2: Phase2Status,
    pub degraded: bool,
}

/// Retrieval configuration for Phase 2.
#[derive(Clone)]
pub struct Retriever {
    pub index: Arc<CorpusIndex>,
    pub provider: Arc<dyn EmbeddingProvider>,
    pub k: usize,
    pub mode: SearchMode,
}

impl Retriever {
    pub fn new(index: Arc<CorpusIndex>, provider: Arc<dyn EmbeddingProvider>) -> Self {
        Retriever { index, provider, k: DEFAULT_K, mode: SearchMode::Approximate }
    }

    /// Embeds already-redacted text and queries the index.
    pub fn retrieve(&self, redacted: &str) -> std::result::Result<NeighborSet, crate::retrieval::RetrievalError> {
        let q = embed(redacted, self.provider.as_ref(), false)?;
        self.index.query(&q, self.k, self.mode)
    }
}

#[derive(Clone)]
pub struct Analyzer {
    rules: Arc<RuleEngine>,
    ontology: Arc<OntologyConfig>,
    cascade: CascadeConfig,
    redactor: Redactor,
    resolver: Arc<dyn DnsResolver>,
    retriever: Option<Retriever>,
    explainer: Option<Arc<dyn TextGenProvider>>,
    with_ontology_context: bool,
}

impl Analyzer {
    pub fn new(rules: RuleConfig, ontology: OntologyConfig, cascade: CascadeConfig) -> Result<Self> {
        ontology.validate()?;
        cascade.validate()?;
        Ok(Analyzer {
            rules: Arc::new(RuleEngine::new(rules)?),
            ontology: Arc::new(ontology),
            cascade,
            redactor: Redactor::default(),
            resolver: Arc::new(NullResolver),
            retriever: None,
            explainer: None,
            with_ontology_context: true,
        })
    }

    pub fn with_resolver(mut self, resolver: Arc<dyn DnsResolver>) -> Self {
        self.resolver = resolver;
        self
    }

    pub fn with_retriever(mut self, retriever: Retriever) -> Self {
        self.retriever = Some(retriever);
        self
    }

    pub fn with_explainer(mut self, provider: Arc<dyn TextGenProvider>) -> Self {
        self.explainer = Some(provider);
        self
    }

    pub fn with_ontology_context(mut self, on: bool) -> Self {
        self.with_ontology_context = on;
        self
    }

    pub fn with_redactor(mut self, redactor: Redactor) -> Self {
        self.redactor = redactor;
        self
    }

    pub fn rule_config(&self) -> &RuleConfig {
        self.rules.config()
    }

    pub fn ontology(&self) -> &OntologyConfig {
        &self.ontology
    }

    pub fn cascade_config(&self) -> &CascadeConfig {
        &self.cascade
    }

    pub fn retriever(&self) -> Option<&Retriever> {
        self.retriever.as_ref()
    }

    pub fn explainer_id(&self) -> Option<&str> {
        self.explainer.as_deref().map(|p| p.id())
    }

    pub fn lookup_dns(&self, msg: &EmailMessage) -> DnsLookup {
        resolve_dns(&msg.from_domain, self.resolver.as_ref()).unwrap_or(DnsLookup::Unknown)
    }

    /// Phase 1 only, with DNS resolved through the configured resolver.
    pub fn phase1(&self, msg: &EmailMessage) -> (DnsLookup, Phase1Result) {
        let dns = self.lookup_dns(msg);
        let p1 = self.rules.evaluate(msg, &dns);
        (dns, p1)
    }

    pub fn analyze(&self, msg: &EmailMessage) -> Analysis {
        let (dns, phase1) = self.phase1(msg);
        let (properties, unmapped_rules) = map_properties_checked(&phase1.indicators, &self.ontology);
        let matches = classify_attacks(&properties, &self.ontology);
        let chain = generate_chain(&properties, &matches, &self.ontology).expect("matches come from these properties");

        let redaction = self.redactor.redact(&msg.content_text());
        let (neighbors, phase2) = match &self.retriever {
            None => (NeighborSet::default(), Phase2Status::Disabled),
            Some(r) => match r.retrieve(&redaction.redacted_text) {
                Ok(n) => (n, Phase2Status::Completed),
                Err(e) => {
                    tracing::warn!(id = %msg.id, error = %e, "retrieval unavailable, using phase 1 only");
                    (NeighborSet::default(), Phase2Status::Unavailable { reason: e.to_string() })
                }
            },
        };
        let stats = similarity_stats(&neighbors);
        let decision = cascade(phase1.verdict, &stats, &self.cascade);
        let ctx = ExplanationContext {
            phase1: &phase1,
            matches: &matches,
            chain: &chain,
            neighbors: &neighbors,
            decision: &decision,
            redacted_content: &redaction.redacted_text,
        };
        let explanation = generate_explanations(&ctx, self.explainer.as_deref(), self.with_ontology_context);
        let digest = sha256_hex(msg.to_eml().as_bytes());
        Analysis {
            id: msg.id.clone(),
            digest,
            dns,
            phase1,
            properties,
            unmapped_rules,
            matches,
            chain,
            redaction_counts: redaction.counts,
            neighbors,
            stats,
            decision,
            explanation,
            degraded: matches!(phase2, Phase2Status::Unavailable { .. }),
            phase2,
        }
    }

    /// Analyzes messages on `jobs` threads, preserving input order.
    pub fn analyze_batch(&self, msgs: &[EmailMessage], jobs: usize) -> Result<Vec<Analysis>> {
        if jobs <= 1 {
            return Ok(msgs.iter().map(|m| self.analyze(m)).collect());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| crate::Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(|| msgs.par_iter().map(|m| self.analyze(m)).collect()))
    }
}

//! Config loading and analyzer assembly shared by the subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use phish_core::decision::{operating_mode, CascadeConfig, ModesConfig};
use phish_core::manifest::RunManifest;
use phish_core::message::{load_corpus, parse_eml, parse_mbox, EmailMessage};
use phish_core::ontology::OntologyConfig;
use phish_core::pipeline::{Analyzer, Retriever};
use phish_core::retrieval::{CorpusIndex, HashingEmbedder, SearchMode, LOCAL_PROVIDER_ID};
use phish_core::rules::{DnsResolver, FixtureResolver, NullResolver, RuleConfig};

use crate::CliError;

/// Configuration files and the flags that override them.
///
/// Precedence: built-in defaults, then `--rules`/`--ontology`/`--modes`
/// files, then `--mode`, which replaces the tier boundaries and similarity
/// thresholds with the named mode's values.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Rule weights, tiers and lexicons (TOML).
    #[arg(long, value_name = "FILE")]
    pub rules: Option<PathBuf>,
    /// Attack axioms (TOML).
    #[arg(long, value_name = "FILE")]
    pub ontology: Option<PathBuf>,
    /// Operating-mode table (TOML).
    #[arg(long, value_name = "FILE")]
    pub modes: Option<PathBuf>,
    /// Operating mode name.
    #[arg(long, default_value = "baseline")]
    pub mode: String,
    /// DNS snapshot (JSONL) used instead of live lookups.
    #[arg(long, value_name = "FILE")]
    pub dns_fixture: Option<PathBuf>,
    /// Retrieval index directory; without it Phase 2 is disabled.
    #[arg(long, value_name = "DIR")]
    pub index: Option<PathBuf>,
    /// Brute-force search instead of the approximate graph.
    #[arg(long)]
    pub exact: bool,
    /// Neighbors retrieved per message.
    #[arg(long, default_value_t = phish_core::retrieval::DEFAULT_K)]
    pub k: usize,
}

pub struct Pipeline {
    pub analyzer: Analyzer,
    pub manifest: RunManifest,
}

impl PipelineArgs {
    pub fn rule_config(&self) -> Result<RuleConfig, CliError> {
        Ok(match &self.rules {
            Some(p) => RuleConfig::load(p)?,
            None => RuleConfig::default(),
        })
    }

    pub fn modes_config(&self) -> Result<ModesConfig, CliError> {
        Ok(match &self.modes {
            Some(p) => ModesConfig::load(p)?,
            None => ModesConfig::default(),
        })
    }

    pub fn resolver(&self) -> Result<Arc<dyn DnsResolver>, CliError> {
        Ok(match &self.dns_fixture {
            Some(p) => Arc::new(FixtureResolver::load(p)?),
            None => Arc::new(NullResolver),
        })
    }

    /// Builds the analyzer; `phase1_only` ignores `--index`.
    pub fn build(&self, command: &str, phase1_only: bool) -> Result<Pipeline, CliError> {
        let modes = self.modes_config()?;
        let mode = operating_mode(&self.mode, &modes)?;
        let rules = mode.rule_config(&self.rule_config()?)?;
        let cascade: CascadeConfig = mode.cascade_config();
        let ontology = match &self.ontology {
            Some(p) => OntologyConfig::load(p)?,
            None => OntologyConfig::default(),
        };
        let mut manifest = RunManifest::new(command)
            .config("rules", &rules)
            .config("ontology", &ontology)
            .config("cascade", &cascade)
            .config("mode", mode);
        let mut analyzer = Analyzer::new(rules, ontology, cascade)?.with_resolver(self.resolver()?);
        if let Some(p) = &self.dns_fixture {
            manifest = manifest.dataset("dns", &std::fs::read(p)?);
        }
        if let (Some(dir), false) = (&self.index, phase1_only) {
            let retriever = load_retriever(dir, self.k, self.exact)?;
            manifest = manifest.provider("embedding", LOCAL_PROVIDER_ID).dataset("index", &std::fs::read(dir.join("manifest.jsonl"))?);
            analyzer = analyzer.with_retriever(retriever);
        }
        Ok(Pipeline { analyzer, manifest })
    }
}

pub fn load_retriever(dir: &Path, k: usize, exact: bool) -> Result<Retriever, CliError> {
    let index = CorpusIndex::load(dir)?;
    if index.provider_id() != LOCAL_PROVIDER_ID {
        return Err(CliError::Input(format!(
            "index was built with provider {:?}; only {LOCAL_PROVIDER_ID:?} is available offline",
            index.provider_id()
        )));
    }
    let provider = Arc::new(HashingEmbedder::new(index.dimension()));
    let mut r = Retriever::new(Arc::new(index), provider);
    r.k = k;
    r.mode = if exact { SearchMode::Exact } else { SearchMode::Approximate };
    Ok(r)
}

/// Reads `.jsonl` corpora, `.mbox` archives or single messages (`-` is stdin).
pub fn read_messages(path: &Path) -> Result<Vec<EmailMessage>, CliError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext == "jsonl" {
        return Ok(load_corpus(path)?);
    }
    let raw = if path == Path::new("-") {
        let mut buf = Vec::new();
        std::io::Read::read_to_end(&mut std::io::stdin(), &mut buf)?;
        buf
    } else {
        std::fs::read(path)?
    };
    if ext == "mbox" {
        let archive = parse_mbox(&raw)?;
        for f in &archive.failures {
            tracing::warn!(?f, "skipped unparseable message");
        }
        return Ok(archive.messages);
    }
    Ok(vec![parse_eml(&raw)?])
}

pub fn read_dataset(path: &Path) -> Result<(Vec<EmailMessage>, Vec<u8>), CliError> {
    let bytes = std::fs::read(path)?;
    Ok((load_corpus(path)?, bytes))
}

pub fn write_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

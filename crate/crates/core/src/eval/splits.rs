use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::message::EmailMessage;
use crate::{Error, Result};

pub const DEFAULT_SEED: u64 = 42;
const MIN_STRATUM: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
    pub strategy: String,
}

impl DatasetSplit {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Per-stratum sizes: train = round(0.7 n), val = floor(0.15 n), test the rest.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (n as f64 * 0.7).round() as usize;
    let val = (n as f64 * 0.15).floor() as usize;
    (train, val, n - train - val)
}

/// 70/15/15 split stratified by (source, label). Items without a source tag
/// form their own stratum.
pub fn make_splits(corpus: &[EmailMessage], seed: u64) -> Result<DatasetSplit> {
    if corpus.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut strata: BTreeMap<(String, &'static str), Vec<&str>> = BTreeMap::new();
    for m in corpus {
        let label = m.ground_truth.ok_or_else(|| Error::Unlabeled(m.id.clone()))?;
        let source = m.source_label.clone().unwrap_or_default();
        strata.entry((source, label.as_str())).or_default().push(&m.id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        seed,
        strategy: "stratified by source and label".into(),
    };
    for ((source, label), mut ids) in strata {
        if ids.len() < MIN_STRATUM {
            return Err(Error::TooSmallStratum { source_tag: source, label: label.into(), count: ids.len() });
        }
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let (tr, va, _) = split_sizes(ids.len());
        split.train.extend(ids[..tr].iter().map(|s| s.to_string()));
        split.val.extend(ids[tr..tr + va].iter().map(|s| s.to_string()));
        split.test.extend(ids[tr + va..].iter().map(|s| s.to_string()));
    }
    Ok(split)
}

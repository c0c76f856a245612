//! Fusion of the Phase 1 verdict with retrieval similarity.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::retrieval::SimilarityStats;
use crate::rules::{RuleConfig, Verdict};
use crate::{Error, Result};

const DEFAULT_MODES: &str = include_str!("../assets/modes.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    /// Top similarity at or above which an email is phishing.
    pub tau_h: f64,
    /// Mean top-3 similarity promoting a `needs_review` email to phishing.
    pub tau_review_avg: f64,
    /// Top similarity at or above which an email needs review.
    pub tau_l: f64,
    /// Mean top-3 similarity at or above which an email needs review.
    pub tau_l_avg: f64,
    /// Weights of (s_top, s_avg) in the blended score.
    pub blend: [f64; 2],
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig { tau_h: 0.40, tau_review_avg: 0.35, tau_l: 0.25, tau_l_avg: 0.17, blend: [0.65, 0.35] }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_l < self.tau_h) {
            return Err(Error::Config(format!("tau_l ({}) must be below tau_h ({})", self.tau_l, self.tau_h)));
        }
        if !(self.tau_l_avg < self.tau_review_avg) {
            return Err(Error::Config(format!(
                "tau_l_avg ({}) must be below tau_review_avg ({})",
                self.tau_l_avg, self.tau_review_avg
            )));
        }
        if (self.blend[0] + self.blend[1] - 1.0).abs() > 1e-9 || self.blend.iter().any(|w| *w < 0.0) {
            return Err(Error::Config(format!("blend weights {:?} must be nonnegative and sum to 1", self.blend)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RationaleCode {
    Phase1Override,
    HighSim,
    ReviewAvgPromote,
    MidSimReview,
    Inherit,
}

impl RationaleCode {
    pub fn as_str(self) -> &'static str {
        match self {
            RationaleCode::Phase1Override => "phase1_override",
            RationaleCode::HighSim => "high_sim",
            RationaleCode::ReviewAvgPromote => "review_avg_promote",
            RationaleCode::MidSimReview => "mid_sim_review",
            RationaleCode::Inherit => "inherit",
        }
    }
}

impl fmt::Display for RationaleCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalDecision {
    pub verdict: Verdict,
    pub rag_score: f64,
    /// `10 * clamp(rag_score, 0, 1)`.
    pub display_score: f64,
    pub rationale_code: RationaleCode,
}

pub fn rag_score(stats: &SimilarityStats, cfg: &CascadeConfig) -> f64 {
    cfg.blend[0] * stats.s_top + cfg.blend[1] * stats.s_avg
}

/// Applies the cascade in order: a phishing Phase 1 verdict is final; high
/// similarity (or a review email with a high average) is phishing; mid
/// similarity needs review; otherwise the Phase 1 verdict stands.
pub fn cascade(phase1: Verdict, stats: &SimilarityStats, cfg: &CascadeConfig) -> FinalDecision {
    let (verdict, rationale_code) = if phase1 == Verdict::Phishing {
        (Verdict::Phishing, RationaleCode::Phase1Override)
    } else if stats.s_top >= cfg.tau_h {
        (Verdict::Phishing, RationaleCode::HighSim)
    } else if phase1 == Verdict::NeedsReview && stats.s_avg >= cfg.tau_review_avg {
        (Verdict::Phishing, RationaleCode::ReviewAvgPromote)
    } else if stats.s_top >= cfg.tau_l || stats.s_avg >= cfg.tau_l_avg {
        (Verdict::NeedsReview, RationaleCode::MidSimReview)
    } else {
        (phase1, RationaleCode::Inherit)
    };
    let rag = rag_score(stats, cfg);
    FinalDecision { verdict, rag_score: rag, display_score: 10.0 * rag.clamp(0.0, 1.0), rationale_code }
}

/// A named threshold bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingMode {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub tau_h: f64,
    pub tau_review_avg: f64,
    pub tau_l: f64,
    pub tau_l_avg: f64,
    /// Phase 1 tier overrides; absent means the rule config's values.
    #[serde(default)]
    pub benign_upper: Option<u32>,
    #[serde(default)]
    pub phishing_lower: Option<u32>,
    /// Target operating point (recall, FPR) this mode approximates.
    #[serde(default)]
    pub reference_recall: Option<f64>,
    #[serde(default)]
    pub reference_fpr: Option<f64>,
}

impl OperatingMode {
    pub fn cascade_config(&self) -> CascadeConfig {
        CascadeConfig {
            tau_h: self.tau_h,
            tau_review_avg: self.tau_review_avg,
            tau_l: self.tau_l,
            tau_l_avg: self.tau_l_avg,
            ..CascadeConfig::default()
        }
    }

    /// `base` with this mode's Phase 1 overrides applied.
    pub fn rule_config(&self, base: &RuleConfig) -> Result<RuleConfig> {
        let mut cfg = base.clone();
        if let Some(b) = self.benign_upper {
            cfg.benign_upper = b;
        }
        if let Some(p) = self.phishing_lower {
            cfg.phishing_lower = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesConfig {
    #[serde(rename = "mode")]
    pub modes: Vec<OperatingMode>,
}

impl Default for ModesConfig {
    fn default() -> Self {
        ModesConfig::from_toml_str(DEFAULT_MODES).expect("bundled modes are valid")
    }
}

impl ModesConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ModesConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for m in &cfg.modes {
            m.cascade_config().validate().map_err(|e| Error::Config(format!("mode {}: {e}", m.name)))?;
        }
        let mut names: Vec<&str> = cfg.modes.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate mode name".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, name: &str) -> Result<&OperatingMode> {
        self.modes
            .iter()
            .find(|m| m.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::UnknownMode(name.to_string()))
    }
}

/// Looks up a named mode in `modes`.
pub fn operating_mode<'a>(name: &str, modes: &'a ModesConfig) -> Result<&'a OperatingMode> {
    modes.get(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats(s_top: f64, s_avg: f64) -> SimilarityStats {
        SimilarityStats { s_top, s_avg, empty: false }
    }

    fn run(p: Verdict, top: f64, avg: f64) -> (Verdict, RationaleCode) {
        let d = cascade(p, &stats(top, avg), &CascadeConfig::default());
        (d.verdict, d.rationale_code)
    }

    #[test]
    fn documented_branches() {
        assert_eq!(run(Verdict::Phishing, 0.0, 0.0), (Verdict::Phishing, RationaleCode::Phase1Override));
        assert_eq!(run(Verdict::Benign, 0.45, 0.0), (Verdict::Phishing, RationaleCode::HighSim));
        assert_eq!(run(Verdict::NeedsReview, 0.38, 0.36), (Verdict::Phishing, RationaleCode::ReviewAvgPromote));
        assert_eq!(run(Verdict::Benign, 0.26, 0.10), (Verdict::NeedsReview, RationaleCode::MidSimReview));
        assert_eq!(run(Verdict::Benign, 0.10, 0.05), (Verdict::Benign, RationaleCode::Inherit));
        // a benign email with a high average alone is not promoted
        assert_eq!(run(Verdict::Benign, 0.38, 0.36), (Verdict::NeedsReview, RationaleCode::MidSimReview));
    }

    #[test]
    fn truth_table() {
        // strata: below tau_l_avg, between tiers, above tau_h
        let strata = [(0.10, 0.10), (0.30, 0.20), (0.50, 0.45)];
        for p in [Verdict::Benign, Verdict::NeedsReview, Verdict::Phishing] {
            for (i, &(top, avg)) in strata.iter().enumerate() {
                let got = run(p, top, avg).0;
                let expected = match (p, i) {
                    (Verdict::Phishing, _) => Verdict::Phishing,
                    (_, 2) => Verdict::Phishing,
                    (_, 1) => Verdict::NeedsReview,
                    (v, _) => v,
                };
                assert_eq!(got, expected, "{p:?} stratum {i}");
            }
        }
    }

    #[test]
    fn scores() {
        let d = cascade(Verdict::Benign, &stats(0.8, 0.6), &CascadeConfig::default());
        assert_eq!(d.rag_score, 0.65 * 0.8 + 0.35 * 0.6);
        assert!((d.display_score - 10.0 * d.rag_score).abs() < 1e-12);
        let neg = cascade(Verdict::Benign, &stats(-0.2, -0.3), &CascadeConfig::default());
        assert_eq!(neg.display_score, 0.0);
    }

    #[test]
    fn modes() {
        let modes = ModesConfig::default();
        let base = operating_mode("baseline", &modes).unwrap();
        assert_eq!(base.cascade_config(), CascadeConfig::default());
        let aggr = operating_mode("aggressive", &modes).unwrap();
        assert!(aggr.tau_h < base.tau_h && aggr.tau_l < base.tau_l);
        assert!(aggr.tau_review_avg < base.tau_review_avg && aggr.tau_l_avg < base.tau_l_avg);
        assert!(matches!(operating_mode("turbo", &modes), Err(Error::UnknownMode(_))));
        assert_eq!(operating_mode("calibrated-a2", &modes).unwrap().tau_h, 0.70);
        let rules = base.rule_config(&RuleConfig::default()).unwrap();
        assert_eq!((rules.benign_upper, rules.phishing_lower), (2, 5));
    }

    #[test]
    fn config_validation() {
        assert!(CascadeConfig { tau_l: 0.5, ..CascadeConfig::default() }.validate().is_err());
        assert!(CascadeConfig { tau_l_avg: 0.5, ..CascadeConfig::default() }.validate().is_err());
        assert!(CascadeConfig { blend: [0.5, 0.6], ..CascadeConfig::default() }.validate().is_err());
        assert!(CascadeConfig::default().validate().is_ok());
    }

    fn arb_verdict() -> impl Strategy<Value = Verdict> {
        prop_oneof![Just(Verdict::Benign), Just(Verdict::NeedsReview), Just(Verdict::Phishing)]
    }

    proptest! {
        #[test]
        fn phishing_is_absorbing(top in -1.0f64..1.0, avg in -1.0f64..1.0) {
            prop_assert_eq!(run(Verdict::Phishing, top, avg).0, Verdict::Phishing);
        }

        #[test]
        fn lower_thresholds_flag_superset(p in arb_verdict(), top in 0.0f64..1.0, avg in 0.0f64..1.0, d in 0.0f64..0.1) {
            let hi = CascadeConfig::default();
            let lo = CascadeConfig { tau_h: hi.tau_h - d, tau_l: hi.tau_l - d, tau_review_avg: hi.tau_review_avg - d, tau_l_avg: hi.tau_l_avg - d, ..hi };
            let s = stats(top, avg.min(top));
            if cascade(p, &s, &hi).verdict == Verdict::Phishing {
                prop_assert_eq!(cascade(p, &s, &lo).verdict, Verdict::Phishing);
            }
            if cascade(p, &s, &hi).verdict != Verdict::Benign {
                prop_assert_ne!(cascade(p, &s, &lo).verdict, Verdict::Benign);
            }
        }

        #[test]
        fn rag_score_independent_of_thresholds(p in arb_verdict(), top in 0.0f64..1.0, avg in 0.0f64..1.0, scale in 0.5f64..1.5) {
            let a = CascadeConfig::default();
            let b = CascadeConfig { tau_h: a.tau_h * scale, tau_l: a.tau_l * scale, tau_review_avg: a.tau_review_avg * scale, tau_l_avg: a.tau_l_avg * scale, ..a };
            prop_assert_eq!(cascade(p, &stats(top, avg), &a).rag_score, cascade(p, &stats(top, avg), &b).rag_score);
        }
    }
}

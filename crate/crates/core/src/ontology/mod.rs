//! Attack-type classification over ontology properties.
//!
//! Fired rules map to named properties. Each attack type declares a set of
//! universal properties (all expected) and existential properties (any one
//! suffices). Confidence is the exact fraction of satisfied axioms.

mod coverage;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::rules::{IndicatorSet, RuleId};
use crate::{Error, Result};

pub use coverage::{coverage_report, AttackPrevalence, CoverageReport, LabelCoverage};

pub type PropertySet = BTreeSet<String>;

const DEFAULT_ONTOLOGY: &str = include_str!("../../assets/ontology.toml");

/// Parses `"0.3"`, `"3/10"` or a bare TOML float into an exact fraction.
fn parse_ratio(text: &str) -> Option<Ratio<u64>> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let (n, d) = (n.trim().parse().ok()?, d.trim().parse().ok()?);
        return (d != 0).then(|| Ratio::new(n, d));
    }
    let (int, frac) = text.split_once('.').unwrap_or((text, ""));
    if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let den = 10u64.checked_pow(frac.len() as u32)?;
    let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    Some(Ratio::new(int.checked_mul(den)?.checked_add(frac)?, den))
}

mod ratio_serde {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Ratio<u64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Ratio<u64>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Float(f64),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Text(t) => t,
            // The shortest round-trip form of a float is the decimal the author wrote.
            Raw::Float(f) => format!("{f}"),
        };
        parse_ratio(&text).ok_or_else(|| serde::de::Error::custom(format!("invalid fraction {text:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackAxioms {
    pub name: String,
    #[serde(default)]
    pub universal: Vec<String>,
    #[serde(default)]
    pub existential: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OntologyConfig {
    #[serde(with = "ratio_serde")]
    pub theta: Ratio<u64>,
    pub property_map: BTreeMap<RuleId, String>,
    pub attack_types: Vec<AttackAxioms>,
}

impl Default for OntologyConfig {
    fn default() -> Self {
        OntologyConfig::from_toml_str(DEFAULT_ONTOLOGY).expect("bundled ontology is valid")
    }
}

impl OntologyConfig {
    pub fn validate(&self) -> Result<()> {
        if *self.theta.numer() == 0 || self.theta > Ratio::from_integer(1) {
            return Err(Error::Config(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        let known: BTreeSet<&str> = self.property_map.values().map(String::as_str).collect();
        let mut names = BTreeSet::new();
        for ax in &self.attack_types {
            if !names.insert(ax.name.as_str()) {
                return Err(Error::Config(format!("attack type {} defined twice", ax.name)));
            }
            if ax.universal.is_empty() && ax.existential.is_empty() {
                return Err(Error::Config(format!("attack type {} has no axioms", ax.name)));
            }
            if let Some(p) = ax.universal.iter().chain(&ax.existential).find(|p| !known.contains(p.as_str())) {
                return Err(Error::Config(format!("attack type {} references unmapped property {p}", ax.name)));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: OntologyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// First rule (in rule order) mapped to `property`.
    pub fn source_rule(&self, property: &str) -> Option<RuleId> {
        self.property_map.iter().find(|(_, p)| *p == property).map(|(r, _)| *r)
    }
}

/// Properties of the fired rules. Fired rules without a mapping are logged
/// and skipped; they are returned in the second element.
pub fn map_properties_checked(indicators: &IndicatorSet, cfg: &OntologyConfig) -> (PropertySet, Vec<RuleId>) {
    let mut props = PropertySet::new();
    let mut unmapped = Vec::new();
    for rule in indicators.fired() {
        match cfg.property_map.get(&rule) {
            Some(p) => {
                props.insert(p.clone());
            }
            None => {
                tracing::warn!(%rule, "fired rule has no ontology property");
                unmapped.push(rule);
            }
        }
    }
    (props, unmapped)
}

pub fn map_properties(indicators: &IndicatorSet, cfg: &OntologyConfig) -> PropertySet {
    map_properties_checked(indicators, cfg).0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackMatch {
    pub attack: String,
    #[serde(with = "ratio_serde")]
    pub confidence: Ratio<u64>,
    pub satisfied_properties: PropertySet,
}

impl AttackMatch {
    pub fn confidence_f64(&self) -> f64 {
        *self.confidence.numer() as f64 / *self.confidence.denom() as f64
    }
}

/// Evaluates one attack type against `props`; `None` when it does not match.
pub fn evaluate_axioms(ax: &AttackAxioms, props: &PropertySet, theta: Ratio<u64>) -> Option<AttackMatch> {
    let universal: BTreeSet<&String> = ax.universal.iter().collect();
    let existential: BTreeSet<&String> = ax.existential.iter().collect();
    let sat_universal: Vec<&String> = universal.iter().copied().filter(|p| props.contains(*p)).collect();
    let sat_existential: Vec<&String> = existential.iter().copied().filter(|p| props.contains(*p)).collect();
    let m = sat_universal.len() as u64 + u64::from(!sat_existential.is_empty());
    let den = universal.len() as u64 + u64::from(!existential.is_empty());
    if den == 0 || m == 0 {
        return None;
    }
    // m/den >= n/d  <=>  m*d >= n*den
    let passes_theta = m * theta.denom() >= theta.numer() * den;
    let existential_ok = existential.is_empty() || !sat_existential.is_empty();
    (passes_theta && existential_ok).then(|| AttackMatch {
        attack: ax.name.clone(),
        confidence: Ratio::new(m, den),
        satisfied_properties: sat_universal.into_iter().chain(sat_existential).cloned().collect(),
    })
}

/// All matching attack types, by descending confidence then name.
pub fn classify_attacks(props: &PropertySet, cfg: &OntologyConfig) -> Vec<AttackMatch> {
    let mut matches: Vec<AttackMatch> =
        cfg.attack_types.iter().filter_map(|ax| evaluate_axioms(ax, props, cfg.theta)).collect();
    matches.sort_by(|a, b| b.confidence.cmp(&a.confidence).then_with(|| a.attack.cmp(&b.attack)));
    matches
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxiomKind {
    Universal,
    Existential,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStep {
    pub property: String,
    pub rule: Option<RuleId>,
    pub axiom: AxiomKind,
    pub attack: String,
    #[serde(with = "ratio_serde")]
    pub confidence: Ratio<u64>,
}

impl fmt::Display for ChainStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = match self.axiom {
            AxiomKind::Universal => "∀",
            AxiomKind::Existential => "∃",
        };
        let c = *self.confidence.numer() as f64 / *self.confidence.denom() as f64;
        write!(f, "{} ⊨ {q}-axiom({}) ⇒ {} (c={c:.2})", self.property, self.attack, self.attack)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningChain {
    pub steps: Vec<ChainStep>,
    pub rendered: String,
}

pub const EMPTY_CHAIN: &str = "no attack type inferred";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("match for {attack} cites property {property} that was not fired")]
    InconsistentInput { attack: String, property: String },
}

/// One step per (matched attack, satisfied property), grouped by attack in
/// the order of `matches`. Universal properties precede existential ones,
/// each in the order the config lists them.
pub fn generate_chain(
    props: &PropertySet,
    matches: &[AttackMatch],
    cfg: &OntologyConfig,
) -> std::result::Result<ReasoningChain, ChainError> {
    let mut steps = Vec::new();
    for m in matches {
        if let Some(p) = m.satisfied_properties.iter().find(|p| !props.contains(*p)) {
            return Err(ChainError::InconsistentInput { attack: m.attack.clone(), property: p.clone() });
        }
        let ax = cfg.attack_types.iter().find(|a| a.name == m.attack);
        let (universal, existential) = match ax {
            Some(ax) => (ax.universal.clone(), ax.existential.clone()),
            None => (m.satisfied_properties.iter().cloned().collect(), Vec::new()),
        };
        let ordered = universal
            .iter()
            .map(|p| (p, AxiomKind::Universal))
            .chain(existential.iter().map(|p| (p, AxiomKind::Existential)));
        let mut seen = BTreeSet::new();
        for (p, axiom) in ordered {
            if m.satisfied_properties.contains(p) && seen.insert(p.clone()) {
                steps.push(ChainStep {
                    property: p.clone(),
                    rule: cfg.source_rule(p),
                    axiom,
                    attack: m.attack.clone(),
                    confidence: m.confidence,
                });
            }
        }
    }
    let rendered = if steps.is_empty() {
        EMPTY_CHAIN.to_string()
    } else {
        steps.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
    };
    Ok(ReasoningChain { steps, rendered })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn props(items: &[&str]) -> PropertySet {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn credential_only() -> OntologyConfig {
        OntologyConfig::from_toml_str(
            r#"theta = "0.3"
[property_map]
missing_mx = "hasMissingMX"
credential_request = "hasCredentialRequest"
[[attack_types]]
name = "CredentialTheft"
universal = ["hasCredentialRequest", "hasMissingMX"]
"#,
        )
        .unwrap()
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!(parse_ratio("0.3"), Some(Ratio::new(3, 10)));
        assert_eq!(parse_ratio("1"), Some(Ratio::from_integer(1)));
        assert_eq!(parse_ratio(".25"), Some(Ratio::new(1, 4)));
        assert_eq!(parse_ratio("2/6"), Some(Ratio::new(1, 3)));
        assert_eq!(parse_ratio("1/0"), None);
        assert_eq!(parse_ratio("abc"), None);
        let cfg: OntologyConfig = toml::from_str(
            "theta = 0.3\nproperty_map = {}\nattack_types = []\n",
        )
        .unwrap();
        assert_eq!(cfg.theta, Ratio::new(3, 10));
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = OntologyConfig::default();
        assert_eq!(cfg.attack_types.len(), 8);
        assert_eq!(cfg.property_map.len(), RuleId::ALL.len());
        assert_eq!(cfg.theta, Ratio::new(3, 10));
        let again = OntologyConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn validation() {
        let mut cfg = credential_only();
        cfg.theta = Ratio::new(0, 1);
        assert!(cfg.validate().is_err());
        let mut cfg = credential_only();
        cfg.theta = Ratio::new(11, 10);
        assert!(cfg.validate().is_err());
        let mut cfg = credential_only();
        cfg.attack_types[0].universal.push("hasNothing".into());
        assert!(cfg.validate().is_err());
        let mut cfg = credential_only();
        cfg.attack_types.push(AttackAxioms { name: "Empty".into(), universal: vec![], existential: vec![] });
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mapping() {
        let cfg = OntologyConfig::default();
        let mut ind = IndicatorSet::default();
        ind.flags.insert(RuleId::MissingMx, true);
        ind.flags.insert(RuleId::NoSpf, false);
        assert_eq!(map_properties(&ind, &cfg), props(&["hasMissingMX"]));
        ind.flags.insert(RuleId::CredentialRequest, true);
        assert_eq!(map_properties(&ind, &cfg), props(&["hasCredentialRequest", "hasMissingMX"]));
        let all_false: IndicatorSet = IndicatorSet { flags: RuleId::ALL.iter().map(|r| (*r, false)).collect(), ..Default::default() };
        assert!(map_properties(&all_false, &cfg).is_empty());
        let (_, unmapped) = map_properties_checked(&ind, &credential_only());
        assert!(unmapped.is_empty());
        let mut ind2 = ind.clone();
        ind2.flags.insert(RuleId::UrlShortener, true);
        assert_eq!(map_properties_checked(&ind2, &credential_only()).1, vec![RuleId::UrlShortener]);
    }

    #[test]
    fn credential_theft_confidence() {
        let cfg = credential_only();
        let full = classify_attacks(&props(&["hasCredentialRequest", "hasMissingMX"]), &cfg);
        assert_eq!(full.len(), 1);
        assert_eq!(full[0].confidence, Ratio::from_integer(1));
        let half = classify_attacks(&props(&["hasMissingMX"]), &cfg);
        assert_eq!(half[0].confidence, Ratio::new(1, 2));
        assert!(classify_attacks(&PropertySet::new(), &cfg).is_empty());
    }

    #[test]
    fn existential_required_when_declared() {
        let ax = AttackAxioms { name: "T".into(), universal: vec!["a".into()], existential: vec!["b".into(), "c".into()] };
        let theta = Ratio::new(3, 10);
        assert!(evaluate_axioms(&ax, &props(&["a"]), theta).is_none());
        let m = evaluate_axioms(&ax, &props(&["a", "c"]), theta).unwrap();
        assert_eq!(m.confidence, Ratio::from_integer(1));
        let m = evaluate_axioms(&ax, &props(&["b", "c"]), theta).unwrap();
        assert_eq!(m.confidence, Ratio::new(1, 2));
        assert_eq!(m.satisfied_properties, props(&["b", "c"]));
    }

    #[test]
    fn chain_for_credential_theft() {
        let cfg = credential_only();
        let p = props(&["hasCredentialRequest", "hasMissingMX"]);
        let chain = generate_chain(&p, &classify_attacks(&p, &cfg), &cfg).unwrap();
        assert_eq!(chain.steps.len(), 2);
        assert_eq!(chain.steps[0].rule, Some(RuleId::CredentialRequest));
        assert_eq!(
            chain.rendered,
            "hasCredentialRequest ⊨ ∀-axiom(CredentialTheft) ⇒ CredentialTheft (c=1.00)\n\
             hasMissingMX ⊨ ∀-axiom(CredentialTheft) ⇒ CredentialTheft (c=1.00)"
        );
    }

    #[test]
    fn empty_chain() {
        let chain = generate_chain(&PropertySet::new(), &[], &OntologyConfig::default()).unwrap();
        assert!(chain.steps.is_empty());
        assert_eq!(chain.rendered, EMPTY_CHAIN);
    }

    #[test]
    fn multi_label_chain_grouped_by_descending_confidence() {
        let cfg = OntologyConfig::default();
        let p = props(&["hasCredentialRequest", "hasMissingMX", "hasNoSPF"]);
        let matches = classify_attacks(&p, &cfg);
        let names: Vec<&str> = matches.iter().map(|m| m.attack.as_str()).collect();
        assert_eq!(names, ["CredentialTheft", "HighConfidencePhishing", "PrescriptionFraud"]);
        let chain = generate_chain(&p, &matches, &cfg).unwrap();
        let attacks: Vec<&str> = chain.steps.iter().map(|s| s.attack.as_str()).collect();
        assert_eq!(
            attacks,
            ["CredentialTheft", "CredentialTheft", "HighConfidencePhishing", "HighConfidencePhishing", "PrescriptionFraud"]
        );
        for s in &chain.steps {
            assert!(p.contains(&s.property));
            assert!(matches.iter().any(|m| m.attack == s.attack));
        }
    }

    #[test]
    fn inconsistent_chain_input() {
        let cfg = credential_only();
        let p = props(&["hasCredentialRequest", "hasMissingMX"]);
        let matches = classify_attacks(&p, &cfg);
        let err = generate_chain(&props(&["hasMissingMX"]), &matches, &cfg).unwrap_err();
        assert!(matches!(err, ChainError::InconsistentInput { .. }));
    }

    const UNIVERSE: [&str; 10] = ["p0", "p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8", "p9"];

    fn arb_axioms() -> impl Strategy<Value = Vec<AttackAxioms>> {
        let one = (proptest::sample::subsequence(UNIVERSE.to_vec(), 0..=5), any::<u8>()).prop_filter_map(
            "nonempty",
            |(picked, split)| {
                if picked.is_empty() {
                    return None;
                }
                let cut = split as usize % (picked.len() + 1);
                Some((picked[..cut].to_vec(), picked[cut..].to_vec()))
            },
        );
        proptest::collection::vec(one, 1..6).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (u, e))| AttackAxioms {
                    name: format!("T{i}"),
                    universal: u.into_iter().map(String::from).collect(),
                    existential: e.into_iter().map(String::from).collect(),
                })
                .collect()
        })
    }

    fn cfg_for(axioms: Vec<AttackAxioms>, theta: Ratio<u64>) -> OntologyConfig {
        OntologyConfig {
            theta,
            property_map: RuleId::ALL.iter().zip(UNIVERSE).map(|(r, p)| (*r, p.to_string())).collect(),
            attack_types: axioms,
        }
    }

    /// Exhaustive restatement of the match predicate over plain counts.
    fn oracle(props: &PropertySet, ax: &AttackAxioms, theta: Ratio<u64>) -> Option<(u64, u64)> {
        let mut m_all = 0;
        for p in &ax.universal {
            if props.contains(p) {
                m_all += 1;
            }
        }
        let mut m_ex = 0;
        for p in &ax.existential {
            if props.contains(p) {
                m_ex = 1;
            }
        }
        let den = ax.universal.len() as u64 + if ax.existential.is_empty() { 0 } else { 1 };
        let c = Ratio::new(m_all + m_ex, den);
        let ok = c >= theta && (ax.existential.is_empty() || m_ex == 1) && m_all + m_ex > 0;
        ok.then_some((m_all + m_ex, den))
    }

    proptest! {
        #[test]
        fn matches_brute_force(axioms in arb_axioms(), bits in 0u32..1024, theta_num in 1u64..=10) {
            let theta = Ratio::new(theta_num, 10);
            let p: PropertySet = UNIVERSE.iter().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, s)| s.to_string()).collect();
            let cfg = cfg_for(axioms.clone(), theta);
            let got = classify_attacks(&p, &cfg);
            let mut expected: Vec<(String, Ratio<u64>)> = axioms
                .iter()
                .filter_map(|ax| oracle(&p, ax, theta).map(|(m, d)| (ax.name.clone(), Ratio::new(m, d))))
                .collect();
            expected.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let got_pairs: Vec<(String, Ratio<u64>)> = got.iter().map(|m| (m.attack.clone(), m.confidence)).collect();
            prop_assert_eq!(got_pairs, expected);
            for m in &got {
                prop_assert!(m.confidence >= theta && m.confidence <= Ratio::from_integer(1));
            }
        }

        #[test]
        fn monotone_in_properties(axioms in arb_axioms(), bits in 0u32..1024, extra in 0usize..10) {
            let cfg = cfg_for(axioms, Ratio::new(3, 10));
            let p: PropertySet = UNIVERSE.iter().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, s)| s.to_string()).collect();
            let mut bigger = p.clone();
            bigger.insert(UNIVERSE[extra].to_string());
            let before = classify_attacks(&p, &cfg);
            let after = classify_attacks(&bigger, &cfg);
            for m in &before {
                let found = after.iter().find(|a| a.attack == m.attack);
                prop_assert!(found.is_some());
                prop_assert!(found.unwrap().confidence >= m.confidence);
            }
        }

        #[test]
        fn chain_rendering_deterministic(bits in 0u32..(1 << 15)) {
            let cfg = OntologyConfig::default();
            let p: PropertySet = cfg.property_map.values().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, s)| s.clone()).collect();
            let m = classify_attacks(&p, &cfg);
            let a = generate_chain(&p, &m, &cfg).unwrap();
            let b = generate_chain(&p, &m, &cfg).unwrap();
            prop_assert_eq!(&a, &b);
            for s in &a.steps {
                prop_assert!(p.contains(&s.property));
            }
        }
    }
}

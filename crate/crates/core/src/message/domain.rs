//! Registrable-domain lookup against a bundled public-suffix snapshot.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

const SNAPSHOT: &str = include_str!("../../data/public_suffix.dat");

struct SuffixRules {
    exact: HashSet<String>,
    wildcard: HashSet<String>,
    exception: HashSet<String>,
}

fn rules() -> &'static SuffixRules {
    static RULES: OnceLock<SuffixRules> = OnceLock::new();
    RULES.get_or_init(|| {
        let mut rules = SuffixRules {
            exact: HashSet::new(),
            wildcard: HashSet::new(),
            exception: HashSet::new(),
        };
        for line in SNAPSHOT.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            if let Some(rest) = line.strip_prefix('!') {
                rules.exception.insert(rest.to_ascii_lowercase());
            } else if let Some(rest) = line.strip_prefix("*.") {
                rules.wildcard.insert(rest.to_ascii_lowercase());
            } else {
                rules.exact.insert(line.to_ascii_lowercase());
            }
        }
        rules
    })
}

fn ip_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\d{1,3}(\.\d{1,3}){3}$").unwrap())
}

/// True when `host` is a dotted-quad numeric literal.
pub fn is_ip_literal(host: &str) -> bool {
    ip_pattern().is_match(host)
}

/// Length in labels of the public suffix of `labels` (reversed order not
/// required; `labels` is the host split on dots, left to right).
fn suffix_len(labels: &[&str]) -> usize {
    let rules = rules();
    let n = labels.len();
    let mut best = 1; // implicit `*` rule
    for start in 0..n {
        let candidate = labels[start..].join(".");
        let len = n - start;
        if rules.exception.contains(&candidate) {
            // Exception rules win outright; the suffix is one label shorter.
            return len - 1;
        }
        if rules.exact.contains(&candidate) && len > best {
            best = len;
        }
        if start + 1 < n {
            let parent = labels[start + 1..].join(".");
            if rules.wildcard.contains(&parent) && len > best {
                best = len;
            }
        }
    }
    best
}

/// Registrable domain (public suffix plus one label) of a host name.
///
/// Returns `None` for IP literals, empty hosts, and hosts that are themselves
/// a public suffix.
pub fn registrable_domain(host: &str) -> Option<String> {
    let host = host.trim().trim_end_matches('.').to_ascii_lowercase();
    if host.is_empty() || is_ip_literal(&host) {
        return None;
    }
    let labels: Vec<&str> = host.split('.').collect();
    if labels.iter().any(|l| l.is_empty()) {
        return None;
    }
    let suffix = suffix_len(&labels);
    if labels.len() <= suffix {
        return None;
    }
    Some(labels[labels.len() - suffix - 1..].join("."))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_suffixes() {
        assert_eq!(registrable_domain("mail.example.com").as_deref(), Some("example.com"));
        assert_eq!(registrable_domain("Example.COM").as_deref(), Some("example.com"));
        assert_eq!(registrable_domain("a.b.example.co.uk").as_deref(), Some("example.co.uk"));
        assert_eq!(registrable_domain("mypatient-portal.tk").as_deref(), Some("mypatient-portal.tk"));
        assert_eq!(registrable_domain("com"), None);
        assert_eq!(registrable_domain("co.uk"), None);
    }

    #[test]
    fn unknown_tld_uses_default_rule() {
        assert_eq!(registrable_domain("x.y.example.zz").as_deref(), Some("example.zz"));
    }

    #[test]
    fn wildcard_and_exception() {
        // *.ck makes every second-level label under ck a suffix...
        assert_eq!(registrable_domain("shop.foo.ck").as_deref(), Some("shop.foo.ck"));
        assert_eq!(registrable_domain("foo.ck"), None);
        // ...except www.ck.
        assert_eq!(registrable_domain("www.ck").as_deref(), Some("www.ck"));
        assert_eq!(registrable_domain("a.www.ck").as_deref(), Some("www.ck"));
    }

    #[test]
    fn hosting_platforms() {
        assert_eq!(registrable_domain("evil.github.io").as_deref(), Some("evil.github.io"));
    }

    #[test]
    fn ip_literals() {
        assert!(is_ip_literal("198.45.123.67"));
        assert!(!is_ip_literal("198.45.123"));
        assert!(!is_ip_literal("example.com"));
        assert_eq!(registrable_domain("198.45.123.67"), None);
    }
}

//! Daily deployment cost and ROI bounds.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decision::ModesConfig;
use crate::{Error, Result};

const DEFAULT_COSTS: &str = include_str!("../assets/costs.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewRateSource {
    Measured,
    #[default]
    Configured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    pub daily_emails: u64,
    pub base_rate: f64,
    pub attack_success_rate: f64,
    pub penalty_per_breach: f64,
    /// Share of all email routed to an analyst.
    pub review_rate: f64,
    #[serde(default)]
    pub review_rate_source: ReviewRateSource,
    pub analyst_rate_per_hour: f64,
    pub minutes_per_review: f64,
    pub fp_cost_each: f64,
    /// Flat per-day charge, not scaled by volume.
    pub api_cost_per_day: f64,
    pub fpr: f64,
    pub recall: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams::from_toml_str(DEFAULT_COSTS).expect("bundled cost params are valid")
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("base_rate", self.base_rate),
            ("attack_success_rate", self.attack_success_rate),
            ("review_rate", self.review_rate),
            ("fpr", self.fpr),
            ("recall", self.recall),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} is not in [0, 1]")));
            }
        }
        let amounts = [
            ("penalty_per_breach", self.penalty_per_breach),
            ("analyst_rate_per_hour", self.analyst_rate_per_hour),
            ("minutes_per_review", self.minutes_per_review),
            ("fp_cost_each", self.fp_cost_each),
            ("api_cost_per_day", self.api_cost_per_day),
        ];
        for (name, v) in amounts {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be a nonnegative number")));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let p: CostParams = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn with_operating_point(mut self, recall: f64, fpr: f64) -> Self {
        self.recall = recall;
        self.fpr = fpr;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub api_cost: f64,
    pub labor_cost: f64,
    pub fp_cost: f64,
    pub total_cost: f64,
    pub attacks_detected: f64,
    pub attacks_missed: f64,
    pub breaches_prevented: f64,
    pub missed_breach_cost: f64,
    pub risk_mitigated: f64,
    pub net_benefit: f64,
    pub roi_optimistic: f64,
    pub roi_conservative: f64,
}

/// Counts are expected values and may be fractional.
pub fn compute_roi(p: &CostParams) -> Result<CostReport> {
    p.validate()?;
    let n = p.daily_emails as f64;
    let attacks = n * p.base_rate;
    let attacks_detected = attacks * p.recall;
    let attacks_missed = attacks - attacks_detected;
    let breaches_prevented = attacks_detected * p.attack_success_rate;
    let risk_mitigated = breaches_prevented * p.penalty_per_breach;
    let missed_breach_cost = attacks_missed * p.attack_success_rate * p.penalty_per_breach;

    let labor_cost = n * p.review_rate * (p.minutes_per_review / 60.0) * p.analyst_rate_per_hour;
    let fp_cost = n * (1.0 - p.base_rate) * p.fpr * p.fp_cost_each;
    let api_cost = p.api_cost_per_day;
    let total_cost = api_cost + labor_cost + fp_cost;
    if total_cost <= 0.0 {
        return Err(Error::ZeroCost);
    }
    let net_benefit = risk_mitigated - total_cost;
    Ok(CostReport {
        api_cost,
        labor_cost,
        fp_cost,
        total_cost,
        attacks_detected,
        attacks_missed,
        breaches_prevented,
        missed_breach_cost,
        risk_mitigated,
        net_benefit,
        roi_optimistic: net_benefit / total_cost,
        roi_conservative: (risk_mitigated - missed_breach_cost - total_cost) / total_cost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEconomics {
    pub mode: String,
    pub recall: f64,
    pub fpr: f64,
    pub report: CostReport,
}

/// One report per `(name, recall, fpr)` operating point.
pub fn per_mode_economics(points: &[(String, f64, f64)], p: &CostParams) -> Result<Vec<ModeEconomics>> {
    points
        .iter()
        .map(|(mode, recall, fpr)| {
            let report = compute_roi(&p.with_operating_point(*recall, *fpr))?;
            Ok(ModeEconomics { mode: mode.clone(), recall: *recall, fpr: *fpr, report })
        })
        .collect()
}

/// Operating points of every mode carrying a reference recall; a missing
/// reference FPR falls back to `default_fpr`.
pub fn reference_points(modes: &ModesConfig, default_fpr: f64) -> Vec<(String, f64, f64)> {
    modes
        .modes
        .iter()
        .filter_map(|m| m.reference_recall.map(|r| (m.name.clone(), r, m.reference_fpr.unwrap_or(default_fpr))))
        .collect()
}

/// Whole currency units with thousands separators; amounts under 100 keep cents.
fn money(v: f64) -> String {
    let neg = v < 0.0;
    if v.abs() < 100.0 {
        let s = format!("{:.2}", v.abs());
        let s = s.strip_suffix(".00").unwrap_or(&s);
        return format!("{}${s}", if neg { "-" } else { "" });
    }
    let digits = format!("{:.0}", v.abs());
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    format!("{}${out}", if neg { "-" } else { "" })
}

pub fn render_cost_markdown(p: &CostParams, r: &CostReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "| Component | Value |");
    let _ = writeln!(s, "|---|---:|");
    let _ = writeln!(s, "| API cost | {} |", money(r.api_cost));
    let _ = writeln!(
        s,
        "| Analyst review ({:.1}% of {} emails) | {} |",
        p.review_rate * 100.0,
        p.daily_emails,
        money(r.labor_cost)
    );
    let _ = writeln!(s, "| False-positive impact | {} |", money(r.fp_cost));
    let _ = writeln!(s, "| **Total daily cost** | **{}** |", money(r.total_cost));
    let _ = writeln!(s, "| Attacks detected | {:.0} |", r.attacks_detected);
    let _ = writeln!(s, "| Breaches prevented | {:.1} |", r.breaches_prevented);
    let _ = writeln!(s, "| Risk mitigated | {} |", money(r.risk_mitigated));
    let _ = writeln!(s, "| Missed-breach cost | {} |", money(r.missed_breach_cost));
    let _ = writeln!(s, "| Net benefit | {} |", money(r.net_benefit));
    let _ = writeln!(s, "| ROI (optimistic) | {:.1}x |", r.roi_optimistic);
    let _ = writeln!(s, "| ROI (conservative) | {:.1}x |", r.roi_conservative);
    s
}

pub fn render_modes_markdown(rows: &[ModeEconomics]) -> String {
    let mut s = String::from("| Mode | Recall | Detected | Cost/day | ROI | Net benefit |\n|---|---:|---:|---:|---:|---:|\n");
    for m in rows {
        let _ = writeln!(
            s,
            "| {} | {:.3} | {:.0} | {} | {:.1}x | {} |",
            m.mode,
            m.recall,
            m.report.attacks_detected,
            money(m.report.total_cost),
            m.report.roi_optimistic,
            money(m.report.net_benefit)
        );
    }
    s
}
